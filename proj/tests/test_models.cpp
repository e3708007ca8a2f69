#include <gtest/gtest.h>

#include <cmath>
#include <variant>

#include "lssa/io.hpp"
#include "lssa/models.hpp"
#include "test_support.hpp"

namespace lssa {
namespace {

using testing::TempDir;

const Dataset& shared_dataset() {
  static const Dataset d = testing::tiny_dataset(24, 3);
  return d;
}

TrainConfig quick_train(Architecture arch, std::uint64_t seed, int epochs = 2) {
  TrainConfig c;
  c.arch = arch;
  c.seed = seed;
  c.epochs = epochs;
  c.batch = 8;
  return c;
}

const EncoderPair& briefly_trained(Architecture arch) {
  static const EncoderPair conv = train_contrastive(shared_dataset(), quick_train(Architecture::kConv, 0)).model;
  static const EncoderPair patch = train_contrastive(shared_dataset(), quick_train(Architecture::kPatch, 0)).model;
  return arch == Architecture::kConv ? conv : patch;
}

double image_loss(const EncoderPair& m, const Image& v, const EmbeddingSet& texts) {
  return loss(LossSpec{}, m.encode_image(v), texts);
}

class BothArchitectures : public ::testing::TestWithParam<Architecture> {};

INSTANTIATE_TEST_SUITE_P(Models, BothArchitectures, ::testing::Values(Architecture::kConv, Architecture::kPatch),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST_P(BothArchitectures, EncodingIsDeterministicAndUnitNorm) {
  const EncoderPair& m = briefly_trained(GetParam());
  const auto& item = shared_dataset().items[0];
  const Embedding a = m.encode_image(item.image);
  const Embedding b = m.encode_image(item.image);
  EXPECT_TRUE(a == b);
  EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  const Embedding t1 = m.encode_text(item.captions[0]);
  const Embedding t2 = m.encode_text(item.captions[0]);
  EXPECT_TRUE(t1 == t2);
  EXPECT_NEAR(t1.norm(), 1.0, 1e-12);
  EXPECT_EQ(a.size(), t1.size());
  EXPECT_EQ(a.size(), m.embed_dim());
}

TEST_P(BothArchitectures, AllZerosImageIsFinite) {
  const EncoderPair& m = briefly_trained(GetParam());
  const Embedding e = m.encode_image(Image(3, 32, 32, 0.0));
  EXPECT_TRUE(e.allFinite());
}

TEST_P(BothArchitectures, RejectsBadInputs) {
  const EncoderPair& m = briefly_trained(GetParam());
  EXPECT_LSSA_ERROR(m.encode_image(Image(3, 16, 32)), ErrorCode::kShapeMismatch);
  EXPECT_LSSA_ERROR(m.encode_image(Image(1, 32, 32)), ErrorCode::kShapeMismatch);
  EXPECT_LSSA_ERROR(m.encode_text({}), ErrorCode::kInvalidArgument);
  EXPECT_LSSA_ERROR(m.encode_text({0, m.config().vocab_size}), ErrorCode::kInvalidArgument);
  EXPECT_LSSA_ERROR(m.encode_text(TokenSequence(13, 1)), ErrorCode::kInvalidArgument);
}

TEST_P(BothArchitectures, InputGradientMatchesCentralDifferences) {
  const EncoderPair& m = briefly_trained(GetParam());
  const auto& item = shared_dataset().items[5];
  const EmbeddingSet texts = m.encode_texts(item.captions);
  const Image v = item.image;
  double j = 0.0;
  const Image g = m.input_gradient(v, texts, &j);
  ASSERT_TRUE(g.same_shape(v));
  EXPECT_NEAR(j, image_loss(m, v, texts), 1e-12);

  const double h = 1e-3;
  Rng rng(42);
  int checked = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(v.size())));
    Image plus = v, minus = v;
    plus.array()[i] += h;
    minus.array()[i] -= h;
    const double fd = (image_loss(m, plus, texts) - image_loss(m, minus, texts)) / (2.0 * h);
    const double analytic = g.array()[i];
    const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-12});
    worst = std::max(worst, rel);
    EXPECT_LT(rel, 1e-3) << "coordinate " << i << ": analytic " << analytic << " vs fd " << fd;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST_P(BothArchitectures, CheckpointRoundTripIsBitIdentical) {
  const EncoderPair& m = briefly_trained(GetParam());
  TempDir dir("ckpt");
  Checkpoint ck{m, quick_train(GetParam(), 0), 0, {}};
  const Embedding probe = m.encode_image(shared_dataset().items[0].image);
  ck.probe_embedding.assign(probe.data(), probe.data() + probe.size());
  save_checkpoint(ck, dir.path() / "m.ckpt");
  const Checkpoint back = load_checkpoint(dir.path() / "m.ckpt", shared_dataset().vocab);
  EXPECT_EQ(back.model.architecture(), GetParam());
  EXPECT_EQ(back.model.vocab_hash(), m.vocab_hash());
  EXPECT_EQ(back.probe_pair_id, 0);
  EXPECT_EQ(back.train.epochs, 2);
  for (const auto& item : shared_dataset().items) {
    EXPECT_TRUE(back.model.encode_image(item.image) == m.encode_image(item.image));
    EXPECT_TRUE(back.model.encode_text(item.captions[1]) == m.encode_text(item.captions[1]));
  }
  const Embedding reloaded_probe = back.model.encode_image(shared_dataset().items[0].image);
  for (Eigen::Index k = 0; k < reloaded_probe.size(); ++k) {
    EXPECT_NEAR(reloaded_probe[k], back.probe_embedding[static_cast<std::size_t>(k)], 1e-6);
  }
  // Saving the reloaded model reproduces the file byte for byte.
  save_checkpoint(back, dir.path() / "again.ckpt");
  EXPECT_EQ(io::read_bytes(dir.path() / "m.ckpt"), io::read_bytes(dir.path() / "again.ckpt"));
}

TEST(Loss, ParallelAntiparallelAndMixedSet) {
  const LossSpec spec;
  Embedding a(2);
  a << 1.0, 0.0;
  EXPECT_NEAR(loss(spec, a, EmbeddingSet(a)), 0.0, 1e-15);
  EXPECT_NEAR(loss(spec, a, EmbeddingSet(-a)), 2.0, 1e-15);
  EmbeddingSet set(2, 2);
  set << 0.0, 1.0,
         1.0, 0.0;
  EXPECT_NEAR(loss(spec, a, set), 0.5, 1e-15);
}

TEST(Loss, ZeroNormIsASingularity) {
  Embedding a = Embedding::Zero(3);
  Embedding b = Embedding::Ones(3);
  EXPECT_LSSA_ERROR(loss(LossSpec{}, a, EmbeddingSet(b)), ErrorCode::kSingularity);
  EXPECT_LSSA_ERROR(loss(LossSpec{}, b, EmbeddingSet(a)), ErrorCode::kSingularity);
  EXPECT_LSSA_ERROR(normalize(a), ErrorCode::kSingularity);
}

TEST(Loss, BoundsAndZeroOnlyWhenPositivelyParallel) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    Embedding a(4), b(4);
    for (int k = 0; k < 4; ++k) {
      a[k] = rng.normal();
      b[k] = rng.normal();
    }
    const double j = loss(LossSpec{}, a, EmbeddingSet(b));
    EXPECT_GE(j, 0.0);
    EXPECT_LE(j, 2.0);
    EXPECT_GT(j, 1e-9);
    EXPECT_NEAR(loss(LossSpec{}, a, EmbeddingSet(3.7 * a)), 0.0, 1e-12);
  }
}

TEST(Loss, GradientMatchesCentralDifferences) {
  Rng rng(8);
  Embedding a(5);
  EmbeddingSet set(5, 3);
  for (int k = 0; k < 5; ++k) a[k] = rng.normal();
  for (Eigen::Index k = 0; k < set.size(); ++k) set.data()[k] = rng.normal();
  const Embedding g = loss_gradient(LossSpec{}, a, set);
  for (int k = 0; k < 5; ++k) {
    Embedding p = a, m = a;
    p[k] += 1e-6;
    m[k] -= 1e-6;
    const double fd = (loss(LossSpec{}, p, set) - loss(LossSpec{}, m, set)) / 2e-6;
    EXPECT_NEAR(g[k], fd, 1e-7);
  }
}

TEST(InputGradient, ConstantImageTowerGivesZeroGradient) {
  EncoderPair m = testing::init_model(Architecture::kConv, 1, shared_dataset().vocab);
  // Zero the last projection so the image embedding is its bias alone.
  auto& layers = m.image_net().layers();
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (auto* dense = std::get_if<nn::Dense>(&*it)) {
      dense->weight.setZero();
      dense->bias.setConstant(0.25);
      break;
    }
  }
  const auto& item = shared_dataset().items[2];
  const Image g = input_gradient(m, LossSpec{}, item.image, m.encode_texts(item.captions));
  EXPECT_TRUE(g.same_shape(item.image));
  EXPECT_EQ(g.array().abs().maxCoeff(), 0.0);
}

TEST(Train, ZeroEpochsReturnsTheInitializedPair) {
  const TrainResult r = train_contrastive(shared_dataset(), quick_train(Architecture::kConv, 4, 0));
  EXPECT_TRUE(r.epoch_losses.empty());
  ModelConfig config;
  config.seed = 4;
  const EncoderPair fresh = EncoderPair::initialize(config, shared_dataset().vocab);
  const auto& v = shared_dataset().items[0].image;
  EXPECT_TRUE(r.model.encode_image(v) == fresh.encode_image(v));
}

TEST(Train, SameConfigTwiceGivesIdenticalCheckpoints) {
  TempDir dir("train_det");
  for (const char* name : {"a.ckpt", "b.ckpt"}) {
    const TrainConfig c = quick_train(Architecture::kPatch, 9, 2);
    save_checkpoint({train_contrastive(shared_dataset(), c).model, c, 0, {}}, dir.path() / name);
  }
  EXPECT_EQ(io::sha256_hex(io::read_bytes(dir.path() / "a.ckpt")),
            io::sha256_hex(io::read_bytes(dir.path() / "b.ckpt")));
}

TEST(Train, DifferentSeedsGiveDifferentModels) {
  const auto a = train_contrastive(shared_dataset(), quick_train(Architecture::kConv, 1, 1)).model;
  const auto b = train_contrastive(shared_dataset(), quick_train(Architecture::kConv, 2, 1)).model;
  const auto& v = shared_dataset().items[0].image;
  EXPECT_FALSE(a.encode_image(v) == b.encode_image(v));
}

TEST(Train, LossFallsOnATinySet) {
  TrainConfig c = quick_train(Architecture::kConv, 0, 12);
  c.augment = false;
  const TrainResult r = train_contrastive(shared_dataset(), c);
  ASSERT_EQ(r.epoch_losses.size(), 12u);
  for (double l : r.epoch_losses) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
}

TEST(Train, RejectsDegenerateConfigs) {
  EXPECT_LSSA_ERROR(train_contrastive(Dataset{}, quick_train(Architecture::kConv, 0)), ErrorCode::kInvalidArgument);
  TrainConfig c = quick_train(Architecture::kConv, 0);
  c.batch = 1;
  EXPECT_LSSA_ERROR(train_contrastive(shared_dataset(), c), ErrorCode::kInvalidArgument);
}

TEST(Train, HugeLearningRateDivergenceIsReported) {
  TrainConfig c = quick_train(Architecture::kConv, 0, 30);
  c.learning_rate = 1e6;
  c.temperature = 1e-6;
  try {
    train_contrastive(shared_dataset(), c);
    GTEST_SKIP() << "training survived an absurd learning rate; divergence path not reached";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumericalFailure);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Checkpoint, VersionMismatch) {
  TempDir dir("ckpt_version");
  const TrainConfig c = quick_train(Architecture::kConv, 0, 0);
  save_checkpoint({train_contrastive(shared_dataset(), c).model, c, 0, {}}, dir.path() / "m.ckpt");
  auto bytes = io::read_bytes(dir.path() / "m.ckpt");
  ASSERT_EQ(bytes[10], '1');
  bytes[10] = '2';
  io::write_bytes(dir.path() / "m.ckpt", bytes);
  EXPECT_LSSA_ERROR(load_checkpoint(dir.path() / "m.ckpt"), ErrorCode::kVersionMismatch);
}

TEST(Checkpoint, VocabularyMismatchNamesBothHashes) {
  TempDir dir("ckpt_vocab");
  const TrainConfig c = quick_train(Architecture::kConv, 0, 0);
  const EncoderPair m = train_contrastive(shared_dataset(), c).model;
  save_checkpoint({m, c, 0, {}}, dir.path() / "m.ckpt");
  std::vector<std::string> tokens = shared_dataset().vocab.tokens();
  tokens.back() += "s";
  const Vocabulary other(tokens, shared_dataset().vocab.classes());
  const Error e = testing::catch_error([&] { load_checkpoint(dir.path() / "m.ckpt", other); });
  EXPECT_EQ(e.code(), ErrorCode::kVocabularyMismatch);
  EXPECT_NE(std::string(e.what()).find(m.vocab_hash()), std::string::npos);
  EXPECT_NE(std::string(e.what()).find(other.hash()), std::string::npos);
}

TEST(Checkpoint, MissingFile) {
  EXPECT_LSSA_ERROR(load_checkpoint("/nonexistent/m.ckpt"), ErrorCode::kMissingArtifact);
}

}  // namespace
}  // namespace lssa
