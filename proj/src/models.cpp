#include "lssa/models.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>
#include <sstream>

#include "lssa/error.hpp"
#include "lssa/io.hpp"
#include "lssa/rng.hpp"

namespace lssa {
namespace {

using nlohmann::json;
using nn::FeatureMap;
using nn::Matrix;

constexpr int kTokenFeatures = 16;
constexpr int kTextHidden = 128;

nn::Sequential make_conv_tower(const ModelConfig& c, Rng& rng) {
  require(c.height % 8 == 0 && c.width % 8 == 0, ErrorCode::kInvalidArgument,
          "conv tower needs image dimensions divisible by 8");
  const int flat = (c.height / 4) * (c.width / 4) * 16;
  return nn::Sequential({
      nn::make_conv(c.channels, 16, 3, rng),
      nn::Silu{},
      nn::AvgPool2{},
      nn::make_conv(16, 32, 3, rng),
      nn::Silu{},
      nn::AvgPool2{},
      nn::make_conv(32, 16, 1, rng),
      nn::Silu{},
      nn::Flatten{},
      nn::make_dense(flat, 128, rng),
      nn::Silu{},
      nn::make_dense(128, c.embed_dim, rng),
  });
}

nn::Sequential make_patch_tower(const ModelConfig& c, Rng& rng) {
  constexpr int kPatch = 8;
  require(c.height % kPatch == 0 && c.width % kPatch == 0, ErrorCode::kInvalidArgument,
          "patch tower needs image dimensions divisible by 8");
  const int patches = (c.height / kPatch) * (c.width / kPatch);
  constexpr int kPatchFeatures = 48;
  return nn::Sequential({
      nn::Patchify{kPatch},
      nn::make_dense(c.channels * kPatch * kPatch, kPatchFeatures, rng),
      nn::Silu{},
      nn::Flatten{},
      nn::make_dense(patches * kPatchFeatures, 128, rng),
      nn::Silu{},
      nn::make_dense(128, c.embed_dim, rng),
  });
}

Embedding row_of(const FeatureMap& f) { return f.values.row(0).transpose(); }

FeatureMap as_feature(const Embedding& e) { return {e.transpose(), 1, 1}; }

TokenSequence sample_caption(const CaptionedImage& item, Rng& rng) {
  return item.captions[rng.below(item.captions.size())];
}

CaptionedImage random_augmentation(const CaptionedImage& item, const Vocabulary& vocab, Rng& rng) {
  Augmentation aug;
  for (int i = 3; i > 0; --i) std::swap(aug.color_permutation[i], aug.color_permutation[rng.below(i + 1)]);
  aug.mirror = rng.below(2) == 1;
  const auto occupied = occupied_cells(item.image);
  int row_lo = 2, row_hi = 0, col_lo = 2, col_hi = 0;
  for (int cell = 0; cell < 9; ++cell) {
    if (!occupied[cell]) continue;
    const int col = aug.mirror ? 2 - cell % 3 : cell % 3;
    row_lo = std::min(row_lo, cell / 3);
    row_hi = std::max(row_hi, cell / 3);
    col_lo = std::min(col_lo, col);
    col_hi = std::max(col_hi, col);
  }
  if (row_lo <= row_hi) {
    aug.shift_rows = static_cast<int>(rng.below(static_cast<std::uint64_t>(3 - (row_hi - row_lo)))) - row_lo;
    aug.shift_cols = static_cast<int>(rng.below(static_cast<std::uint64_t>(3 - (col_hi - col_lo)))) - col_lo;
  }
  return augment_pair(item, vocab, aug);
}

std::vector<std::vector<std::int64_t>> parameter_shapes(const EncoderPair& model) {
  std::vector<std::vector<std::int64_t>> shapes;
  for (const Matrix* p : model.parameters()) shapes.push_back({p->rows(), p->cols()});
  return shapes;
}

json train_config_json(const TrainConfig& c) {
  return {{"arch", to_string(c.arch)},
          {"seed", c.seed},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"learning_rate", c.learning_rate},
          {"embed_dim", c.embed_dim},
          {"temperature", c.temperature},
          {"augment", c.augment}};
}

}  // namespace

std::string_view to_string(Architecture arch) { return arch == Architecture::kConv ? "conv" : "patch"; }

Architecture parse_architecture(std::string_view name) {
  if (name == "conv") return Architecture::kConv;
  if (name == "patch") return Architecture::kPatch;
  fail(ErrorCode::kInvalidArgument, "unknown architecture '" + std::string(name) + "'");
}

EncoderPair EncoderPair::initialize(const ModelConfig& config, const Vocabulary& vocab) {
  return initialize(config, vocab.size(), vocab.hash());
}

EncoderPair EncoderPair::initialize(const ModelConfig& config, int vocab_size, std::string vocab_hash) {
  require(config.embed_dim > 0, ErrorCode::kInvalidArgument, "embed_dim must be positive");
  require(vocab_size > 0, ErrorCode::kInvalidArgument, "vocabulary must be nonempty");
  EncoderPair pair;
  pair.config_ = config;
  pair.config_.vocab_size = vocab_size;
  pair.vocab_hash_ = std::move(vocab_hash);
  Rng rng(derive_seed(config.seed, "init"));
  pair.image_net_ = config.arch == Architecture::kConv ? make_conv_tower(pair.config_, rng)
                                                        : make_patch_tower(pair.config_, rng);
  pair.token_table_ = Matrix(vocab_size, kTokenFeatures);
  for (Eigen::Index i = 0; i < pair.token_table_.size(); ++i) pair.token_table_.data()[i] = rng.normal();
  pair.position_table_ = Matrix(config.max_tokens, kTokenFeatures);
  for (Eigen::Index i = 0; i < pair.position_table_.size(); ++i) {
    pair.position_table_.data()[i] = 0.5 * rng.normal();
  }
  pair.text_head_ = nn::Sequential({
      nn::make_dense(config.max_tokens * kTokenFeatures, kTextHidden, rng),
      nn::Silu{},
      nn::make_dense(kTextHidden, config.embed_dim, rng),
  });
  return pair;
}

std::string EncoderPair::tag() const {
  return std::string(to_string(config_.arch)) + "_s" + std::to_string(config_.seed);
}

void EncoderPair::check_image(const Image& v) const {
  require(v.channels() == config_.channels && v.height() == config_.height && v.width() == config_.width,
          ErrorCode::kShapeMismatch,
          "image shape " + v.shape_string() + " does not match model input " + std::to_string(config_.channels) +
              "x" + std::to_string(config_.height) + "x" + std::to_string(config_.width));
}

void EncoderPair::check_tokens(const TokenSequence& t) const {
  require(!t.empty(), ErrorCode::kInvalidArgument, "cannot encode an empty token sequence");
  require(static_cast<int>(t.size()) <= config_.max_tokens, ErrorCode::kInvalidArgument,
          "token sequence of length " + std::to_string(t.size()) + " exceeds max_tokens " +
              std::to_string(config_.max_tokens));
  for (TokenId id : t) {
    require(id >= 0 && id < config_.vocab_size, ErrorCode::kInvalidArgument,
            "token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(config_.vocab_size));
  }
}

FeatureMap EncoderPair::image_features(const Image& v) const {
  return {v.matrix(), v.height(), v.width()};
}

Embedding EncoderPair::image_forward(const Image& v, nn::Tape& tape) const {
  check_image(v);
  image_net_.forward(image_features(v), tape);
  return row_of(tape.output());
}

Embedding EncoderPair::text_forward(const TokenSequence& t, TextTape& tape) const {
  check_tokens(t);
  tape.tokens = t;
  const auto length = static_cast<Eigen::Index>(t.size());
  tape.pooled_inputs.resize(length, kTokenFeatures);
  for (Eigen::Index i = 0; i < length; ++i) {
    tape.pooled_inputs.row(i) = (token_table_.row(t[static_cast<std::size_t>(i)]) + position_table_.row(i)).array().tanh();
  }
  // Slots past the caption length stay zero.
  FeatureMap slots{Matrix::Zero(1, config_.max_tokens * kTokenFeatures), 1, 1};
  for (Eigen::Index i = 0; i < length; ++i) slots.values.middleCols(i * kTokenFeatures, kTokenFeatures) = tape.pooled_inputs.row(i);
  const FeatureMap& pooled = slots;
  text_head_.forward(pooled, tape.head);
  return row_of(tape.head.output());
}

Image EncoderPair::image_backward(const nn::Tape& tape, const Embedding& grad_out, std::vector<Matrix>* grads) const {
  std::vector<Matrix> local;
  std::vector<Matrix>* net_grads = nullptr;
  const std::size_t count = image_net_.parameters().size();
  if (grads != nullptr) {
    local.assign(std::make_move_iterator(grads->begin()), std::make_move_iterator(grads->begin() + count));
    net_grads = &local;
  }
  const FeatureMap g = image_net_.backward(tape, as_feature(grad_out), net_grads);
  if (grads != nullptr) std::move(local.begin(), local.end(), grads->begin());
  Image out(config_.channels, config_.height, config_.width);
  out.matrix() = g.values;
  return out;
}

void EncoderPair::text_backward(const TextTape& tape, const Embedding& grad_out, std::vector<Matrix>* grads) const {
  const std::size_t image_count = image_net_.parameters().size();
  std::vector<Matrix> head_grads;
  std::vector<Matrix>* head_ptr = nullptr;
  if (grads != nullptr) {
    head_grads.assign(std::make_move_iterator(grads->begin() + image_count + 2), std::make_move_iterator(grads->end()));
    head_ptr = &head_grads;
  }
  const FeatureMap d_pooled = text_head_.backward(tape.head, as_feature(grad_out), head_ptr);
  if (grads == nullptr) return;
  std::move(head_grads.begin(), head_grads.end(), grads->begin() + image_count + 2);
  Matrix& d_tokens = (*grads)[image_count];
  Matrix& d_positions = (*grads)[image_count + 1];
  for (Eigen::Index i = 0; i < tape.pooled_inputs.rows(); ++i) {
    const Eigen::RowVectorXd d_pre = d_pooled.values.middleCols(i * kTokenFeatures, kTokenFeatures).array() *
                                     (1.0 - tape.pooled_inputs.row(i).array().square());
    d_tokens.row(tape.tokens[static_cast<std::size_t>(i)]) += d_pre;
    d_positions.row(i) += d_pre;
  }
}

Embedding EncoderPair::encode_image(const Image& v) const {
  check_image(v);
  return normalize(row_of(image_net_.forward(image_features(v))));
}

Embedding EncoderPair::encode_text(const TokenSequence& t) const {
  TextTape tape;
  return normalize(text_forward(t, tape));
}

EmbeddingSet EncoderPair::encode_texts(const std::vector<TokenSequence>& captions) const {
  EmbeddingSet out(config_.embed_dim, static_cast<Eigen::Index>(captions.size()));
  for (std::size_t k = 0; k < captions.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = encode_text(captions[k]);
  return out;
}

EmbeddingSet EncoderPair::encode_images(const std::vector<Image>& images) const {
  EmbeddingSet out(config_.embed_dim, static_cast<Eigen::Index>(images.size()));
  for (std::size_t k = 0; k < images.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = encode_image(images[k]);
  return out;
}

Image EncoderPair::input_gradient(const Image& v, const EmbeddingSet& texts, double* loss_out) const {
  nn::Tape tape;
  const Embedding z = image_forward(v, tape);
  const Embedding e = normalize(z);
  const LossSpec spec;
  if (loss_out != nullptr) *loss_out = loss(spec, e, texts);
  const Embedding grad_e = loss_gradient(spec, e, texts);
  return image_backward(tape, normalize_backward(z, grad_e), nullptr);
}

std::vector<Matrix*> EncoderPair::parameters() {
  std::vector<Matrix*> params = image_net_.parameters();
  params.push_back(&token_table_);
  params.push_back(&position_table_);
  for (Matrix* p : text_head_.parameters()) params.push_back(p);
  return params;
}

std::vector<const Matrix*> EncoderPair::parameters() const {
  std::vector<const Matrix*> params = image_net_.parameters();
  params.push_back(&token_table_);
  params.push_back(&position_table_);
  for (const Matrix* p : text_head_.parameters()) params.push_back(p);
  return params;
}

Embedding normalize(const Embedding& z) {
  const double norm = z.norm();
  require(norm > 0.0 && std::isfinite(norm), ErrorCode::kSingularity, "cannot normalize a zero-norm embedding");
  return z / norm;
}

Embedding normalize_backward(const Embedding& z, const Embedding& grad_e) {
  const double norm = z.norm();
  require(norm > 0.0, ErrorCode::kSingularity, "zero-norm embedding in normalize backward");
  const Embedding e = z / norm;
  return (grad_e - e * e.dot(grad_e)) / norm;
}

double loss(const LossSpec&, const Embedding& e_img, const EmbeddingSet& e_txt) {
  require(e_txt.cols() > 0, ErrorCode::kInvalidArgument, "loss needs at least one text embedding");
  require(e_txt.rows() == e_img.size(), ErrorCode::kShapeMismatch, "embedding dimensions differ");
  const double a = e_img.norm();
  require(a > 0.0, ErrorCode::kSingularity, "zero-norm image embedding");
  double total = 0.0;
  for (Eigen::Index k = 0; k < e_txt.cols(); ++k) {
    const double b = e_txt.col(k).norm();
    require(b > 0.0, ErrorCode::kSingularity, "zero-norm text embedding");
    const double cosine = std::clamp(e_img.dot(e_txt.col(k)) / (a * b), -1.0, 1.0);
    total += 1.0 - cosine;
  }
  return total / static_cast<double>(e_txt.cols());
}

Embedding loss_gradient(const LossSpec&, const Embedding& e_img, const EmbeddingSet& e_txt) {
  require(e_txt.cols() > 0, ErrorCode::kInvalidArgument, "loss needs at least one text embedding");
  const double a = e_img.norm();
  require(a > 0.0, ErrorCode::kSingularity, "zero-norm image embedding");
  Embedding grad = Embedding::Zero(e_img.size());
  for (Eigen::Index k = 0; k < e_txt.cols(); ++k) {
    const double b = e_txt.col(k).norm();
    require(b > 0.0, ErrorCode::kSingularity, "zero-norm text embedding");
    const double dot = e_img.dot(e_txt.col(k));
    // d/da of -(a.b)/(|a||b|)
    grad -= e_txt.col(k) / (a * b) - e_img * (dot / (a * a * a * b));
  }
  return grad / static_cast<double>(e_txt.cols());
}

Image input_gradient(const EncoderPair& pair, const LossSpec&, const Image& v, const EmbeddingSet& texts) {
  return pair.input_gradient(v, texts);
}

TrainResult train_contrastive(const Dataset& dataset, const TrainConfig& config) {
  require(!dataset.items.empty() && !dataset.train_ids.empty(), ErrorCode::kInvalidArgument,
          "training needs a nonempty training split");
  require(config.batch >= 2, ErrorCode::kInvalidArgument, "contrastive batch must hold at least 2 pairs");
  require(config.epochs >= 0, ErrorCode::kInvalidArgument, "epochs must be non-negative");
  const Image& probe = dataset.items.front().image;
  ModelConfig model_config;
  model_config.arch = config.arch;
  model_config.seed = config.seed;
  model_config.embed_dim = config.embed_dim;
  model_config.channels = probe.channels();
  model_config.height = probe.height();
  model_config.width = probe.width();

  TrainResult result{EncoderPair::initialize(model_config, dataset.vocab), {}};
  EncoderPair& model = result.model;
  nn::Adam adam(std::as_const(model).parameters(), config.learning_rate);
  const double inv_t = 1.0 / config.temperature;
  const std::uint64_t train_seed = derive_seed(config.seed, "train");

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(train_seed, static_cast<std::uint64_t>(epoch)));
    std::vector<int> order = dataset.train_ids;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start + 1 < order.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      const auto count = static_cast<Eigen::Index>(end - start);
      if (count < 2) break;

      std::vector<nn::Tape> image_tapes(static_cast<std::size_t>(count));
      std::vector<EncoderPair::TextTape> text_tapes(static_cast<std::size_t>(count));
      Matrix zi(count, config.embed_dim), zt(count, config.embed_dim);
      Matrix ei(count, config.embed_dim), et(count, config.embed_dim);
      for (Eigen::Index b = 0; b < count; ++b) {
        const CaptionedImage& original = dataset.pair(order[start + static_cast<std::size_t>(b)]);
        const CaptionedImage item = config.augment ? random_augmentation(original, dataset.vocab, rng) : original;
        zi.row(b) = model.image_forward(item.image, image_tapes[static_cast<std::size_t>(b)]).transpose();
        zt.row(b) = model.text_forward(sample_caption(item, rng), text_tapes[static_cast<std::size_t>(b)]).transpose();
        ei.row(b) = normalize(zi.row(b).transpose()).transpose();
        et.row(b) = normalize(zt.row(b).transpose()).transpose();
      }

      const Matrix logits = inv_t * ei * et.transpose();
      Matrix p_rows = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
      p_rows.array().colwise() /= p_rows.rowwise().sum().array();
      Matrix p_cols = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
      p_cols.array().rowwise() /= p_cols.colwise().sum().array();

      double batch_loss = 0.0;
      for (Eigen::Index b = 0; b < count; ++b) batch_loss -= std::log(p_rows(b, b)) + std::log(p_cols(b, b));
      batch_loss /= 2.0 * static_cast<double>(count);
      if (!std::isfinite(batch_loss)) {
        fail(ErrorCode::kNumericalFailure, "contrastive loss diverged at epoch " + std::to_string(epoch) +
                                               ", batch " + std::to_string(batches));
      }

      const Matrix eye = Matrix::Identity(count, count);
      const Matrix d_logits = (p_rows - eye + p_cols - eye) / (2.0 * static_cast<double>(count));
      const Matrix d_ei = inv_t * d_logits * et;
      const Matrix d_et = inv_t * d_logits.transpose() * ei;

      std::vector<Matrix> grads = nn::zeros_like(std::as_const(model).parameters());
      for (Eigen::Index b = 0; b < count; ++b) {
        const auto idx = static_cast<std::size_t>(b);
        model.image_backward(image_tapes[idx], normalize_backward(zi.row(b).transpose(), d_ei.row(b).transpose()), &grads);
        model.text_backward(text_tapes[idx], normalize_backward(zt.row(b).transpose(), d_et.row(b).transpose()), &grads);
      }
      adam.step(model.parameters(), grads);
      epoch_loss += batch_loss;
      ++batches;
    }
    result.epoch_losses.push_back(batches > 0 ? epoch_loss / batches : 0.0);
  }
  return result;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const EncoderPair& m = checkpoint.model;
  json header;
  header["format_version"] = kCheckpointVersion;
  header["arch"] = to_string(m.architecture());
  header["embed_dim"] = m.embed_dim();
  header["seed"] = m.config().seed;
  header["vocab_hash"] = m.vocab_hash();
  header["vocab_size"] = m.config().vocab_size;
  header["max_tokens"] = m.config().max_tokens;
  header["input"] = {m.config().channels, m.config().height, m.config().width};
  header["train"] = train_config_json(checkpoint.train);
  header["parameter_shapes"] = parameter_shapes(m);
  header["probe_pair_id"] = checkpoint.probe_pair_id;
  header["probe_embedding"] = checkpoint.probe_embedding;

  std::string text = "LSSA-CKPT " + std::to_string(kCheckpointVersion) + "\n" + header.dump() + "\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  for (const Matrix* p : m.parameters()) {
    const auto* raw = reinterpret_cast<const std::uint8_t*>(p->data());
    bytes.insert(bytes.end(), raw, raw + p->size() * static_cast<Eigen::Index>(sizeof(double)));
  }
  io::write_bytes(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::kMissingArtifact, "missing checkpoint " + path.string());
  const auto bytes = io::read_bytes(path);
  const auto nl1 = std::find(bytes.begin(), bytes.end(), '\n');
  require(nl1 != bytes.end(), ErrorCode::kIo, "checkpoint header missing in " + path.string());
  const std::string magic(bytes.begin(), nl1);
  require(magic.rfind("LSSA-CKPT ", 0) == 0, ErrorCode::kIo, "not a checkpoint: " + path.string());
  const int version = std::stoi(magic.substr(10));
  require(version == kCheckpointVersion, ErrorCode::kVersionMismatch,
          "checkpoint format version " + std::to_string(version) + " is not supported (reader supports " +
              std::to_string(kCheckpointVersion) + ")");
  const auto nl2 = std::find(nl1 + 1, bytes.end(), '\n');
  require(nl2 != bytes.end(), ErrorCode::kIo, "truncated checkpoint header in " + path.string());
  const json header = json::parse(std::string(nl1 + 1, nl2));

  ModelConfig config;
  config.arch = parse_architecture(header.at("arch").get<std::string>());
  config.embed_dim = header.at("embed_dim").get<int>();
  config.seed = header.at("seed").get<std::uint64_t>();
  config.max_tokens = header.at("max_tokens").get<int>();
  const auto input = header.at("input").get<std::vector<int>>();
  config.channels = input.at(0);
  config.height = input.at(1);
  config.width = input.at(2);

  Checkpoint checkpoint{EncoderPair::initialize(config, header.at("vocab_size").get<int>(),
                                                 header.at("vocab_hash").get<std::string>()),
                        {}, -1, {}};
  EncoderPair& m = checkpoint.model;
  const auto shapes = header.at("parameter_shapes").get<std::vector<std::vector<std::int64_t>>>();
  auto params = m.parameters();
  require(shapes.size() == params.size(), ErrorCode::kIo, "checkpoint parameter count mismatch");
  std::size_t offset = static_cast<std::size_t>(nl2 - bytes.begin()) + 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(shapes[i].at(0) == params[i]->rows() && shapes[i].at(1) == params[i]->cols(), ErrorCode::kIo,
            "checkpoint parameter shape mismatch at index " + std::to_string(i));
    const std::size_t n = static_cast<std::size_t>(params[i]->size()) * sizeof(double);
    require(offset + n <= bytes.size(), ErrorCode::kIo, "truncated checkpoint weights in " + path.string());
    std::memcpy(params[i]->data(), bytes.data() + offset, n);
    offset += n;
  }
  require(offset == bytes.size(), ErrorCode::kIo, "trailing bytes in checkpoint " + path.string());

  const json& train = header.at("train");
  checkpoint.train.arch = parse_architecture(train.at("arch").get<std::string>());
  checkpoint.train.seed = train.at("seed").get<std::uint64_t>();
  checkpoint.train.epochs = train.at("epochs").get<int>();
  checkpoint.train.batch = train.at("batch").get<int>();
  checkpoint.train.learning_rate = train.at("learning_rate").get<double>();
  checkpoint.train.embed_dim = train.at("embed_dim").get<int>();
  checkpoint.train.temperature = train.at("temperature").get<double>();
  checkpoint.train.augment = train.value("augment", true);
  checkpoint.probe_pair_id = header.at("probe_pair_id").get<int>();
  checkpoint.probe_embedding = header.at("probe_embedding").get<std::vector<double>>();
  return checkpoint;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary& expected_vocab) {
  Checkpoint checkpoint = load_checkpoint(path);
  const std::string expected = expected_vocab.hash();
  require(checkpoint.model.vocab_hash() == expected, ErrorCode::kVocabularyMismatch,
          "vocabulary hash mismatch: checkpoint " + checkpoint.model.vocab_hash() + " vs dataset " + expected);
  require(checkpoint.model.config().vocab_size == expected_vocab.size(), ErrorCode::kVocabularyMismatch,
          "vocabulary size mismatch between checkpoint and dataset");
  return checkpoint;
}

}  // namespace lssa
