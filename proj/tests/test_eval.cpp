#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "lssa/eval.hpp"
#include "test_support.hpp"

namespace lssa {
namespace {

using testing::init_model;

const Dataset& data() {
  static const Dataset d = testing::tiny_dataset(24, 3);
  return d;
}

// Index over arbitrary unit columns, one caption per image unless the
// owner list says otherwise.
RetrievalIndex make_index(const Eigen::MatrixXd& images, const Eigen::MatrixXd& texts, std::vector<int> owner) {
  RetrievalIndex idx;
  idx.model_tag = "stub";
  idx.images = images.colwise().normalized();
  idx.texts = texts.colwise().normalized();
  idx.text_owner = std::move(owner);
  idx.pair_ids.resize(static_cast<std::size_t>(images.cols()));
  std::iota(idx.pair_ids.begin(), idx.pair_ids.end(), 0);
  return idx;
}

RetrievalIndex random_index(int n, int captions_per_image, int d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd images(d, n), texts(d, n * captions_per_image);
  for (Eigen::Index i = 0; i < images.size(); ++i) images.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < texts.size(); ++i) texts.data()[i] = rng.normal();
  std::vector<int> owner;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < captions_per_image; ++c) owner.push_back(i);
  return make_index(images, texts, owner);
}

// Independent ranking: stable sort of the gallery by descending score.
std::vector<int> oracle_ranks(const RetrievalIndex& idx, Direction dir) {
  const Eigen::MatrixXd sim = idx.images.transpose() * idx.texts;
  std::vector<int> ranks;
  const Eigen::Index queries = dir == Direction::kTR ? sim.rows() : sim.cols();
  const Eigen::Index gallery = dir == Direction::kTR ? sim.cols() : sim.rows();
  for (Eigen::Index q = 0; q < queries; ++q) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(gallery));
    std::iota(order.begin(), order.end(), 0);
    auto score = [&](Eigen::Index g) { return dir == Direction::kTR ? sim(q, g) : sim(g, q); };
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score(a) > score(b); });
    for (std::size_t r = 0; r < order.size(); ++r) {
      const bool hit = dir == Direction::kTR ? idx.text_owner[static_cast<std::size_t>(order[r])] == q
                                             : order[r] == idx.text_owner[static_cast<std::size_t>(q)];
      if (hit) {
        ranks.push_back(static_cast<int>(r));
        break;
      }
    }
  }
  return ranks;
}

TEST(RecallAtK, PairRankedSecond) {
  // Image 0's own caption (column 0) scores below caption 1.
  Eigen::MatrixXd images(2, 2), texts(2, 2);
  images << 1.0, 0.0,
            0.0, 1.0;
  texts << 0.6, 1.0,
           0.8, 0.1;
  const RetrievalIndex idx = make_index(images, texts, {0, 1});
  const std::vector<int> ranks = match_ranks(idx, Direction::kTR);
  EXPECT_EQ(ranks[0], 1);
  EXPECT_EQ(recall_at_k(std::vector<int>{ranks[0]}, 1), 0.0);
  EXPECT_EQ(recall_at_k(std::vector<int>{ranks[0]}, 2), 100.0);
}

TEST(RecallAtK, FullGalleryIsAlwaysAHit) {
  const RetrievalIndex idx = random_index(9, 5, 6, 1);
  EXPECT_EQ(recall_at_k(idx, idx.num_texts(), Direction::kTR), 100.0);
  EXPECT_EQ(recall_at_k(idx, idx.num_images(), Direction::kIR), 100.0);
  EXPECT_LSSA_ERROR(recall_at_k(idx, idx.num_images() + 1, Direction::kIR), ErrorCode::kInvalidArgument);
  EXPECT_LSSA_ERROR(recall_at_k(idx, idx.num_texts() + 1, Direction::kTR), ErrorCode::kInvalidArgument);
  EXPECT_LSSA_ERROR(recall_at_k(idx, 0, Direction::kTR), ErrorCode::kInvalidArgument);
}

TEST(RecallAtK, MonotoneInK) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RetrievalIndex idx = random_index(12, 1 + static_cast<int>(seed % 5), 4, seed);
    for (Direction dir : {Direction::kTR, Direction::kIR}) {
      double prev = 0.0;
      for (int k = 1; k <= idx.num_images(); ++k) {
        const double r = recall_at_k(idx, k, dir);
        EXPECT_GE(r, prev);
        EXPECT_GE(r, 0.0);
        EXPECT_LE(r, 100.0);
        prev = r;
      }
    }
  }
}

TEST(MatchRanks, AgreesWithSortOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RetrievalIndex idx = random_index(15, 5, 8, 40 + seed);
    for (Direction dir : {Direction::kTR, Direction::kIR}) EXPECT_EQ(match_ranks(idx, dir), oracle_ranks(idx, dir));
  }
  // Exact ties fall to the earlier gallery item.
  Eigen::MatrixXd images = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd texts(2, 2);
  texts << 1.0, 1.0,
           0.0, 0.0;
  const RetrievalIndex tied = make_index(images, texts, {1, 0});
  EXPECT_EQ(match_ranks(tied, Direction::kTR)[0], 1);
  EXPECT_EQ(oracle_ranks(tied, Direction::kTR)[0], 1);
}

TEST(MatchRanks, TrIrDualityOnTransposedIndex) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd e(5, 8);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
    Eigen::MatrixXd f(5, 8);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
    std::vector<int> owner(8);
    std::iota(owner.begin(), owner.end(), 0);
    const RetrievalIndex idx = make_index(e, f, owner);
    const RetrievalIndex transposed = make_index(f, e, owner);
    EXPECT_EQ(match_ranks(idx, Direction::kTR), match_ranks(transposed, Direction::kIR));
    EXPECT_EQ(match_ranks(idx, Direction::kIR), match_ranks(transposed, Direction::kTR));
  }
}

TEST(AttackSuccessRate, ArithmeticAndIdentity) {
  // 10 queries, 8 correct, 6 of those fail afterwards.
  const std::vector<int> clean = {0, 0, 0, 0, 0, 0, 0, 0, 3, 4};
  const std::vector<int> adv = {1, 2, 5, 1, 1, 9, 0, 0, 0, 0};
  const AsrResult r = attack_success_rate(clean, adv, 1);
  EXPECT_EQ(r.eligible, 8);
  EXPECT_EQ(r.flipped, 6);
  ASSERT_TRUE(r.rate.has_value());
  EXPECT_DOUBLE_EQ(*r.rate, 75.0);

  const RetrievalIndex idx = random_index(10, 2, 4, 7);
  for (Direction dir : {Direction::kTR, Direction::kIR}) {
    const AsrResult same = attack_success_rate(idx, idx, 1, dir);
    if (same.eligible > 0) { EXPECT_EQ(*same.rate, 0.0); }
  }
}

TEST(AttackSuccessRate, EmptyEligibleSetIsUndefined) {
  const AsrResult r = attack_success_rate({2, 3, 1}, {0, 0, 0}, 1);
  EXPECT_EQ(r.eligible, 0);
  EXPECT_FALSE(r.rate.has_value());
  EXPECT_EQ(format_rate(r.rate), "NA");
  EXPECT_LSSA_ERROR(attack_success_rate({0}, {0, 1}, 1), ErrorCode::kShapeMismatch);
}

TEST(AttackSuccessRate, WrongQueriesNeverMatter) {
  Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> clean(30), adv(30);
    for (int i = 0; i < 30; ++i) {
      clean[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(4));
      adv[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(4));
    }
    const int k = 1 + static_cast<int>(rng.below(3));
    const AsrResult base = attack_success_rate(clean, adv, k);
    std::vector<int> perturbed = adv;
    for (int i = 0; i < 30; ++i) {
      if (clean[static_cast<std::size_t>(i)] >= k) perturbed[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(9));
    }
    const AsrResult again = attack_success_rate(clean, perturbed, k);
    EXPECT_EQ(base.eligible, again.eligible);
    EXPECT_EQ(base.flipped, again.flipped);
    EXPECT_EQ(base.rate, again.rate);
  }
}

TEST(BuildIndex, ErrorsAndDeterminism) {
  const EncoderPair m = init_model(Architecture::kConv, 0, data().vocab);
  EXPECT_LSSA_ERROR(build_index(m, data(), {}), ErrorCode::kInvalidArgument);
  const EncoderPair other = EncoderPair::initialize(ModelConfig{}, data().vocab.size(), "not-the-hash");
  EXPECT_LSSA_ERROR(build_index(other, data(), data().test_ids), ErrorCode::kVocabularyMismatch);

  const RetrievalIndex a = build_index(m, data(), data().test_ids);
  const RetrievalIndex b = build_index(m, data(), data().test_ids);
  EXPECT_EQ(a.num_images(), static_cast<int>(data().test_ids.size()));
  EXPECT_EQ(a.num_texts(), kCaptionsPerImage * a.num_images());
  for (Direction dir : {Direction::kTR, Direction::kIR}) EXPECT_EQ(match_ranks(a, dir), match_ranks(b, dir));
  for (Eigen::Index j = 0; j < a.texts.cols(); ++j) EXPECT_NEAR(a.texts.col(j).norm(), 1.0, 1e-12);
}

AttackBudget quick_budget() {
  AttackBudget b;
  b.T = 2;
  b.shuffle.N = 2;
  b.sample.M = 2;
  return b;
}

TEST(EvaluateTransfer, CleanOutcomesGiveZeroAsr) {
  const EncoderPair m = init_model(Architecture::kConv, 0, data().vocab);
  std::vector<AttackOutcome> outcomes;
  for (int id : data().test_ids) {
    AttackOutcome o;
    o.pair_id = id;
    o.v_adv = data().pair(id).image;
    o.t_adv = data().pair(id).captions;
    outcomes.push_back(o);
  }
  const TransferReport r = evaluate_transfer(m, data(), data().test_ids, outcomes);
  for (std::size_t c = 0; c < kRecallCutoffs.size(); ++c) {
    EXPECT_EQ(r.metrics.tr_clean[c], r.metrics.tr_adv[c]);
    EXPECT_EQ(r.metrics.ir_clean[c], r.metrics.ir_adv[c]);
    if (r.metrics.asr_tr[c].rate) { EXPECT_EQ(*r.metrics.asr_tr[c].rate, 0.0); }
    if (r.metrics.asr_ir[c].rate) { EXPECT_EQ(*r.metrics.asr_ir[c].rate, 0.0); }
  }
  for (const PairRecord& p : r.per_pair) {
    EXPECT_EQ(p.linf, 0.0);
    EXPECT_EQ(p.words_changed, 0);
    EXPECT_EQ(p.ir_rank_clean.size(), static_cast<std::size_t>(kCaptionsPerImage));
  }
  std::reverse(outcomes.begin(), outcomes.end());
  EXPECT_LSSA_ERROR(evaluate_transfer(m, data(), data().test_ids, outcomes), ErrorCode::kShapeMismatch);
}

TEST(TransferMatrix, OneAttackTwoModelsGivesFourReports) {
  const EncoderPair a = init_model(Architecture::kConv, 0, data().vocab);
  const EncoderPair b = init_model(Architecture::kPatch, 0, data().vocab);
  const auto reports = transfer_matrix({&a, &b}, {pipeline_spec("lssa")}, data(), quick_budget(), 1, 1);
  ASSERT_EQ(reports.size(), 4u);
  EXPECT_EQ(reports[0].source, "conv_s0");
  EXPECT_EQ(reports[0].target, "conv_s0");
  EXPECT_TRUE(reports[0].white_box);
  EXPECT_EQ(reports[1].target, "patch_s0");
  EXPECT_FALSE(reports[1].white_box);
  EXPECT_EQ(reports[2].source, "patch_s0");
  EXPECT_FALSE(reports[2].white_box);
  EXPECT_TRUE(reports[3].white_box);
  for (const auto& r : reports) {
    EXPECT_EQ(r.attack, "lssa");
    for (const PairRecord& p : r.per_pair) {
      EXPECT_LE(p.linf, r.budget.eps_v + 1e-9);
      EXPECT_GE(p.min_value, 0.0);
      EXPECT_LE(p.max_value, 1.0);
      EXPECT_LE(p.words_changed, 1);
    }
  }
  // Crafted once per source: both targets see the same perturbation.
  for (std::size_t i = 0; i < reports[0].per_pair.size(); ++i) {
    EXPECT_EQ(reports[0].per_pair[i].linf, reports[1].per_pair[i].linf);
  }
  EXPECT_LSSA_ERROR(transfer_matrix({&a}, {pipeline_spec("pgd")}, data(), quick_budget(), 1, 1),
                    ErrorCode::kInvalidArgument);
}

TEST(TransferMatrix, IdenticalSeedsGiveIdenticalMatrices) {
  const EncoderPair a = init_model(Architecture::kConv, 0, data().vocab);
  const EncoderPair b = init_model(Architecture::kConv, 1, data().vocab);
  const std::vector<PipelineSpec> attacks = {pipeline_spec("sga_it_sampled"), pipeline_spec("mifgsm")};
  ImageStageCache cache;
  const auto x = transfer_matrix({&a, &b}, attacks, data(), quick_budget(), 3, 1);
  const auto y = transfer_matrix({&a, &b}, attacks, data(), quick_budget(), 3, 2, &cache);
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(transfer_csv_row(x[i]), transfer_csv_row(y[i]));
    EXPECT_EQ(to_json(x[i]).dump(), to_json(y[i]).dump());
  }
  EXPECT_GT(cache.size(), 0u);
}

TEST(TransferMatrix, ParallelWorkersMatchSerial) {
  const EncoderPair a = init_model(Architecture::kConv, 0, data().vocab);
  const auto serial = craft_outcomes(a, data(), data().test_ids, pipeline_spec("lssa"), quick_budget(), 5, 1);
  const auto parallel = craft_outcomes(a, data(), data().test_ids, pipeline_spec("lssa"), quick_budget(), 5, 4);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_TRUE(serial[i].v_adv == parallel[i].v_adv);
    EXPECT_EQ(serial[i].t_adv, parallel[i].t_adv);
    EXPECT_EQ(serial[i].image_seed, derive_seed(pair_attack_seed(5, data().test_ids[i]), "image"));
  }
}

TEST(Report, AsrMatchesPerQueryDiffOfSerializedRanks) {
  const EncoderPair a = init_model(Architecture::kConv, 0, data().vocab);
  const EncoderPair b = init_model(Architecture::kPatch, 0, data().vocab);
  AttackBudget strong = quick_budget();
  strong.eps_v = 16.0 / 255.0;
  strong.alpha = 4.0 / 255.0;
  const auto reports = transfer_matrix({&a, &b}, {pipeline_spec("sga_it")}, data(), strong, 2, 1);
  for (const auto& r : reports) {
    const nlohmann::json j = nlohmann::json::parse(to_json(r).dump());
    int tr_eligible = 0, tr_flipped = 0, ir_eligible = 0, ir_flipped = 0;
    for (const auto& p : j.at("per_pair")) {
      if (p.at("tr_rank_clean").get<int>() == 0) {
        ++tr_eligible;
        tr_flipped += p.at("tr_rank_adv").get<int>() > 0;
      }
      const auto clean = p.at("ir_rank_clean").get<std::vector<int>>();
      const auto adv = p.at("ir_rank_adv").get<std::vector<int>>();
      for (std::size_t c = 0; c < clean.size(); ++c) {
        if (clean[c] != 0) continue;
        ++ir_eligible;
        ir_flipped += adv[c] > 0;
      }
    }
    const auto& m = j.at("metrics");
    EXPECT_EQ(m.at("eligible_tr_r1").get<int>(), tr_eligible);
    EXPECT_EQ(m.at("eligible_ir_r1").get<int>(), ir_eligible);
    if (tr_eligible > 0) {
      EXPECT_DOUBLE_EQ(m.at("asr_tr_r1").get<double>(), 100.0 * tr_flipped / tr_eligible);
    } else {
      EXPECT_TRUE(m.at("asr_tr_r1").is_null());
    }
    if (ir_eligible > 0) { EXPECT_DOUBLE_EQ(m.at("asr_ir_r1").get<double>(), 100.0 * ir_flipped / ir_eligible); }
  }
}

TEST(Report, JsonSchemaAndCsvLayout) {
  TransferReport r;
  r.source = "conv_s0";
  r.target = "patch_s0";
  r.attack = "lssa";
  r.seed = 4;
  r.metrics.asr_tr[0] = {4, 3, 75.0};
  r.metrics.asr_ir[0] = {0, 0, std::nullopt};
  const nlohmann::json j = to_json(r);
  for (const char* key : {"schema_version", "source", "target", "attack", "white_box", "seed", "budget", "metrics",
                          "per_pair"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j.at("schema_version"), kReportSchemaVersion);
  EXPECT_EQ(j.at("metrics").at("asr_headline").get<double>(), 75.0);
  EXPECT_TRUE(j.at("metrics").at("asr_ir_r1").is_null());

  const std::string header = transfer_csv_header();
  const std::string row = transfer_csv_row(r);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_EQ(header.rfind("source,target,attack,white_box,seed,tr_r1_clean,tr_r1_adv,asr_tr_r1", 0), 0u);
  EXPECT_NE(row.find(",75.00,"), std::string::npos);
  EXPECT_NE(row.find(",NA,"), std::string::npos);
}

TEST(Report, HeadlineAsrAveragesDefinedDirections) {
  RetrievalMetrics m;
  EXPECT_FALSE(m.headline_asr().has_value());
  m.asr_tr[0].rate = 40.0;
  EXPECT_EQ(*m.headline_asr(), 40.0);
  m.asr_ir[0].rate = 60.0;
  EXPECT_EQ(*m.headline_asr(), 50.0);
}

TEST(BudgetJson, RoundTripAndRejection) {
  AttackBudget b;
  b.lambda = 0.25;
  b.shuffle.N = 7;
  b.shuffle.position_mode = PositionMode::kBottomLeft;
  b.resize = true;
  const AttackBudget back = budget_from_json(budget_to_json(b));
  EXPECT_EQ(budget_to_json(back), budget_to_json(b));
  EXPECT_LSSA_ERROR(budget_from_json(nlohmann::json{{"gamma", 1}}), ErrorCode::kConfig);
  EXPECT_LSSA_ERROR(budget_from_json(nlohmann::json{{"lambda", 2.0}}), ErrorCode::kConfig);
  EXPECT_LSSA_ERROR(budget_from_json(nlohmann::json{{"N", "many"}}), ErrorCode::kConfig);
  EXPECT_LSSA_ERROR(budget_from_json(nlohmann::json{{"position_mode", "middle"}}), ErrorCode::kConfig);
}

}  // namespace
}  // namespace lssa
