#include "lssa/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "lssa/parallel.hpp"

namespace lssa {
namespace {

// Rank of column j within row `scores`: strictly greater scores, plus equal
// scores at earlier gallery positions.
int rank_in_row(const Eigen::VectorXd& scores, Eigen::Index j) {
  const double s = scores[j];
  int rank = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (scores[i] > s || (scores[i] == s && i < j)) ++rank;
  }
  return rank;
}

std::string fixed(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

nlohmann::json rate_json(const std::optional<double>& r) {
  return r ? nlohmann::json(*r) : nlohmann::json(nullptr);
}

}  // namespace

std::string_view to_string(Direction direction) { return direction == Direction::kTR ? "TR" : "IR"; }

Eigen::MatrixXd RetrievalIndex::similarity() const { return images.transpose() * texts; }

RetrievalIndex build_index(const EncoderPair& model, const Vocabulary& vocab, const std::vector<int>& pair_ids,
                           const std::vector<Image>& images, const std::vector<std::vector<TokenSequence>>& captions) {
  require(model.vocab_hash() == vocab.hash(), ErrorCode::kVocabularyMismatch,
          "model " + model.tag() + " was trained on a different vocabulary");
  require(!pair_ids.empty(), ErrorCode::kInvalidArgument, "cannot build a retrieval index over an empty split");
  require(images.size() == pair_ids.size() && captions.size() == pair_ids.size(), ErrorCode::kShapeMismatch,
          "index needs one image and one caption list per pair id");
  RetrievalIndex index;
  index.model_tag = model.tag();
  index.pair_ids = pair_ids;
  index.images = model.encode_images(images);
  std::vector<TokenSequence> flat;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    require(!captions[i].empty(), ErrorCode::kInvalidArgument,
            "pair " + std::to_string(pair_ids[i]) + " has no captions");
    for (const TokenSequence& t : captions[i]) {
      flat.push_back(t);
      index.text_owner.push_back(static_cast<int>(i));
    }
  }
  index.texts = model.encode_texts(flat);
  return index;
}

RetrievalIndex build_index(const EncoderPair& model, const Dataset& dataset, const std::vector<int>& pair_ids) {
  std::vector<Image> images;
  std::vector<std::vector<TokenSequence>> captions;
  for (int id : pair_ids) {
    images.push_back(dataset.pair(id).image);
    captions.push_back(dataset.pair(id).captions);
  }
  return build_index(model, dataset.vocab, pair_ids, images, captions);
}

std::vector<int> match_ranks(const RetrievalIndex& index, Direction direction) {
  const Eigen::MatrixXd sim = index.similarity();
  std::vector<int> ranks;
  if (direction == Direction::kTR) {
    for (Eigen::Index q = 0; q < sim.rows(); ++q) {
      const Eigen::VectorXd row = sim.row(q).transpose();
      int best = static_cast<int>(sim.cols());
      for (Eigen::Index j = 0; j < sim.cols(); ++j) {
        if (index.text_owner[static_cast<std::size_t>(j)] == q) best = std::min(best, rank_in_row(row, j));
      }
      ranks.push_back(best);
    }
  } else {
    for (Eigen::Index q = 0; q < sim.cols(); ++q) {
      const Eigen::VectorXd col = sim.col(q);
      ranks.push_back(rank_in_row(col, index.text_owner[static_cast<std::size_t>(q)]));
    }
  }
  return ranks;
}

double recall_at_k(const std::vector<int>& ranks, int k) {
  require(k >= 1, ErrorCode::kInvalidArgument, "recall cutoff k must be at least 1");
  require(!ranks.empty(), ErrorCode::kInvalidArgument, "recall over zero queries");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r < k; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double recall_at_k(const RetrievalIndex& index, int k, Direction direction) {
  const int gallery = direction == Direction::kTR ? index.num_texts() : index.num_images();
  require(k <= gallery, ErrorCode::kInvalidArgument,
          "k = " + std::to_string(k) + " exceeds the " + std::string(to_string(direction)) + " gallery of " +
              std::to_string(gallery));
  return recall_at_k(match_ranks(index, direction), k);
}

AsrResult attack_success_rate(const std::vector<int>& clean_ranks, const std::vector<int>& adv_ranks, int k) {
  require(k >= 1, ErrorCode::kInvalidArgument, "ASR cutoff k must be at least 1");
  require(clean_ranks.size() == adv_ranks.size(), ErrorCode::kShapeMismatch,
          "clean and adversarial rankings cover different query sets");
  AsrResult r;
  for (std::size_t i = 0; i < clean_ranks.size(); ++i) {
    if (clean_ranks[i] >= k) continue;
    ++r.eligible;
    if (adv_ranks[i] >= k) ++r.flipped;
  }
  if (r.eligible > 0) r.rate = 100.0 * r.flipped / r.eligible;
  return r;
}

AsrResult attack_success_rate(const RetrievalIndex& clean, const RetrievalIndex& adv, int k, Direction direction) {
  require(clean.pair_ids == adv.pair_ids && clean.text_owner == adv.text_owner, ErrorCode::kShapeMismatch,
          "clean and adversarial indices cover different pairs");
  return attack_success_rate(match_ranks(clean, direction), match_ranks(adv, direction), k);
}

std::optional<double> RetrievalMetrics::headline_asr() const {
  const auto& tr = asr_tr[0].rate;
  const auto& ir = asr_ir[0].rate;
  if (tr && ir) return 0.5 * (*tr + *ir);
  if (tr) return tr;
  return ir;
}

std::optional<ImageAttackResult> ImageStageCache::find(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ImageStageCache::insert(const std::string& key, const ImageAttackResult& value) {
  std::lock_guard<std::mutex> lock(mutex_);
  entries_.emplace(key, value);
}

std::size_t ImageStageCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

std::uint64_t pair_attack_seed(std::uint64_t root_seed, int pair_id) {
  return derive_seed(derive_seed(root_seed, "attack"), static_cast<std::uint64_t>(pair_id));
}

std::vector<AttackOutcome> craft_outcomes(const EncoderPair& source, const Dataset& dataset,
                                          const std::vector<int>& pair_ids, const PipelineSpec& spec,
                                          const AttackBudget& budget, std::uint64_t root_seed, int workers,
                                          ImageStageCache* cache) {
  require(source.vocab_hash() == dataset.vocab.hash(), ErrorCode::kVocabularyMismatch,
          "source model " + source.tag() + " was trained on a different vocabulary");
  std::vector<AttackOutcome> outcomes(pair_ids.size());
  const std::string stage = source.tag() + "|" + image_stage_key(spec, budget);
  parallel_for(pair_ids.size(), workers, [&](std::size_t i) {
    const CaptionedImage& item = dataset.pair(pair_ids[i]);
    const std::uint64_t seed = pair_attack_seed(root_seed, item.pair_id);
    if (cache == nullptr) {
      outcomes[i] = run_pipeline(spec, source, dataset.vocab, item, budget, seed);
      return;
    }
    const std::string key = stage + "|pair=" + std::to_string(item.pair_id) + "|seed=" + std::to_string(seed);
    if (auto hit = cache->find(key)) {
      outcomes[i] = run_pipeline(spec, source, dataset.vocab, item, budget, seed, &*hit);
      return;
    }
    outcomes[i] = run_pipeline(spec, source, dataset.vocab, item, budget, seed);
    cache->insert(key, ImageAttackResult{outcomes[i].v_adv, outcomes[i].trace});
  });
  return outcomes;
}

TransferReport evaluate_transfer(const EncoderPair& target, const Dataset& dataset, const std::vector<int>& pair_ids,
                                 const std::vector<AttackOutcome>& outcomes) {
  require(outcomes.size() == pair_ids.size(), ErrorCode::kShapeMismatch, "one outcome per pair id expected");
  std::vector<Image> adv_images;
  std::vector<std::vector<TokenSequence>> adv_captions;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    require(outcomes[i].pair_id == pair_ids[i], ErrorCode::kShapeMismatch,
            "outcome order does not match the pair ids");
    adv_images.push_back(outcomes[i].v_adv);
    adv_captions.push_back(outcomes[i].t_adv);
  }
  const RetrievalIndex clean = build_index(target, dataset, pair_ids);
  const RetrievalIndex adv = build_index(target, dataset.vocab, pair_ids, adv_images, adv_captions);
  const auto tr_clean = match_ranks(clean, Direction::kTR), tr_adv = match_ranks(adv, Direction::kTR);
  const auto ir_clean = match_ranks(clean, Direction::kIR), ir_adv = match_ranks(adv, Direction::kIR);

  TransferReport report;
  report.target = target.tag();
  RetrievalMetrics& m = report.metrics;
  for (std::size_t c = 0; c < kRecallCutoffs.size(); ++c) {
    const int k = kRecallCutoffs[c];
    m.tr_clean[c] = recall_at_k(tr_clean, k);
    m.tr_adv[c] = recall_at_k(tr_adv, k);
    m.ir_clean[c] = recall_at_k(ir_clean, k);
    m.ir_adv[c] = recall_at_k(ir_adv, k);
    m.asr_tr[c] = attack_success_rate(tr_clean, tr_adv, k);
    m.asr_ir[c] = attack_success_rate(ir_clean, ir_adv, k);
  }
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const CaptionedImage& item = dataset.pair(pair_ids[i]);
    PairRecord rec;
    rec.pair_id = pair_ids[i];
    rec.linf = linf_distance(outcomes[i].v_adv, item.image);
    rec.min_value = outcomes[i].v_adv.array().minCoeff();
    rec.max_value = outcomes[i].v_adv.array().maxCoeff();
    for (std::size_t c = 0; c < item.captions.size(); ++c) {
      rec.words_changed = std::max(rec.words_changed, word_distance(item.captions[c], outcomes[i].t_adv[c]));
    }
    rec.tr_rank_clean = tr_clean[i];
    rec.tr_rank_adv = tr_adv[i];
    for (std::size_t j = 0; j < clean.text_owner.size(); ++j) {
      if (clean.text_owner[j] != static_cast<int>(i)) continue;
      rec.ir_rank_clean.push_back(ir_clean[j]);
      rec.ir_rank_adv.push_back(ir_adv[j]);
    }
    report.per_pair.push_back(std::move(rec));
  }
  return report;
}

std::vector<TransferReport> transfer_matrix(const std::vector<const EncoderPair*>& models,
                                            const std::vector<PipelineSpec>& attacks, const Dataset& dataset,
                                            const AttackBudget& budget, std::uint64_t root_seed, int workers,
                                            ImageStageCache* cache) {
  require(models.size() >= 2, ErrorCode::kInvalidArgument, "a transfer matrix needs at least two models");
  budget.validate();
  std::vector<TransferReport> reports;
  for (const EncoderPair* source : models) {
    for (const PipelineSpec& spec : attacks) {
      const auto outcomes = craft_outcomes(*source, dataset, dataset.test_ids, spec, budget, root_seed, workers, cache);
      for (const EncoderPair* target : models) {
        TransferReport r = evaluate_transfer(*target, dataset, dataset.test_ids, outcomes);
        r.source = source->tag();
        r.attack = spec.name;
        r.white_box = source == target;
        r.seed = root_seed;
        r.budget = budget;
        reports.push_back(std::move(r));
      }
    }
  }
  return reports;
}

nlohmann::json budget_to_json(const AttackBudget& b) {
  return {
      {"eps_v", b.eps_v},
      {"alpha", b.alpha},
      {"T", b.T},
      {"mu", b.mu},
      {"eps_t", b.eps_t},
      {"W", b.W},
      {"lambda", b.lambda},
      {"N", b.shuffle.N},
      {"position_mode", std::string(to_string(b.shuffle.position_mode))},
      {"M", b.sample.M},
      {"eps0", b.sample.eps0},
      {"resize", b.resize},
      {"resize_scales", b.resize_scales},
      {"order", std::string(to_string(b.order))},
      {"caption_set_size", b.caption_set_size},
  };
}

AttackBudget budget_from_json(const nlohmann::json& j, AttackBudget b) {
  require(j.is_object(), ErrorCode::kConfig, "attack budget must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "eps_v") b.eps_v = value.get<double>();
      else if (key == "alpha") b.alpha = value.get<double>();
      else if (key == "T") b.T = value.get<int>();
      else if (key == "mu") b.mu = value.get<double>();
      else if (key == "eps_t") b.eps_t = value.get<int>();
      else if (key == "W") b.W = value.get<int>();
      else if (key == "lambda") b.lambda = value.get<double>();
      else if (key == "N") b.shuffle.N = value.get<int>();
      else if (key == "position_mode") b.shuffle.position_mode = parse_position_mode(value.get<std::string>());
      else if (key == "M") b.sample.M = value.get<int>();
      else if (key == "eps0") b.sample.eps0 = value.get<double>();
      else if (key == "resize") b.resize = value.get<bool>();
      else if (key == "resize_scales") b.resize_scales = value.get<std::vector<double>>();
      else if (key == "order") b.order = parse_transform_order(value.get<std::string>());
      else if (key == "caption_set_size") b.caption_set_size = value.get<int>();
      else fail(ErrorCode::kConfig, "unknown budget key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kConfig, "budget key '" + key + "': " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, "budget key '" + key + "': " + e.what());
    }
  }
  try {
    b.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, e.what());
  }
  return b;
}

nlohmann::json to_json(const TransferReport& r) {
  nlohmann::json metrics;
  const RetrievalMetrics& m = r.metrics;
  for (std::size_t c = 0; c < kRecallCutoffs.size(); ++c) {
    const std::string k = "r" + std::to_string(kRecallCutoffs[c]);
    metrics["tr_clean_" + k] = m.tr_clean[c];
    metrics["tr_adv_" + k] = m.tr_adv[c];
    metrics["ir_clean_" + k] = m.ir_clean[c];
    metrics["ir_adv_" + k] = m.ir_adv[c];
    metrics["asr_tr_" + k] = rate_json(m.asr_tr[c].rate);
    metrics["asr_ir_" + k] = rate_json(m.asr_ir[c].rate);
    metrics["eligible_tr_" + k] = m.asr_tr[c].eligible;
    metrics["eligible_ir_" + k] = m.asr_ir[c].eligible;
  }
  metrics["asr_headline"] = rate_json(m.headline_asr());
  nlohmann::json pairs = nlohmann::json::array();
  for (const PairRecord& p : r.per_pair) {
    pairs.push_back({{"pair_id", p.pair_id},
                     {"linf", p.linf},
                     {"min_value", p.min_value},
                     {"max_value", p.max_value},
                     {"words_changed", p.words_changed},
                     {"tr_rank_clean", p.tr_rank_clean},
                     {"tr_rank_adv", p.tr_rank_adv},
                     {"ir_rank_clean", p.ir_rank_clean},
                     {"ir_rank_adv", p.ir_rank_adv}});
  }
  return {{"schema_version", kReportSchemaVersion},
          {"source", r.source},
          {"target", r.target},
          {"attack", r.attack},
          {"white_box", r.white_box},
          {"seed", r.seed},
          {"budget", budget_to_json(r.budget)},
          {"metrics", metrics},
          {"per_pair", pairs}};
}

std::string format_rate(const std::optional<double>& rate) { return rate ? fixed(*rate, 2) : "NA"; }

std::string transfer_csv_header() {
  std::string h = "source,target,attack,white_box,seed";
  for (const char* d : {"tr", "ir"}) {
    for (int k : kRecallCutoffs) {
      const std::string s = std::string(d) + "_r" + std::to_string(k);
      h += "," + s + "_clean," + s + "_adv,asr_" + s;
    }
  }
  return h + ",asr_headline";
}

std::string transfer_csv_row(const TransferReport& r) {
  std::ostringstream row;
  row << r.source << ',' << r.target << ',' << r.attack << ',' << (r.white_box ? 1 : 0) << ',' << r.seed;
  const RetrievalMetrics& m = r.metrics;
  for (int d = 0; d < 2; ++d) {
    const auto& clean = d == 0 ? m.tr_clean : m.ir_clean;
    const auto& adv = d == 0 ? m.tr_adv : m.ir_adv;
    const auto& asr = d == 0 ? m.asr_tr : m.asr_ir;
    for (std::size_t c = 0; c < kRecallCutoffs.size(); ++c) {
      row << ',' << fixed(clean[c], 2) << ',' << fixed(adv[c], 2) << ',' << format_rate(asr[c].rate);
    }
  }
  row << ',' << format_rate(m.headline_asr());
  return row.str();
}

}  // namespace lssa
