#include "lssa/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lssa/error.hpp"

namespace lssa {
namespace {

std::vector<TokenSequence> guiding_captions(const std::vector<TokenSequence>& captions, int count) {
  require(!captions.empty(), ErrorCode::kInvalidArgument, "image attack needs at least one caption");
  const auto n = std::min<std::size_t>(captions.size(), static_cast<std::size_t>(count));
  return {captions.begin(), captions.begin() + static_cast<std::ptrdiff_t>(n)};
}

double single_loss(const Embedding& e_img, const Embedding& e_txt) {
  return loss(LossSpec{}, e_img, EmbeddingSet(e_txt));
}

// One transformed copy of the iterate plus the pull-back of its gradient.
struct CopyPlan {
  const ShuffleDraw* shuffle = nullptr;
  const ResizeOperator* resize = nullptr;
};

Image apply_plan(const CopyPlan& p, const Image& v, TransformOrder order) {
  Image x = v;
  if (order == TransformOrder::kShuffleThenResize) {
    if (p.shuffle != nullptr) x = p.shuffle->apply(x);
    if (p.resize != nullptr) x = p.resize->apply(x);
  } else {
    if (p.resize != nullptr) x = p.resize->apply(x);
    if (p.shuffle != nullptr) x = p.shuffle->apply(x);
  }
  return x;
}

Image pull_back(const CopyPlan& p, const Image& g, TransformOrder order) {
  Image x = g;
  if (order == TransformOrder::kShuffleThenResize) {
    if (p.resize != nullptr) x = p.resize->adjoint(x);
    if (p.shuffle != nullptr) x = p.shuffle->adjoint(x);
  } else {
    if (p.shuffle != nullptr) x = p.shuffle->adjoint(x);
    if (p.resize != nullptr) x = p.resize->adjoint(x);
  }
  return x;
}

std::string number(double x) {
  std::ostringstream out;
  out.precision(17);
  out << x;
  return out.str();
}

}  // namespace

std::string_view to_string(TransformOrder order) {
  return order == TransformOrder::kShuffleThenResize ? "shuffle_then_resize" : "resize_then_shuffle";
}

TransformOrder parse_transform_order(std::string_view name) {
  if (name == "shuffle_then_resize") return TransformOrder::kShuffleThenResize;
  if (name == "resize_then_shuffle") return TransformOrder::kResizeThenShuffle;
  fail(ErrorCode::kInvalidArgument, "unknown transform order '" + std::string(name) + "'");
}

void AttackBudget::validate() const {
  require(eps_v >= 0.0 && std::isfinite(eps_v), ErrorCode::kInvalidArgument, "eps_v must be >= 0");
  require(T >= 0, ErrorCode::kInvalidArgument, "iteration count T must be >= 0");
  require(T == 0 || (alpha > 0.0 && std::isfinite(alpha)), ErrorCode::kInvalidArgument,
          "step size alpha must be > 0 when T > 0");
  require(mu >= 0.0 && std::isfinite(mu), ErrorCode::kInvalidArgument, "momentum decay mu must be >= 0");
  require(lambda >= 0.0 && lambda <= 1.0, ErrorCode::kInvalidArgument, "lambda must lie in [0, 1]");
  require(eps_t == 0 || eps_t == 1, ErrorCode::kInvalidArgument,
          "eps_t must be 0 or 1, got " + std::to_string(eps_t));
  require(W >= 1, ErrorCode::kInvalidArgument, "candidate count W must be >= 1, got " + std::to_string(W));
  require(caption_set_size >= 1, ErrorCode::kInvalidArgument, "caption_set_size must be >= 1");
  shuffle.validate();
  sample.validate();
  for (double s : resize_scales) {
    require(s > 0.0 && std::isfinite(s), ErrorCode::kInvalidArgument, "resize scales must be positive");
  }
}

MomentumState MomentumState::zeros_like(const Image& v) {
  return {Image(v.channels(), v.height(), v.width(), 0.0), 0};
}

MomentumState momentum_update(const MomentumState& state, const std::vector<Image>& grads, double mu) {
  require(!grads.empty(), ErrorCode::kInvalidArgument, "momentum_update needs at least one gradient");
  Image sum(state.g.channels(), state.g.height(), state.g.width(), 0.0);
  for (const Image& g : grads) {
    require_same_shape(g, state.g, "momentum_update");
    const double l1 = g.array().abs().sum();
    if (l1 > 0.0) sum.array() += g.array() / l1;
  }
  MomentumState next{state.g, state.iteration + 1};
  next.g.array() = mu * state.g.array() + sum.array() / static_cast<double>(grads.size());
  require(all_finite(next.g), ErrorCode::kNumericalFailure, "accumulated gradient is not finite");
  return next;
}

Image ascent_step(const Image& v_adv, const Image& g, double alpha, const Image& v_orig, double eps_v) {
  require_same_shape(v_adv, g, "ascent_step");
  require_same_shape(v_adv, v_orig, "ascent_step");
  Image out = v_orig;
  const auto sign = g.array().sign();
  const auto delta = (v_adv.array() + alpha * sign - v_orig.array()).max(-eps_v).min(eps_v);
  out.array() = (v_orig.array() + delta).max(0.0).min(1.0);
  return out;
}

ImageAttackResult image_attack(const EncoderPair& pair, const Image& v, const std::vector<TokenSequence>& captions,
                               const AttackBudget& budget, ShuffleKind shuffle, std::uint64_t seed) {
  budget.validate();
  pair.check_image(v);
  const EmbeddingSet texts = pair.encode_texts(guiding_captions(captions, budget.caption_set_size));

  std::vector<ResizeOperator> resizes;
  if (budget.resize) {
    for (double s : budget.resize_scales) resizes.emplace_back(v.height(), v.width(), s);
  }

  ImageAttackResult result{v, {}};
  result.trace.push_back(loss(LossSpec{}, pair.encode_image(v), texts));

  Rng rng(seed);
  MomentumState state = MomentumState::zeros_like(v);
  for (int i = 0; i < budget.T; ++i) {
    std::vector<ShuffleDraw> draws;
    if (shuffle == ShuffleKind::kLocal) draws = draw_local_shuffles(budget.shuffle, rng);
    if (shuffle == ShuffleKind::kGlobal) draws = draw_global_shuffles(budget.shuffle.N, rng);

    std::vector<CopyPlan> plans;
    const std::size_t shuffle_count = std::max<std::size_t>(draws.size(), 1);
    for (std::size_t s = 0; s < shuffle_count; ++s) {
      const ShuffleDraw* draw = draws.empty() ? nullptr : &draws[s];
      if (resizes.empty()) {
        plans.push_back({draw, nullptr});
      } else {
        for (const ResizeOperator& r : resizes) plans.push_back({draw, &r});
      }
    }

    std::vector<Image> grads;
    grads.reserve(plans.size());
    for (const CopyPlan& p : plans) {
      double copy_loss = 0.0;
      const Image g = pair.input_gradient(apply_plan(p, result.v_adv, budget.order), texts, &copy_loss);
      if (!std::isfinite(copy_loss) || !all_finite(g)) {
        fail(ErrorCode::kNumericalFailure, "image attack loss is not finite at iteration " + std::to_string(i));
      }
      grads.push_back(pull_back(p, g, budget.order));
    }
    state = momentum_update(state, grads, budget.mu);
    result.v_adv = ascent_step(result.v_adv, state.g, budget.alpha, v, budget.eps_v);

    const double j = loss(LossSpec{}, pair.encode_image(result.v_adv), texts);
    if (!std::isfinite(j)) {
      fail(ErrorCode::kNumericalFailure, "image attack loss is not finite at iteration " + std::to_string(i));
    }
    result.trace.push_back(j);
  }
  return result;
}

std::vector<TokenSequence> text_candidates(const Vocabulary& vocab, const nn::Matrix& token_embeddings,
                                           const TokenSequence& t, int position, int W) {
  require(position >= 0 && position < static_cast<int>(t.size()), ErrorCode::kInvalidArgument,
          "position " + std::to_string(position) + " outside caption of length " + std::to_string(t.size()));
  require(W >= 1, ErrorCode::kInvalidArgument, "candidate count W must be >= 1");
  const TokenId original = t[static_cast<std::size_t>(position)];
  const WordClass cls = vocab.word_class(original);
  if (cls == WordClass::kFunction) return {};
  require(token_embeddings.rows() == vocab.size(), ErrorCode::kVocabularyMismatch,
          "token embedding table does not match the vocabulary");

  std::vector<std::pair<double, TokenId>> ranked;
  for (TokenId id : vocab.class_members(cls)) {
    if (id == original) continue;
    ranked.emplace_back((token_embeddings.row(id) - token_embeddings.row(original)).squaredNorm(), id);
  }
  std::sort(ranked.begin(), ranked.end());
  if (static_cast<int>(ranked.size()) > W) ranked.resize(static_cast<std::size_t>(W));
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second < b.second; });

  std::vector<TokenSequence> out;
  for (const auto& [distance, id] : ranked) {
    TokenSequence c = t;
    c[static_cast<std::size_t>(position)] = id;
    out.push_back(std::move(c));
  }
  return out;
}

double text_objective(const EncoderPair& pair, const TokenSequence& t, const Embedding& e_orig,
                      const EmbeddingSet& e_neighbors, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorCode::kInvalidArgument, "lambda must lie in [0, 1]");
  const Embedding e_t = pair.encode_text(t);
  const double j_orig = single_loss(e_orig, e_t);
  if (lambda == 1.0) return j_orig;
  require(e_neighbors.cols() > 0, ErrorCode::kInvalidArgument, "text objective needs neighbors when lambda < 1");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < e_neighbors.cols(); ++i) sum += single_loss(e_neighbors.col(i), e_t);
  return lambda * j_orig + (1.0 - lambda) * (sum / static_cast<double>(e_neighbors.cols()));
}

double text_objective(const EncoderPair& pair, const TokenSequence& t, const Image& v_orig,
                      const std::vector<Image>& neighbors, double lambda) {
  return text_objective(pair, t, pair.encode_image(v_orig), pair.encode_images(neighbors), lambda);
}

TokenSequence text_attack(const EncoderPair& pair, const Vocabulary& vocab, const TokenSequence& t,
                          const Embedding& e_orig, const EmbeddingSet& e_neighbors, const AttackBudget& budget,
                          double lambda) {
  budget.validate();
  if (budget.eps_t == 0) return t;
  double best = text_objective(pair, t, e_orig, e_neighbors, lambda);
  TokenSequence best_t = t;
  for (int p = 0; p < static_cast<int>(t.size()); ++p) {
    for (const TokenSequence& c : text_candidates(vocab, pair.token_embeddings(), t, p, budget.W)) {
      const double score = text_objective(pair, c, e_orig, e_neighbors, lambda);
      if (score > best) {
        best = score;
        best_t = c;
      }
    }
  }
  return best_t;
}

std::vector<Image> text_neighbors(const Image& v_adv, const SampleConfig& cfg, Rng& rng) {
  if (cfg.M == 0) return {v_adv};
  return sample_neighbors(v_adv, cfg, rng);
}

TokenSequence text_attack(const EncoderPair& pair, const Vocabulary& vocab, const Image& v_orig, const Image& v_adv,
                          const TokenSequence& t, const AttackBudget& budget, Rng& rng) {
  const EmbeddingSet e_neighbors =
      budget.lambda == 1.0 ? EmbeddingSet(pair.embed_dim(), 0)
                           : pair.encode_images(text_neighbors(v_adv, budget.sample, rng));
  return text_attack(pair, vocab, t, pair.encode_image(v_orig), e_neighbors, budget, budget.lambda);
}

int word_distance(const TokenSequence& a, const TokenSequence& b) {
  if (a.size() != b.size()) return static_cast<int>(std::max(a.size(), b.size()));
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> kNames = {
      "pgd",    "mifgsm",         "sep",             "sga_tit",
      "sga_it", "sga_it_sampled", "sga_it_shuffled", "sga_it_sampled_shuffled",
      "lssa",   "lssa_global_shuffle",
  };
  return kNames;
}

PipelineSpec pipeline_spec(std::string_view name) {
  PipelineSpec s;
  s.name = std::string(name);
  if (name == "pgd") return s;
  if (name == "mifgsm") {
    s.momentum = true;
    return s;
  }
  if (name == "sep") {
    s.text = TextStage::kAgainstOriginal;
    return s;
  }
  if (name == "sga_tit") {
    s.pre_text = true;
    s.text = TextStage::kAgainstAdversarial;
    return s;
  }
  if (name == "sga_it") {
    s.text = TextStage::kAgainstAdversarial;
    return s;
  }
  if (name == "sga_it_sampled") {
    s.text = TextStage::kSampled;
    return s;
  }
  if (name == "sga_it_shuffled") {
    s.shuffle = ShuffleKind::kLocal;
    s.text = TextStage::kAgainstAdversarial;
    return s;
  }
  if (name == "sga_it_sampled_shuffled") {
    s.shuffle = ShuffleKind::kLocal;
    s.text = TextStage::kSampled;
    return s;
  }
  if (name == "lssa" || name == "lssa_global_shuffle") {
    s.shuffle = name == "lssa" ? ShuffleKind::kLocal : ShuffleKind::kGlobal;
    s.momentum = true;
    s.text = TextStage::kSampled;
    return s;
  }
  fail(ErrorCode::kUnknownPipeline, "unknown pipeline '" + std::string(name) + "'");
}

std::string image_stage_key(const PipelineSpec& spec, const AttackBudget& b) {
  const bool shuffled = spec.shuffle != ShuffleKind::kNone && b.shuffle.N > 0;
  std::ostringstream key;
  key << "pre=" << spec.pre_text << ";shuffle=" << (shuffled ? static_cast<int>(spec.shuffle) : 0)
      << ";mu=" << number(spec.momentum ? b.mu : 0.0) << ";eps_v=" << number(b.eps_v)
      << ";alpha=" << number(b.alpha) << ";T=" << b.T << ";captions=" << b.caption_set_size;
  if (shuffled) key << ";N=" << b.shuffle.N << ";pos=" << to_string(b.shuffle.position_mode);
  if (b.resize) {
    key << ";resize=" << to_string(b.order);
    for (double s : b.resize_scales) key << "," << number(s);
  }
  if (spec.pre_text) key << ";W=" << b.W << ";eps_t=" << b.eps_t;
  return key.str();
}

AttackOutcome run_pipeline(const PipelineSpec& spec, const EncoderPair& source, const Vocabulary& vocab,
                           const CaptionedImage& item, const AttackBudget& budget, std::uint64_t seed,
                           const ImageAttackResult* cached_image_stage) {
  budget.validate();
  AttackOutcome out;
  out.pair_id = item.pair_id;
  out.image_seed = derive_seed(seed, "image");
  out.text_seed = derive_seed(seed, "text");
  const Image& v = item.image;
  const Embedding e_clean = source.encode_image(v);
  const EmbeddingSet none(source.embed_dim(), 0);

  std::vector<TokenSequence> guide = item.captions;
  if (spec.pre_text) {
    for (TokenSequence& t : guide) t = text_attack(source, vocab, t, e_clean, none, budget, 1.0);
  }

  AttackBudget image_budget = budget;
  if (!spec.momentum) image_budget.mu = 0.0;
  const ShuffleKind shuffle = image_budget.shuffle.N > 0 ? spec.shuffle : ShuffleKind::kNone;
  ImageAttackResult image = cached_image_stage != nullptr
                                ? *cached_image_stage
                                : image_attack(source, v, guide, image_budget, shuffle, out.image_seed);
  out.v_adv = std::move(image.v_adv);
  out.trace = std::move(image.trace);

  out.t_adv = item.captions;
  if (spec.text == TextStage::kNone) return out;

  EmbeddingSet e_neighbors = none;
  double lambda = 1.0;
  switch (spec.text) {
    case TextStage::kAgainstOriginal:
      break;
    case TextStage::kAgainstAdversarial:
      lambda = 0.0;
      e_neighbors = source.encode_images({out.v_adv});
      break;
    case TextStage::kSampled: {
      lambda = budget.lambda;
      if (lambda < 1.0) {
        Rng rng(out.text_seed);
        e_neighbors = source.encode_images(text_neighbors(out.v_adv, budget.sample, rng));
      }
      break;
    }
    case TextStage::kNone:
      break;
  }
  for (TokenSequence& t : out.t_adv) t = text_attack(source, vocab, t, e_clean, e_neighbors, budget, lambda);
  return out;
}

AttackOutcome run_pipeline(std::string_view name, const EncoderPair& source, const Vocabulary& vocab,
                           const CaptionedImage& item, const AttackBudget& budget, std::uint64_t seed) {
  return run_pipeline(pipeline_spec(name), source, vocab, item, budget, seed);
}

}  // namespace lssa
