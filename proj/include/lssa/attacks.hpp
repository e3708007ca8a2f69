#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lssa/data.hpp"
#include "lssa/image.hpp"
#include "lssa/models.hpp"
#include "lssa/rng.hpp"
#include "lssa/transforms.hpp"

namespace lssa {

enum class TransformOrder { kShuffleThenResize, kResizeThenShuffle };

std::string_view to_string(TransformOrder order);
TransformOrder parse_transform_order(std::string_view name);

struct AttackBudget {
  double eps_v = 2.0 / 255.0;
  double alpha = 0.5 / 255.0;
  int T = 10;
  double mu = 1.0;
  int eps_t = 1;
  int W = 10;
  double lambda = 0.5;
  ShuffleConfig shuffle;
  SampleConfig sample;
  /// Multiplies every gradient copy by the resize set when true.
  bool resize = false;
  std::vector<double> resize_scales = default_resize_scales();
  TransformOrder order = TransformOrder::kShuffleThenResize;
  /// How many of the paired captions guide the image attack.
  int caption_set_size = kCaptionsPerImage;

  void validate() const;
};

struct MomentumState {
  Image g;
  int iteration = 0;

  static MomentumState zeros_like(const Image& v);
};

/// g <- mu * g + (1/N) * sum_j grads_j / ||grads_j||_1; zero gradients add nothing.
MomentumState momentum_update(const MomentumState& state, const std::vector<Image>& grads, double mu);

/// clamp01(v_orig + clip(v_adv + alpha * sign(g) - v_orig, -eps_v, eps_v)), sign(0) = 0.
Image ascent_step(const Image& v_adv, const Image& g, double alpha, const Image& v_orig, double eps_v);

enum class ShuffleKind { kNone, kLocal, kGlobal };

struct ImageAttackResult {
  Image v_adv;
  /// J on the unshuffled iterate, entries 0..T (entry 0 is the clean image).
  std::vector<double> trace;
};

/// Iterated sign ascent on J = mean cosine dissimilarity to the captions.
/// Each iteration averages L1-normalized gradients over N transformed copies
/// of the current iterate; N = 0 (or kNone) uses the iterate itself.
ImageAttackResult image_attack(const EncoderPair& pair, const Image& v, const std::vector<TokenSequence>& captions,
                               const AttackBudget& budget, ShuffleKind shuffle, std::uint64_t seed);

/// Up to W substitutes for t[position]: nearest tokens of the same word class
/// in token-embedding space (Euclidean, ties by id), original excluded.
/// Function words have none. Result is ordered by substituted token id.
std::vector<TokenSequence> text_candidates(const Vocabulary& vocab, const nn::Matrix& token_embeddings,
                                           const TokenSequence& t, int position, int W);

/// lambda * J(e_orig, t) + (1 - lambda) * mean_i J(e_neighbors[:, i], t).
double text_objective(const EncoderPair& pair, const TokenSequence& t, const Embedding& e_orig,
                      const EmbeddingSet& e_neighbors, double lambda);
double text_objective(const EncoderPair& pair, const TokenSequence& t, const Image& v_orig,
                      const std::vector<Image>& neighbors, double lambda);

/// Exhaustive search of the one-word ball. Ties keep the lowest position,
/// then the lowest token id; t comes back unchanged unless strictly beaten.
TokenSequence text_attack(const EncoderPair& pair, const Vocabulary& vocab, const TokenSequence& t,
                          const Embedding& e_orig, const EmbeddingSet& e_neighbors, const AttackBudget& budget,
                          double lambda);

/// Neighbor images for the text stage: M samples around v_adv, or {v_adv}
/// itself when M = 0.
std::vector<Image> text_neighbors(const Image& v_adv, const SampleConfig& cfg, Rng& rng);

TokenSequence text_attack(const EncoderPair& pair, const Vocabulary& vocab, const Image& v_orig, const Image& v_adv,
                          const TokenSequence& t, const AttackBudget& budget, Rng& rng);

int word_distance(const TokenSequence& a, const TokenSequence& b);

enum class TextStage {
  kNone,
  kAgainstOriginal,     // lambda = 1, scored on the clean image only
  kAgainstAdversarial,  // lambda = 0, neighbors = {v_adv}
  kSampled,             // lambda and M from the budget
};

struct PipelineSpec {
  std::string name;
  /// Text attack on the clean image before the image stage, whose captions
  /// then guide the image attack.
  bool pre_text = false;
  ShuffleKind shuffle = ShuffleKind::kNone;
  bool momentum = false;
  TextStage text = TextStage::kNone;
};

const std::vector<std::string>& pipeline_names();
PipelineSpec pipeline_spec(std::string_view name);

struct AttackOutcome {
  int pair_id = -1;
  Image v_adv;
  std::vector<TokenSequence> t_adv;  // one per paired caption
  std::vector<double> trace;
  std::uint64_t image_seed = 0;
  std::uint64_t text_seed = 0;
};

/// Identifies the image stage so outcomes sharing it can reuse the result.
std::string image_stage_key(const PipelineSpec& spec, const AttackBudget& budget);

AttackOutcome run_pipeline(const PipelineSpec& spec, const EncoderPair& source, const Vocabulary& vocab,
                           const CaptionedImage& item, const AttackBudget& budget, std::uint64_t seed,
                           const ImageAttackResult* cached_image_stage = nullptr);
AttackOutcome run_pipeline(std::string_view name, const EncoderPair& source, const Vocabulary& vocab,
                           const CaptionedImage& item, const AttackBudget& budget, std::uint64_t seed);

}  // namespace lssa
