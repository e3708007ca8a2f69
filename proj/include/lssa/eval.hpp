#pragma once

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lssa/attacks.hpp"
#include "lssa/data.hpp"
#include "lssa/models.hpp"

namespace lssa {

enum class Direction { kTR, kIR };

std::string_view to_string(Direction direction);

/// Test-split gallery of one model: image and caption embeddings, unit norm.
struct RetrievalIndex {
  std::string model_tag;
  std::vector<int> pair_ids;
  EmbeddingSet images;          // d x n
  EmbeddingSet texts;           // d x m
  std::vector<int> text_owner;  // column of `images` each text belongs to

  int num_images() const { return static_cast<int>(images.cols()); }
  int num_texts() const { return static_cast<int>(texts.cols()); }
  /// Cosine similarity, images by texts.
  Eigen::MatrixXd similarity() const;
};

RetrievalIndex build_index(const EncoderPair& model, const Vocabulary& vocab, const std::vector<int>& pair_ids,
                           const std::vector<Image>& images, const std::vector<std::vector<TokenSequence>>& captions);
RetrievalIndex build_index(const EncoderPair& model, const Dataset& dataset, const std::vector<int>& pair_ids);

/// Zero-based rank of the best-placed correct item per query. TR queries are
/// images (any paired caption is correct); IR queries are captions. Equal
/// scores are ordered by gallery position.
std::vector<int> match_ranks(const RetrievalIndex& index, Direction direction);

double recall_at_k(const std::vector<int>& ranks, int k);
double recall_at_k(const RetrievalIndex& index, int k, Direction direction);

struct AsrResult {
  int eligible = 0;
  int flipped = 0;
  /// Empty when no query was correct before the attack.
  std::optional<double> rate;
};

/// Among queries inside the top k before the attack, the percentage that are
/// outside it afterwards.
AsrResult attack_success_rate(const std::vector<int>& clean_ranks, const std::vector<int>& adv_ranks, int k);
AsrResult attack_success_rate(const RetrievalIndex& clean, const RetrievalIndex& adv, int k, Direction direction);

inline constexpr std::array<int, 3> kRecallCutoffs = {1, 5, 10};
inline constexpr int kReportSchemaVersion = 1;

struct RetrievalMetrics {
  std::array<double, 3> tr_clean{}, tr_adv{}, ir_clean{}, ir_adv{};
  std::array<AsrResult, 3> asr_tr{}, asr_ir{};

  /// Mean of the defined R@1 ASRs (TR and IR); empty when neither is defined.
  std::optional<double> headline_asr() const;
};

struct PairRecord {
  int pair_id = -1;
  double linf = 0.0;
  double min_value = 0.0;  // pixel range of v_adv
  double max_value = 0.0;
  int words_changed = 0;
  int tr_rank_clean = 0;
  int tr_rank_adv = 0;
  std::vector<int> ir_rank_clean;
  std::vector<int> ir_rank_adv;
};

struct TransferReport {
  std::string source;
  std::string target;
  std::string attack;
  bool white_box = false;
  std::uint64_t seed = 0;
  AttackBudget budget;
  RetrievalMetrics metrics;
  std::vector<PairRecord> per_pair;
};

/// Craft-once cache of image-stage results, shared across pipelines whose
/// image stages coincide. Safe for concurrent use.
class ImageStageCache {
 public:
  std::optional<ImageAttackResult> find(const std::string& key) const;
  void insert(const std::string& key, const ImageAttackResult& value);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, ImageAttackResult> entries_;
};

/// Per-pair attack seed: root -> "attack" -> pair_id.
std::uint64_t pair_attack_seed(std::uint64_t root_seed, int pair_id);

std::vector<AttackOutcome> craft_outcomes(const EncoderPair& source, const Dataset& dataset,
                                          const std::vector<int>& pair_ids, const PipelineSpec& spec,
                                          const AttackBudget& budget, std::uint64_t root_seed, int workers,
                                          ImageStageCache* cache = nullptr);

TransferReport evaluate_transfer(const EncoderPair& target, const Dataset& dataset, const std::vector<int>& pair_ids,
                                 const std::vector<AttackOutcome>& outcomes);

/// Every source crafts each attack once; the result is scored on every model.
/// Reports are ordered source-major, then attack, then target.
std::vector<TransferReport> transfer_matrix(const std::vector<const EncoderPair*>& models,
                                            const std::vector<PipelineSpec>& attacks, const Dataset& dataset,
                                            const AttackBudget& budget, std::uint64_t root_seed, int workers,
                                            ImageStageCache* cache = nullptr);

nlohmann::json budget_to_json(const AttackBudget& budget);
AttackBudget budget_from_json(const nlohmann::json& j, AttackBudget base = {});
nlohmann::json to_json(const TransferReport& report);

/// Long-format rows, one per report; fixed column order and number format.
std::string transfer_csv_header();
std::string transfer_csv_row(const TransferReport& report);
std::string format_rate(const std::optional<double>& rate);

}  // namespace lssa
