#pragma once

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lssa/attacks.hpp"
#include "lssa/data.hpp"
#include "lssa/eval.hpp"
#include "lssa/models.hpp"

namespace lssa {

enum class SweepParameter { kN, kPositionMode, kLambda, kMu, kEps0, kM };

std::string_view to_string(SweepParameter p);
SweepParameter parse_sweep_parameter(std::string_view name);

struct AblationSpec {
  std::string name;  // output subdirectory; defaults to the parameter name
  SweepParameter parameter = SweepParameter::kN;
  /// Numbers for every parameter except position_mode, which takes mode names.
  std::vector<std::string> values;
  std::string pipeline = "lssa";
  std::string source;  // empty: first attack source

  void validate() const;
  /// Base budget with the swept parameter set to values[index].
  AttackBudget apply(const AttackBudget& base, std::size_t index) const;
};

struct ModelEntry {
  Architecture arch = Architecture::kConv;
  std::uint64_t seed = 0;

  std::string tag() const;
};

struct ReportOptions {
  double amplification = 40.0;
  int triptych_pairs = 4;
  std::string pipeline = "lssa";
};

struct ExperimentConfig {
  std::filesystem::path output_dir = "runs/default";
  int workers = 0;  // 0: LSSA_WORKERS or hardware concurrency
  DatasetSpec dataset;
  TrainConfig train;
  std::vector<ModelEntry> models;
  std::vector<std::string> sources;  // model tags that craft attacks
  std::vector<std::string> pipelines;
  std::vector<std::uint64_t> seeds;
  AttackBudget budget;
  std::vector<AblationSpec> ablations;
  ReportOptions report;

  /// Checks every invariant before any compute; throws kConfig.
  void validate() const;
  int resolved_workers() const;
};

/// The documented default experiment: 300 images, conv_s0 / conv_s1 /
/// patch_s0, every pipeline crafted on conv_s0, 5 seeds, an N sweep.
ExperimentConfig default_config();

/// Keys absent from the document keep the default_config() value; unknown
/// keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Directed graph of artifacts. Each node records a fingerprint of everything
/// it depends on in a stamp file; a node is fresh when its stamp matches and
/// no input stamp is newer than its own.
class ArtifactGraph {
 public:
  struct Node {
    std::string name;
    std::filesystem::path path;
    std::vector<std::string> inputs;
    std::string fingerprint;
  };

  explicit ArtifactGraph(std::filesystem::path stamp_dir) : stamp_dir_(std::move(stamp_dir)) {}

  void add(Node node);
  bool contains(const std::string& name) const { return nodes_.count(name) != 0; }
  const Node& node(const std::string& name) const;

  /// Throws kConfig naming a cycle if one exists.
  void check_acyclic() const;
  std::vector<std::string> topological_order() const;

  bool is_fresh(const std::string& name) const;
  /// Throws kMissingArtifact when an input is absent or stale.
  void require_inputs(const std::string& name) const;
  void mark_built(const std::string& name) const;

 private:
  std::filesystem::path stamp_path(const std::string& name) const;
  bool stamp_matches(const std::string& name) const;

  std::filesystem::path stamp_dir_;
  std::map<std::string, Node> nodes_;
};

/// Artifact graph implied by a config: data, one model per entry, one attack
/// per (source, pipeline, seed), eval, one node per sweep, report.
ArtifactGraph build_artifact_graph(const ExperimentConfig& config);

struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path model(const std::string& tag) const { return root / "models" / (tag + ".ckpt"); }
  std::filesystem::path attack(const std::string& source, const std::string& pipeline, std::uint64_t seed) const;
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path ablation(const std::string& name) const { return root / "ablate" / name; }
  std::filesystem::path report() const { return root / "report"; }
};

void save_outcomes(const std::vector<AttackOutcome>& outcomes, const Vocabulary& vocab,
                   const std::filesystem::path& directory);
std::vector<AttackOutcome> load_outcomes(const std::filesystem::path& directory);

struct CommandOptions {
  bool force = false;  // rebuild even when fresh
  bool verbose = true;
};

void cmd_gen_data(const ExperimentConfig& config, const CommandOptions& options = {});
void cmd_train(const ExperimentConfig& config, const CommandOptions& options = {});
void cmd_attack(const ExperimentConfig& config, const CommandOptions& options = {});
void cmd_eval(const ExperimentConfig& config, const CommandOptions& options = {});
void cmd_ablate(const ExperimentConfig& config, const CommandOptions& options = {});
void cmd_report(const ExperimentConfig& config, const CommandOptions& options = {});
void cmd_run_all(const ExperimentConfig& config, const CommandOptions& options = {});

/// 0 success, 2 config error, 3 missing artifact, 4 numerical failure,
/// 1 anything else.
int exit_code_for(ErrorCode code);
nlohmann::json error_record(const Error& error, std::string_view command);

// Report rendering.

/// clamp01(0.5 + amplification * (v_adv - v)).
Image perturbation_panel(const Image& v, const Image& v_adv, double amplification);
/// Original, adversarial and amplified perturbation side by side.
Image triptych(const Image& v, const Image& v_adv, double amplification);
/// Caption with each substituted word shown as [old -> new].
std::string caption_diff(const Vocabulary& vocab, const TokenSequence& original, const TokenSequence& adversarial);

struct PlotSeries {
  std::string label;
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Line plot with error bars over categorical x labels.
std::string svg_line_plot(const std::string& title, const std::vector<std::string>& x_labels,
                          const std::vector<PlotSeries>& series, const std::string& y_label);

double sample_stddev(const std::vector<double>& xs);
double median(std::vector<double> xs);

}  // namespace lssa
