#include "lssa/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "lssa/io.hpp"
#include "lssa/parallel.hpp"

namespace lssa {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void log(const CommandOptions& options, const std::string& message) {
  if (options.verbose) std::cerr << "[lssa-lab] " << message << std::endl;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  require(obj.is_object(), ErrorCode::kConfig, where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    const bool known = std::any_of(keys.begin(), keys.end(), [&key](const char* k) { return key == k; });
    require(known, ErrorCode::kConfig, "unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read_key(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "config key '" + where + "." + key + "': " + e.what());
  }
}

// Re-raises any validation failure as a config error.
template <typename Fn>
void as_config_error(const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    fail(ErrorCode::kConfig, where + ": " + e.what());
  }
}

std::string fingerprint(const json& j) { return io::sha256_hex(j.dump()); }

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    require(used == s.size(), ErrorCode::kConfig, what + ": '" + s + "' is not a number");
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorCode::kConfig, what + ": '" + s + "' is not a number");
  }
}

int parse_count(const std::string& s, const std::string& what) {
  const double v = parse_number(s, what);
  require(v >= 0 && v == std::floor(v) && v <= 1e6, ErrorCode::kConfig,
          what + ": '" + s + "' must be a non-negative integer");
  return static_cast<int>(v);
}

std::string fixed(double x, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

std::string stamp_file_name(const std::string& node) {
  std::string s = node;
  std::replace(s.begin(), s.end(), '/', '_');
  return s + ".json";
}

std::string attack_node(const std::string& source, const std::string& pipeline, std::uint64_t seed) {
  return "attack/" + source + "/" + pipeline + "/seed_" + std::to_string(seed);
}

std::string model_node(const std::string& tag) { return "model/" + tag; }

std::string ablation_node(const std::string& name) { return "ablate/" + name; }

struct Loaded {
  Dataset dataset;
  std::vector<EncoderPair> models;  // config order

  const EncoderPair& by_tag(const std::string& tag) const {
    for (const auto& m : models) {
      if (m.tag() == tag) return m;
    }
    fail(ErrorCode::kConfig, "no model tagged '" + tag + "'");
  }
};

Loaded load_inputs(const ExperimentConfig& config, const RunPaths& paths) {
  Loaded loaded{load_dataset(paths.data()), {}};
  for (const ModelEntry& m : config.models) {
    loaded.models.push_back(load_checkpoint(paths.model(m.tag()), loaded.dataset.vocab).model);
  }
  return loaded;
}

std::vector<double> defined_values(const std::vector<std::optional<double>>& xs) {
  std::vector<double> out;
  for (const auto& x : xs) {
    if (x) out.push_back(*x);
  }
  return out;
}

std::string mean_std_cells(const std::vector<std::optional<double>>& xs) {
  const auto vals = defined_values(xs);
  if (vals.empty()) return "NA,NA";
  const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  return fixed(mean) + "," + fixed(sample_stddev(vals));
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::kN: return "N";
    case SweepParameter::kPositionMode: return "position_mode";
    case SweepParameter::kLambda: return "lambda";
    case SweepParameter::kMu: return "mu";
    case SweepParameter::kEps0: return "eps0";
    case SweepParameter::kM: return "M";
  }
  return "?";
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  for (SweepParameter p : {SweepParameter::kN, SweepParameter::kPositionMode, SweepParameter::kLambda,
                           SweepParameter::kMu, SweepParameter::kEps0, SweepParameter::kM}) {
    if (to_string(p) == name) return p;
  }
  fail(ErrorCode::kConfig, "unknown sweep parameter '" + std::string(name) +
                               "' (expected N, position_mode, lambda, mu, eps0 or M)");
}

void AblationSpec::validate() const {
  const std::string what = "ablation '" + name + "'";
  require(!values.empty(), ErrorCode::kConfig, what + " has an empty value list");
  std::set<std::string> seen;
  for (const std::string& v : values) {
    require(seen.insert(v).second, ErrorCode::kConfig, what + " lists value '" + v + "' twice");
    switch (parameter) {
      case SweepParameter::kN:
      case SweepParameter::kM:
        parse_count(v, what);
        break;
      case SweepParameter::kPositionMode:
        as_config_error(what, [&] { parse_position_mode(v); });
        break;
      case SweepParameter::kLambda: {
        const double x = parse_number(v, what);
        require(x >= 0.0 && x <= 1.0, ErrorCode::kConfig, what + ": lambda " + v + " outside [0, 1]");
        break;
      }
      case SweepParameter::kMu:
      case SweepParameter::kEps0: {
        const double x = parse_number(v, what);
        require(x >= 0.0 && std::isfinite(x), ErrorCode::kConfig, what + ": value " + v + " must be >= 0");
        break;
      }
    }
  }
  as_config_error(what, [&] { pipeline_spec(pipeline); });
}

AttackBudget AblationSpec::apply(const AttackBudget& base, std::size_t index) const {
  AttackBudget b = base;
  const std::string& v = values.at(index);
  switch (parameter) {
    case SweepParameter::kN: b.shuffle.N = parse_count(v, name); break;
    case SweepParameter::kPositionMode: b.shuffle.position_mode = parse_position_mode(v); break;
    case SweepParameter::kLambda: b.lambda = parse_number(v, name); break;
    case SweepParameter::kMu: b.mu = parse_number(v, name); break;
    case SweepParameter::kEps0: b.sample.eps0 = parse_number(v, name); break;
    case SweepParameter::kM: b.sample.M = parse_count(v, name); break;
  }
  return b;
}

std::string ModelEntry::tag() const { return std::string(to_string(arch)) + "_s" + std::to_string(seed); }

void ExperimentConfig::validate() const {
  require(workers >= 0, ErrorCode::kConfig, "workers must be >= 0");
  require(dataset.num_images >= 2, ErrorCode::kConfig, "dataset.num_images must be at least 2");
  require(dataset.height >= 16 && dataset.width >= 16, ErrorCode::kConfig, "dataset images must be at least 16x16");
  require(dataset.height % 4 == 0 && dataset.width % 4 == 0, ErrorCode::kConfig,
          "dataset height and width must be divisible by 4 (local shuffle blocks)");
  require(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0, ErrorCode::kConfig,
          "dataset.test_fraction must lie in (0, 1)");
  require(train.epochs >= 1, ErrorCode::kConfig, "train.epochs must be >= 1");
  require(train.batch >= 2, ErrorCode::kConfig, "train.batch must be >= 2");
  require(train.learning_rate > 0.0, ErrorCode::kConfig, "train.learning_rate must be positive");
  require(train.embed_dim >= 1, ErrorCode::kConfig, "train.embed_dim must be >= 1");
  require(train.temperature > 0.0, ErrorCode::kConfig, "train.temperature must be positive");

  require(!models.empty(), ErrorCode::kConfig, "config lists no models");
  std::set<std::string> tags;
  for (const auto& m : models) require(tags.insert(m.tag()).second, ErrorCode::kConfig, "duplicate model " + m.tag());
  for (const auto& s : sources) {
    require(tags.count(s) != 0, ErrorCode::kConfig, "attack source '" + s + "' is not a configured model");
  }
  require(std::set<std::string>(sources.begin(), sources.end()).size() == sources.size(), ErrorCode::kConfig,
          "attack.sources lists a model twice");

  std::set<std::string> names;
  for (const auto& p : pipelines) {
    as_config_error("attack.pipelines", [&] { pipeline_spec(p); });
    require(names.insert(p).second, ErrorCode::kConfig, "pipeline '" + p + "' listed twice");
  }
  require(!seeds.empty(), ErrorCode::kConfig, "attack.seeds must be nonempty");
  require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(), ErrorCode::kConfig,
          "attack.seeds lists a seed twice");
  as_config_error("attack.budget", [&] { budget.validate(); });

  std::set<std::string> sweep_names;
  for (const auto& a : ablations) {
    a.validate();
    require(sweep_names.insert(a.name).second, ErrorCode::kConfig, "two ablations share the name '" + a.name + "'");
    const std::string source = a.source.empty() ? (sources.empty() ? "" : sources.front()) : a.source;
    require(tags.count(source) != 0, ErrorCode::kConfig,
            "ablation '" + a.name + "' needs a source model that is configured");
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      as_config_error("ablation '" + a.name + "'", [&] { a.apply(budget, i).validate(); });
    }
  }
  require(report.amplification > 0.0 && std::isfinite(report.amplification), ErrorCode::kConfig,
          "report.amplification must be positive");
  require(report.triptych_pairs >= 0, ErrorCode::kConfig, "report.triptych_pairs must be >= 0");
  as_config_error("report.pipeline", [&] { pipeline_spec(report.pipeline); });
}

int ExperimentConfig::resolved_workers() const {
  if (const char* env = std::getenv("LSSA_WORKERS"); env != nullptr && *env != '\0') return default_workers();
  return workers > 0 ? workers : default_workers();
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.models = {{Architecture::kConv, 0}, {Architecture::kConv, 1}, {Architecture::kPatch, 0}};
  c.sources = {"conv_s0"};
  c.pipelines = pipeline_names();
  c.seeds = {0, 1, 2, 3, 4};
  AblationSpec sweep;
  sweep.name = "N";
  sweep.parameter = SweepParameter::kN;
  sweep.values = {"0", "5", "10", "20"};
  c.ablations = {sweep};
  return c;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c = default_config();
  reject_unknown(j, {"output_dir", "workers", "dataset", "train", "models", "attack", "ablations", "report"}, "config");
  if (j.contains("output_dir")) {
    std::string out;
    read_key(j, "output_dir", out, "config");
    c.output_dir = out;
  }
  read_key(j, "workers", c.workers, "config");

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d, {"num_images", "height", "width", "seed", "test_fraction"}, "dataset");
    read_key(d, "num_images", c.dataset.num_images, "dataset");
    read_key(d, "height", c.dataset.height, "dataset");
    read_key(d, "width", c.dataset.width, "dataset");
    read_key(d, "seed", c.dataset.seed, "dataset");
    read_key(d, "test_fraction", c.dataset.test_fraction, "dataset");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, {"epochs", "batch", "learning_rate", "embed_dim", "temperature", "augment"}, "train");
    read_key(t, "epochs", c.train.epochs, "train");
    read_key(t, "batch", c.train.batch, "train");
    read_key(t, "learning_rate", c.train.learning_rate, "train");
    read_key(t, "embed_dim", c.train.embed_dim, "train");
    read_key(t, "temperature", c.train.temperature, "train");
    read_key(t, "augment", c.train.augment, "train");
  }
  if (j.contains("models")) {
    require(j.at("models").is_array(), ErrorCode::kConfig, "models must be a list");
    c.models.clear();
    for (const json& m : j.at("models")) {
      reject_unknown(m, {"arch", "seed"}, "models[]");
      ModelEntry e;
      std::string arch = "conv";
      read_key(m, "arch", arch, "models[]");
      as_config_error("models[].arch", [&] { e.arch = parse_architecture(arch); });
      read_key(m, "seed", e.seed, "models[]");
      c.models.push_back(e);
    }
    c.sources = {c.models.empty() ? std::string() : c.models.front().tag()};
  }
  if (j.contains("attack")) {
    const json& a = j.at("attack");
    reject_unknown(a, {"sources", "pipelines", "seeds", "budget"}, "attack");
    if (a.contains("sources")) {
      if (a.at("sources").is_string() && a.at("sources").get<std::string>() == "all") {
        c.sources.clear();
        for (const auto& m : c.models) c.sources.push_back(m.tag());
      } else {
        read_key(a, "sources", c.sources, "attack");
      }
    }
    read_key(a, "pipelines", c.pipelines, "attack");
    read_key(a, "seeds", c.seeds, "attack");
    if (a.contains("budget")) as_config_error("attack.budget", [&] { c.budget = budget_from_json(a.at("budget")); });
  }
  if (j.contains("ablations")) {
    require(j.at("ablations").is_array(), ErrorCode::kConfig, "ablations must be a list");
    c.ablations.clear();
    for (const json& s : j.at("ablations")) {
      reject_unknown(s, {"name", "parameter", "values", "pipeline", "source"}, "ablations[]");
      AblationSpec spec;
      std::string parameter;
      read_key(s, "parameter", parameter, "ablations[]");
      require(!parameter.empty(), ErrorCode::kConfig, "ablation is missing 'parameter'");
      spec.parameter = parse_sweep_parameter(parameter);
      spec.name = parameter;
      read_key(s, "name", spec.name, "ablations[]");
      read_key(s, "pipeline", spec.pipeline, "ablations[]");
      read_key(s, "source", spec.source, "ablations[]");
      require(s.contains("values") && s.at("values").is_array(), ErrorCode::kConfig,
              "ablation '" + spec.name + "' needs a 'values' list");
      for (const json& v : s.at("values")) spec.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      c.ablations.push_back(spec);
    }
  }
  if (j.contains("report")) {
    const json& r = j.at("report");
    reject_unknown(r, {"amplification", "triptych_pairs", "pipeline"}, "report");
    read_key(r, "amplification", c.report.amplification, "report");
    read_key(r, "triptych_pairs", c.report.triptych_pairs, "report");
    read_key(r, "pipeline", c.report.pipeline, "report");
  }
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) models.push_back({{"arch", to_string(m.arch)}, {"seed", m.seed}});
  json ablations = json::array();
  for (const auto& a : c.ablations) {
    ablations.push_back({{"name", a.name},
                         {"parameter", to_string(a.parameter)},
                         {"values", a.values},
                         {"pipeline", a.pipeline},
                         {"source", a.source}});
  }
  return {{"output_dir", c.output_dir.string()},
          {"workers", c.workers},
          {"dataset",
           {{"num_images", c.dataset.num_images},
            {"height", c.dataset.height},
            {"width", c.dataset.width},
            {"seed", c.dataset.seed},
            {"test_fraction", c.dataset.test_fraction}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"batch", c.train.batch},
            {"learning_rate", c.train.learning_rate},
            {"embed_dim", c.train.embed_dim},
            {"temperature", c.train.temperature},
            {"augment", c.train.augment}}},
          {"models", models},
          {"attack", {{"sources", c.sources}, {"pipelines", c.pipelines}, {"seeds", c.seeds},
                      {"budget", budget_to_json(c.budget)}}},
          {"ablations", ablations},
          {"report",
           {{"amplification", c.report.amplification},
            {"triptych_pairs", c.report.triptych_pairs},
            {"pipeline", c.report.pipeline}}}};
}

ExperimentConfig load_config(const fs::path& path) {
  require(fs::exists(path), ErrorCode::kConfig, "config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "cannot parse config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Artifact graph

void ArtifactGraph::add(Node node) {
  require(!node.name.empty(), ErrorCode::kInvalidArgument, "artifact node needs a name");
  const std::string name = node.name;
  require(nodes_.emplace(name, std::move(node)).second, ErrorCode::kConfig, "artifact '" + name + "' declared twice");
}

const ArtifactGraph::Node& ArtifactGraph::node(const std::string& name) const {
  const auto it = nodes_.find(name);
  require(it != nodes_.end(), ErrorCode::kInvalidArgument, "unknown artifact '" + name + "'");
  return it->second;
}

std::vector<std::string> ArtifactGraph::topological_order() const {
  // Depth-first with grey/black marking; a grey hit is a cycle.
  std::map<std::string, int> state;
  std::vector<std::string> order;
  std::vector<std::string> stack;
  std::function<void(const std::string&)> visit = [&](const std::string& name) {
    const int s = state[name];
    if (s == 2) return;
    if (s == 1) {
      std::string cycle;
      const auto from = std::find(stack.begin(), stack.end(), name);
      for (auto it = from; it != stack.end(); ++it) cycle += *it + " -> ";
      fail(ErrorCode::kConfig, "artifact graph has a cycle: " + cycle + name);
    }
    state[name] = 1;
    stack.push_back(name);
    for (const std::string& in : node(name).inputs) {
      require(nodes_.count(in) != 0, ErrorCode::kConfig, "artifact '" + name + "' depends on undeclared '" + in + "'");
      visit(in);
    }
    stack.pop_back();
    state[name] = 2;
    order.push_back(name);
  };
  for (const auto& [name, n] : nodes_) visit(name);
  return order;
}

void ArtifactGraph::check_acyclic() const { topological_order(); }

fs::path ArtifactGraph::stamp_path(const std::string& name) const { return stamp_dir_ / stamp_file_name(name); }

bool ArtifactGraph::stamp_matches(const std::string& name) const {
  const Node& n = node(name);
  const fs::path stamp = stamp_path(name);
  if (!fs::exists(stamp) || !fs::exists(n.path)) return false;
  try {
    return json::parse(io::read_text(stamp)).value("fingerprint", "") == n.fingerprint;
  } catch (const json::exception&) {
    return false;
  }
}

bool ArtifactGraph::is_fresh(const std::string& name) const {
  if (!stamp_matches(name)) return false;
  const auto own = fs::last_write_time(stamp_path(name));
  for (const std::string& in : node(name).inputs) {
    if (!is_fresh(in) || fs::last_write_time(stamp_path(in)) > own) return false;
  }
  return true;
}

void ArtifactGraph::require_inputs(const std::string& name) const {
  for (const std::string& in : node(name).inputs) {
    const Node& n = node(in);
    require(fs::exists(n.path) && fs::exists(stamp_path(in)), ErrorCode::kMissingArtifact,
            "missing artifact: " + n.path.string() + " (needed by " + name + ")");
    require(is_fresh(in), ErrorCode::kMissingArtifact,
            "stale artifact: " + n.path.string() + " is older than its inputs or was built from a different config");
  }
}

void ArtifactGraph::mark_built(const std::string& name) const {
  io::write_text(stamp_path(name), json{{"artifact", name}, {"fingerprint", node(name).fingerprint}}.dump() + "\n");
}

fs::path RunPaths::attack(const std::string& source, const std::string& pipeline, std::uint64_t seed) const {
  return root / "attacks" / source / pipeline / ("seed_" + std::to_string(seed));
}

ArtifactGraph build_artifact_graph(const ExperimentConfig& c) {
  const RunPaths paths{c.output_dir};
  ArtifactGraph g(c.output_dir / "stamps");
  const json dataset_j = config_to_json(c).at("dataset");
  const std::string data_fp = fingerprint(dataset_j);
  g.add({"data", paths.data(), {}, data_fp});

  std::map<std::string, std::string> model_fp;
  for (const auto& m : c.models) {
    const std::string fp = fingerprint({{"train", config_to_json(c).at("train")}, {"arch", to_string(m.arch)},
                                        {"seed", m.seed}, {"data", data_fp}});
    model_fp[m.tag()] = fp;
    g.add({model_node(m.tag()), paths.model(m.tag()), {"data"}, fp});
  }

  std::vector<std::string> eval_inputs{"data"};
  json eval_fp = json::array();
  for (const auto& m : c.models) {
    eval_inputs.push_back(model_node(m.tag()));
    eval_fp.push_back(model_fp[m.tag()]);
  }
  const json budget = budget_to_json(c.budget);
  for (const auto& source : c.sources) {
    for (const auto& pipeline : c.pipelines) {
      for (std::uint64_t seed : c.seeds) {
        const std::string name = attack_node(source, pipeline, seed);
        const std::string fp = fingerprint({{"budget", budget}, {"pipeline", pipeline}, {"seed", seed},
                                            {"model", model_fp[source]}, {"data", data_fp}});
        g.add({name, paths.attack(source, pipeline, seed), {"data", model_node(source)}, fp});
        eval_inputs.push_back(name);
        eval_fp.push_back(fp);
      }
    }
  }
  g.add({"eval", paths.eval(), eval_inputs, fingerprint(eval_fp)});

  std::vector<std::string> report_inputs{"eval"};
  json report_fp = json::array({fingerprint(eval_fp), config_to_json(c).at("report")});
  for (const auto& a : c.ablations) {
    std::vector<std::string> inputs{"data"};
    json fp = json::array({config_to_json(c).at("ablations"), budget, c.seeds, a.name});
    for (const auto& m : c.models) {
      inputs.push_back(model_node(m.tag()));
      fp.push_back(model_fp[m.tag()]);
    }
    g.add({ablation_node(a.name), paths.ablation(a.name), inputs, fingerprint(fp)});
    report_inputs.push_back(ablation_node(a.name));
    report_fp.push_back(fingerprint(fp));
  }
  g.add({"report", paths.report(), report_inputs, fingerprint(report_fp)});
  g.check_acyclic();
  return g;
}

// ---------------------------------------------------------------------------
// Outcome persistence

void save_outcomes(const std::vector<AttackOutcome>& outcomes, const Vocabulary& vocab, const fs::path& directory) {
  fs::create_directories(directory);
  json pairs = json::array();
  std::vector<std::uint8_t> images;
  for (const AttackOutcome& o : outcomes) {
    json captions = json::array();
    for (const auto& t : o.t_adv) captions.push_back(vocab.detokenize(t));
    pairs.push_back({{"pair_id", o.pair_id},
                     {"image_seed", o.image_seed},
                     {"text_seed", o.text_seed},
                     {"t_adv", o.t_adv},
                     {"captions", captions},
                     {"trace", o.trace}});
    io::append_image_binary(images, o.v_adv);
  }
  io::write_bytes(directory / "images.bin", images);
  const json doc{{"schema_version", 1}, {"images_sha256", io::sha256_hex(images)}, {"pairs", pairs}};
  io::write_text(directory / "outcomes.json", doc.dump(1) + "\n");
}

std::vector<AttackOutcome> load_outcomes(const fs::path& directory) {
  const fs::path meta = directory / "outcomes.json";
  require(fs::exists(meta), ErrorCode::kMissingArtifact, "missing artifact: " + meta.string());
  const json doc = json::parse(io::read_text(meta));
  const auto bytes = io::read_bytes(directory / "images.bin");
  require(io::sha256_hex(bytes) == doc.at("images_sha256").get<std::string>(), ErrorCode::kChecksumMismatch,
          "checksum mismatch in " + (directory / "images.bin").string());
  std::vector<AttackOutcome> out;
  std::size_t offset = 0;
  for (const json& p : doc.at("pairs")) {
    AttackOutcome o;
    o.pair_id = p.at("pair_id").get<int>();
    o.image_seed = p.at("image_seed").get<std::uint64_t>();
    o.text_seed = p.at("text_seed").get<std::uint64_t>();
    o.t_adv = p.at("t_adv").get<std::vector<TokenSequence>>();
    o.trace = p.at("trace").get<std::vector<double>>();
    o.v_adv = io::read_image_binary(bytes, offset);
    out.push_back(std::move(o));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_gen_data(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const ArtifactGraph graph = build_artifact_graph(config);
  const RunPaths paths{config.output_dir};
  if (!options.force && graph.is_fresh("data")) {
    log(options, "data is up to date");
    return;
  }
  const Dataset dataset = generate_dataset(config.dataset);
  save_dataset(dataset, paths.data());
  graph.mark_built("data");
  log(options, "wrote " + std::to_string(dataset.items.size()) + " pairs to " + paths.data().string());
}

void cmd_train(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const ArtifactGraph graph = build_artifact_graph(config);
  const RunPaths paths{config.output_dir};
  std::vector<ModelEntry> todo;
  for (const auto& m : config.models) {
    graph.require_inputs(model_node(m.tag()));
    if (options.force || !graph.is_fresh(model_node(m.tag()))) todo.push_back(m);
  }
  if (todo.empty()) {
    log(options, "models are up to date");
    return;
  }
  const Dataset dataset = load_dataset(paths.data());
  parallel_for(todo.size(), config.resolved_workers(), [&](std::size_t i) {
    TrainConfig tc = config.train;
    tc.arch = todo[i].arch;
    tc.seed = todo[i].seed;
    TrainResult result = train_contrastive(dataset, tc);
    Checkpoint ckpt{std::move(result.model), tc, dataset.test_ids.front(), {}};
    const Embedding probe = ckpt.model.encode_image(dataset.pair(ckpt.probe_pair_id).image);
    ckpt.probe_embedding.assign(probe.data(), probe.data() + probe.size());
    save_checkpoint(ckpt, paths.model(todo[i].tag()));
  });
  for (const auto& m : todo) {
    graph.mark_built(model_node(m.tag()));
    log(options, "trained " + m.tag());
  }
}

void cmd_attack(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const ArtifactGraph graph = build_artifact_graph(config);
  const RunPaths paths{config.output_dir};
  for (const auto& source : config.sources) {
    for (const auto& pipeline : config.pipelines) {
      for (std::uint64_t seed : config.seeds) graph.require_inputs(attack_node(source, pipeline, seed));
    }
  }
  std::optional<Loaded> loaded;
  const int workers = config.resolved_workers();
  for (const auto& source : config.sources) {
    for (std::uint64_t seed : config.seeds) {
      ImageStageCache cache;  // image stages shared across pipelines of this (source, seed)
      for (const auto& pipeline : config.pipelines) {
        const std::string name = attack_node(source, pipeline, seed);
        if (!options.force && graph.is_fresh(name)) continue;
        if (!loaded) loaded = load_inputs(config, paths);
        const auto outcomes = craft_outcomes(loaded->by_tag(source), loaded->dataset, loaded->dataset.test_ids,
                                             pipeline_spec(pipeline), config.budget, seed, workers, &cache);
        save_outcomes(outcomes, loaded->dataset.vocab, paths.attack(source, pipeline, seed));
        graph.mark_built(name);
        log(options, "crafted " + name);
      }
    }
  }
  if (!loaded) log(options, "attacks are up to date");
}

namespace {

bool report_less(const TransferReport& a, const TransferReport& b) {
  return std::tie(a.source, a.attack, a.target, a.seed) < std::tie(b.source, b.attack, b.target, b.seed);
}

std::string baseline_csv(const Loaded& loaded) {
  std::ostringstream out;
  out << "model,tr_r1,tr_r5,tr_r10,ir_r1,ir_r5,ir_r10\n";
  for (const auto& m : loaded.models) {
    const RetrievalIndex index = build_index(m, loaded.dataset, loaded.dataset.test_ids);
    const auto tr = match_ranks(index, Direction::kTR);
    const auto ir = match_ranks(index, Direction::kIR);
    out << m.tag();
    for (int k : kRecallCutoffs) out << ',' << fixed(recall_at_k(tr, k));
    for (int k : kRecallCutoffs) out << ',' << fixed(recall_at_k(ir, k));
    out << '\n';
  }
  return out.str();
}

// Mean over seeds of R@1 ASRs per (source, attack, target), in report order.
std::string summary_csv(const std::vector<TransferReport>& reports) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<const TransferReport*>> groups;
  for (const auto& r : reports) groups[{r.source, r.attack, r.target}].push_back(&r);
  std::ostringstream out;
  out << "source,attack,target,white_box,n_seeds,asr_tr_r1_mean,asr_tr_r1_std,asr_ir_r1_mean,asr_ir_r1_std,"
         "asr_headline_mean,asr_headline_std\n";
  for (const auto& [key, rs] : groups) {
    std::vector<std::optional<double>> tr, ir, head;
    for (const auto* r : rs) {
      tr.push_back(r->metrics.asr_tr[0].rate);
      ir.push_back(r->metrics.asr_ir[0].rate);
      head.push_back(r->metrics.headline_asr());
    }
    out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
        << (rs.front()->white_box ? 1 : 0) << ',' << rs.size() << ',' << mean_std_cells(tr) << ','
        << mean_std_cells(ir) << ',' << mean_std_cells(head) << '\n';
  }
  return out.str();
}

}  // namespace

void cmd_eval(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  require(config.models.size() >= 2, ErrorCode::kConfig, "transfer evaluation needs at least two models");
  const ArtifactGraph graph = build_artifact_graph(config);
  const RunPaths paths{config.output_dir};
  graph.require_inputs("eval");
  if (!options.force && graph.is_fresh("eval")) {
    log(options, "eval is up to date");
    return;
  }
  const Loaded loaded = load_inputs(config, paths);
  const auto& ids = loaded.dataset.test_ids;

  struct Job {
    std::string source, pipeline;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& s : config.sources) {
    for (const auto& p : config.pipelines) {
      for (std::uint64_t seed : config.seeds) jobs.push_back({s, p, seed});
    }
  }
  std::vector<std::vector<TransferReport>> per_job(jobs.size());
  parallel_for(jobs.size(), config.resolved_workers(), [&](std::size_t i) {
    const Job& job = jobs[i];
    const auto outcomes = load_outcomes(paths.attack(job.source, job.pipeline, job.seed));
    for (const auto& target : loaded.models) {
      TransferReport r = evaluate_transfer(target, loaded.dataset, ids, outcomes);
      r.source = job.source;
      r.attack = job.pipeline;
      r.white_box = target.tag() == job.source;
      r.seed = job.seed;
      r.budget = config.budget;
      per_job[i].push_back(std::move(r));
    }
  });
  std::vector<TransferReport> reports;
  for (auto& v : per_job) {
    for (auto& r : v) reports.push_back(std::move(r));
  }
  std::sort(reports.begin(), reports.end(), report_less);

  fs::remove_all(paths.eval());
  std::ostringstream csv;
  csv << transfer_csv_header() << '\n';
  for (const auto& r : reports) {
    csv << transfer_csv_row(r) << '\n';
    io::write_text(paths.eval() / "reports" / r.source / r.attack / ("seed_" + std::to_string(r.seed)) /
                       (r.target + ".json"),
                   to_json(r).dump(1) + "\n");
  }
  io::write_text(paths.eval() / "transfer.csv", csv.str());
  io::write_text(paths.eval() / "summary.csv", summary_csv(reports));
  io::write_text(paths.eval() / "baseline.csv", baseline_csv(loaded));
  graph.mark_built("eval");
  log(options, "wrote " + std::to_string(reports.size()) + " transfer reports to " + paths.eval().string());
}

void cmd_ablate(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const ArtifactGraph graph = build_artifact_graph(config);
  const RunPaths paths{config.output_dir};
  std::optional<Loaded> loaded;
  const int workers = config.resolved_workers();
  for (const AblationSpec& spec : config.ablations) {
    const std::string node = ablation_node(spec.name);
    graph.require_inputs(node);
    if (!options.force && graph.is_fresh(node)) {
      log(options, "ablation " + spec.name + " is up to date");
      continue;
    }
    if (!loaded) loaded = load_inputs(config, paths);
    const std::string source = spec.source.empty() ? config.sources.front() : spec.source;
    const EncoderPair& model = loaded->by_tag(source);
    const fs::path dir = paths.ablation(spec.name);
    fs::remove_all(dir);

    // reports[value][seed][target]
    std::vector<std::vector<std::vector<TransferReport>>> reports(spec.values.size());
    for (std::uint64_t seed : config.seeds) {
      ImageStageCache cache;
      for (std::size_t v = 0; v < spec.values.size(); ++v) {
        const AttackBudget budget = spec.apply(config.budget, v);
        const auto outcomes = craft_outcomes(model, loaded->dataset, loaded->dataset.test_ids,
                                             pipeline_spec(spec.pipeline), budget, seed, workers, &cache);
        std::vector<TransferReport> per_target;
        for (const auto& target : loaded->models) {
          TransferReport r = evaluate_transfer(target, loaded->dataset, loaded->dataset.test_ids, outcomes);
          r.source = source;
          r.attack = spec.pipeline;
          r.white_box = target.tag() == source;
          r.seed = seed;
          r.budget = budget;
          io::write_text(dir / "reports" / spec.values[v] / ("seed_" + std::to_string(seed)) / (r.target + ".json"),
                         to_json(r).dump(1) + "\n");
          per_target.push_back(std::move(r));
        }
        reports[v].push_back(std::move(per_target));
      }
      log(options, "ablation " + spec.name + ": seed " + std::to_string(seed) + " done");
    }

    const std::string param(to_string(spec.parameter));
    std::ostringstream runs, sweep;
    runs << "parameter,value,seed,source,target,white_box,asr_tr_r1,asr_ir_r1,asr_headline\n";
    sweep << "parameter,value,source,target,white_box,n_seeds,asr_tr_r1_mean,asr_tr_r1_std,asr_ir_r1_mean,"
             "asr_ir_r1_std,asr_headline_mean,asr_headline_std\n";
    for (std::size_t t = 0; t < loaded->models.size(); ++t) {
      const std::string target = loaded->models[t].tag();
      std::vector<std::string> labels;
      PlotSeries tr_series{"TR R@1", {}, {}}, ir_series{"IR R@1", {}, {}};
      std::ostringstream plot_csv;
      plot_csv << "value,asr_tr_r1_mean,asr_tr_r1_std,asr_ir_r1_mean,asr_ir_r1_std\n";
      for (std::size_t v = 0; v < spec.values.size(); ++v) {
        std::vector<std::optional<double>> tr, ir, head;
        for (std::size_t s = 0; s < config.seeds.size(); ++s) {
          const TransferReport& r = reports[v][s][t];
          tr.push_back(r.metrics.asr_tr[0].rate);
          ir.push_back(r.metrics.asr_ir[0].rate);
          head.push_back(r.metrics.headline_asr());
          runs << param << ',' << spec.values[v] << ',' << r.seed << ',' << source << ',' << target << ','
               << (r.white_box ? 1 : 0) << ',' << format_rate(tr.back()) << ',' << format_rate(ir.back()) << ','
               << format_rate(head.back()) << '\n';
        }
        sweep << param << ',' << spec.values[v] << ',' << source << ',' << target << ','
              << (target == source ? 1 : 0) << ',' << config.seeds.size() << ',' << mean_std_cells(tr) << ','
              << mean_std_cells(ir) << ',' << mean_std_cells(head) << '\n';
        plot_csv << spec.values[v] << ',' << mean_std_cells(tr) << ',' << mean_std_cells(ir) << '\n';
        labels.push_back(spec.values[v]);
        const auto trv = defined_values(tr), irv = defined_values(ir);
        tr_series.mean.push_back(trv.empty() ? std::nan("") : std::accumulate(trv.begin(), trv.end(), 0.0) / trv.size());
        tr_series.stddev.push_back(sample_stddev(trv));
        ir_series.mean.push_back(irv.empty() ? std::nan("") : std::accumulate(irv.begin(), irv.end(), 0.0) / irv.size());
        ir_series.stddev.push_back(sample_stddev(irv));
      }
      const std::string title = spec.pipeline + ": " + source + " -> " + target + (target == source ? " (white-box)" : "");
      io::write_text(dir / ("plot_" + target + ".svg"),
                     svg_line_plot(title, labels, {tr_series, ir_series}, "ASR (%) vs " + param));
      io::write_text(dir / ("plot_" + target + ".csv"), plot_csv.str());
    }
    io::write_text(dir / "runs.csv", runs.str());
    io::write_text(dir / "sweep.csv", sweep.str());
    graph.mark_built(node);
    log(options, "wrote ablation " + spec.name + " to " + dir.string());
  }
}

void cmd_run_all(const ExperimentConfig& config, const CommandOptions& options) {
  cmd_gen_data(config, options);
  cmd_train(config, options);
  cmd_attack(config, options);
  cmd_eval(config, options);
  cmd_ablate(config, options);
  cmd_report(config, options);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kUnknownPipeline:
      return 2;
    case ErrorCode::kMissingArtifact:
    case ErrorCode::kMissingManifest:
      return 3;
    case ErrorCode::kNumericalFailure:
    case ErrorCode::kSingularity:
      return 4;
    default:
      return 1;
  }
}

json error_record(const Error& error, std::string_view command) {
  return {{"command", command},
          {"error", to_string(error.code())},
          {"exit_code", exit_code_for(error.code())},
          {"message", error.what()}};
}

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double median(std::vector<double> xs) {
  require(!xs.empty(), ErrorCode::kInvalidArgument, "median of an empty list");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace lssa
