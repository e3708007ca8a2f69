#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "lssa/harness.hpp"
#include "lssa/io.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 0;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config, "Experiment config (JSON); defaults apply when omitted");
  cmd->add_option("--seed", flags.seed, "Run a single root seed instead of attack.seeds");
  cmd->add_option("--out", flags.out, "Output directory (output_dir)");
  cmd->add_option("--workers", flags.workers, "Worker threads (overrides LSSA_WORKERS and workers)");
  cmd->add_flag("--force", flags.force, "Rebuild outputs even when they are up to date");
  cmd->add_flag("--quiet", flags.quiet, "Suppress progress messages");
}

lssa::ExperimentConfig resolve(const Flags& flags) {
  lssa::ExperimentConfig config = flags.config.empty() ? lssa::default_config() : lssa::load_config(flags.config);
  if (flags.seed) config.seeds = {*flags.seed};
  if (!flags.out.empty()) config.output_dir = flags.out;
  if (flags.workers > 0) {
    config.workers = flags.workers;
    setenv("LSSA_WORKERS", std::to_string(flags.workers).c_str(), 1);
  }
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSSA lab: train toy dual encoders, craft transfer attacks, evaluate and report"};
  app.require_subcommand(1);
  Flags flags;
  using Command = void (*)(const lssa::ExperimentConfig&, const lssa::CommandOptions&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"gen-data", "Generate and save the synthetic dataset", lssa::cmd_gen_data},
      {"train", "Train every configured model", lssa::cmd_train},
      {"attack", "Craft adversarial pairs for every (source, pipeline, seed)", lssa::cmd_attack},
      {"eval", "Score crafted pairs on every model; write transfer reports", lssa::cmd_eval},
      {"ablate", "Run the configured parameter sweeps", lssa::cmd_ablate},
      {"report", "Render tables, triptychs, caption diffs and the ladder", lssa::cmd_report},
      {"run", "gen-data, train, attack, eval, ablate and report in order", lssa::cmd_run_all},
  };
  CLI::App* show = app.add_subcommand("show-config", "Print the resolved config as JSON");
  add_common(show, flags);
  for (const auto& [name, help, fn] : commands) add_common(app.add_subcommand(name, help), flags);

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const lssa::ExperimentConfig config = resolve(flags);
    if (command == "show-config") {
      std::cout << lssa::config_to_json(config).dump(2) << std::endl;
      return 0;
    }
    const lssa::CommandOptions options{flags.force, !flags.quiet};
    for (const auto& [name, help, fn] : commands) {
      if (name == command) fn(config, options);
    }
    std::error_code ignored;
    std::filesystem::remove(config.output_dir / "error.json", ignored);
    return 0;
  } catch (const lssa::Error& e) {
    const nlohmann::json record = lssa::error_record(e, command);
    std::cerr << record.dump() << std::endl;
    if (!flags.out.empty() || !flags.config.empty()) {
      try {
        const std::filesystem::path dir = flags.out.empty() ? lssa::load_config(flags.config).output_dir
                                                            : std::filesystem::path(flags.out);
        lssa::io::write_text(dir / "error.json", record.dump(2) + "\n");
      } catch (...) {
        // The record on stderr is authoritative; the file is a convenience.
      }
    }
    return lssa::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"command", command}, {"error", "internal"}, {"exit_code", 1}, {"message", e.what()}}.dump()
              << std::endl;
    return 1;
  }
}
