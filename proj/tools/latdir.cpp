#include <CLI11.hpp>
#include <iostream>

#include "latdir/harness.hpp"

int main(int argc, char** argv) {
  using latdir::ExperimentConfig;
  CLI::App app{"Lattice Dirichlet form experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool quiet = false;
  for (const auto& name : latdir::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "JSON config (built-in defaults when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_flag("--quiet", quiet, "do not print the report");
  }
  std::string config_name;
  auto* cfg_cmd = app.add_subcommand("config", "print the default config of an experiment");
  cfg_cmd->add_option("experiment", config_name)->required()->check(CLI::IsMember(latdir::experiment_names()));

  CLI11_PARSE(app, argc, argv);

  try {
    if (cfg_cmd->parsed()) {
      std::cout << latdir::default_config(config_name).to_json().dump(2) << '\n';
      return 0;
    }
    const std::string name = app.get_subcommands().front()->get_name();
    const auto* sub = app.get_subcommands().front();
    ExperimentConfig cfg = config_path.empty() ? latdir::default_config(name) : ExperimentConfig::load(config_path);
    if (cfg.experiment != name)
      throw latdir::ConfigError("config is for '" + cfg.experiment + "', not '" + name + "'");
    if (sub->count("--seed")) cfg.seed = seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;

    latdir::Artifacts artifacts;
    const auto report = latdir::run_experiment(cfg, artifacts);
    latdir::write_outputs(cfg.output_dir, report, artifacts);
    if (!quiet) {
      for (const auto& c : report.checks)
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.value << ' ' << c.op << ' '
                  << c.threshold << '\n';
      std::cout << (report.passed() ? "passed" : "FAILED") << " -> " << cfg.output_dir << '\n';
    }
    return report.passed() ? 0 : 1;
  } catch (const latdir::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
