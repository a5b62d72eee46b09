#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ppocma/harness.hpp"
#include "ppocma/viz.hpp"

namespace {

// --override key=value, applied onto the config JSON before parsing
ppocma::ExperimentConfig load_config(const std::string& path,
                                     const std::vector<std::string>& overrides) {
  std::string text;
  {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    text.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  }
  nlohmann::json j = nlohmann::json::parse(text);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("override must be key=value: " + kv);
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    // numbers, booleans and arrays parse as JSON; anything else is a string
    try {
      j[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      j[key] = value;
    }
  }
  return ppocma::ExperimentConfig::from_json_text(j.dump());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"policy-optimization experiment harness"};
  app.require_subcommand(1);

  std::string config_path, run_dir;
  std::vector<std::string> overrides, run_dirs;
  std::int64_t seed = -1;

  auto* run = app.add_subcommand("run", "run one experiment config across its seeds");
  run->add_option("--config", config_path, "config JSON file")->required();
  run->add_option("--seed", seed, "run only this seed");
  run->add_option("--override", overrides, "key=value config override (repeatable)");

  auto* sweep = app.add_subcommand("sweep", "grid sweep over the config's sweep axes");
  sweep->add_option("--config", config_path, "config JSON file")->required();
  sweep->add_option("--override", overrides, "key=value config override (repeatable)");

  auto* viz = app.add_subcommand("viz", "emit didactic figures for a finished run");
  viz->add_option("--run-dir", run_dir, "run directory (contains summary.json)")->required();

  auto* score = app.add_subcommand("score", "normalized score table from run directories");
  score->add_option("--runs", run_dirs, "run directories")->required()->expected(-1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ppocma::ExperimentConfig cfg = load_config(config_path, overrides);
      if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
      const auto artifacts = ppocma::run_experiment(cfg);
      for (const auto& art : artifacts)
        std::cout << "seed " << art.seed << ": R=" << art.final_mean_return << " ("
                  << art.iterations << " iterations, " << art.env_steps
                  << " steps) -> " << art.run_dir.string() << "\n";
    } else if (sweep->parsed()) {
      ppocma::ExperimentConfig cfg = load_config(config_path, overrides);
      const auto table = ppocma::sweep(cfg);
      std::cout << table.to_csv();
    } else if (viz->parsed()) {
      const auto artifacts = ppocma::viz::emit_didactic_viz(run_dir);
      std::cout << "wrote " << artifacts.panels_svg.string() << "\n";
      if (artifacts.trace_svg)
        std::cout << "wrote " << artifacts.trace_svg->string() << "\n";
    } else if (score->parsed()) {
      const auto table = ppocma::normalize_scores(ppocma::load_run_scores(run_dirs));
      std::cout << table.to_csv();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
