#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ppocma/algorithms.hpp"
#include "ppocma/envs.hpp"

namespace ppocma {

struct ExperimentConfig {
  std::string env = "quadratic";
  AlgoConfig algo;
  int action_repeat = 1;
  long long total_steps = 8000;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "runs/out";
  int log_every = 1;  // cadence of the didactic action/policy recordings
  int pretrain_steps = 4000;
  int pretrain_batch = 128;
  std::string setting;  // label in score tables; derived from the mode when empty

  // sweep grid: numeric axes by config key, plus an optional environment axis
  std::map<std::string, std::vector<double>> sweep_axes;
  std::vector<std::string> sweep_envs;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
  std::string to_json_text() const;

  std::string setting_label() const;
  /// Stable fingerprint of everything that shapes the run except the seed
  /// list and output directory; used to validate artifacts when resuming.
  std::string config_hash() const;
  void validate() const;
};

struct RunArtifacts {
  std::filesystem::path run_dir;
  std::uint64_t seed = 0;
  long long iterations = 0;
  long long env_steps = 0;
  double final_mean_return = 0.0;  // R: mean undiscounted return, last iteration
};

/// Collect at least `min_steps` steps of whole episodes on-policy; an
/// episode that crosses the budget is finished, not cut. Observations are
/// scaled by the normalizer when it is initialized (identity before the
/// first update). Raw observations are appended to `raw_obs_out` when given.
std::vector<Episode> collect_episodes(Env& env, const GaussianPolicy& policy,
                                      const ObsNormalizer* normalizer, int min_steps,
                                      int episode_cap, RandomStream& env_rng,
                                      RandomStream& action_rng,
                                      Eigen::MatrixXd* raw_obs_out = nullptr);

/// One seed of an experiment. Artifacts are written atomically to
/// <output_dir>/<setting>/seed<seed>/: stats.csv, policy.ckpt, critic.ckpt,
/// summary.json, and for the quadratic environment actions.csv,
/// policy_by_iteration.csv and (vanilla-pg) minibatch_trace.csv.
RunArtifacts run_single(const ExperimentConfig& config, std::uint64_t seed);

/// All seeds of a config.
std::vector<RunArtifacts> run_experiment(const ExperimentConfig& config);

struct RunScore {
  std::string task;
  std::string setting;
  double final_return = 0.0;  // R
};

struct ScoreTable {
  std::vector<std::pair<std::string, double>> setting_scores;  // best first
  std::vector<std::string> degenerate_tasks;
  std::string to_csv() const;
  double score_of(const std::string& setting) const;
};

/// Per task, runs are normalized to (R - R_min) / (R_max - R_min) over every
/// run and setting of that task; per-setting averages are then renormalized
/// so the best setting scores exactly 1. A task whose R values are all equal
/// contributes 0.5 for every run and is flagged.
ScoreTable normalize_scores(const std::vector<RunScore>& runs);

/// Grid sweep over the config's axes (and environments). Resumable: a grid
/// point whose artifacts exist and validate against the config hash is not
/// rerun. Writes scores.csv under output_dir and returns the table.
ScoreTable sweep(const ExperimentConfig& base);

struct RunSummary {
  std::string env, mode, setting, config_hash;
  std::uint64_t seed = 0;
  long long iterations = 0, env_steps = 0;
  double final_mean_return = 0.0;
};

std::optional<RunSummary> try_load_summary(const std::filesystem::path& run_dir);

/// Summaries found under the given directories (searched recursively).
std::vector<RunScore> load_run_scores(const std::vector<std::string>& dirs);

}  // namespace ppocma
