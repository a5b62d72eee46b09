#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ppocma/batch.hpp"
#include "ppocma/critic.hpp"
#include "ppocma/policy.hpp"

namespace ppocma {

enum class AlgoMode { vanilla_pg, ppo_clip, ppo_cma, ppo_cma_no_mirror, ppo_cma_single_net };

AlgoMode algo_mode_from_string(const std::string& name);
std::string to_string(AlgoMode mode);

struct AlgoConfig {
  AlgoMode mode = AlgoMode::ppo_cma;
  int N = 8000;            // simulation budget per iteration (steps)
  int T = 0;               // episode cap; 0 = take the environment's
  double gamma = 0.99;
  double lambda = 0.95;    // GAE lambda
  int K = 100;             // minibatch gradient steps per trained network
  int M = 512;             // minibatch size
  int H = 9;               // history iterations for variance training
  double epsilon = 0.2;    // PPO clip range
  double w_entropy = 0.0;  // PPO entropy bonus weight
  double learning_rate = 3e-4;

  /// Throws on invalid settings; emits a warning line when N < T, which
  /// makes iterations overshoot their budget by close to a whole episode.
  void validate(int env_episode_cap, std::ostream* warnings = nullptr) const;

  bool uses_combined_net() const {
    return mode == AlgoMode::vanilla_pg || mode == AlgoMode::ppo_clip ||
           mode == AlgoMode::ppo_cma_single_net;
  }
  /// Single-net mode degenerates the history to the current iteration.
  int effective_history() const { return mode == AlgoMode::ppo_cma_single_net ? 1 : H; }
};

struct IterationStats {
  long long iteration = 0;
  long long env_steps = 0;  // cumulative
  double mean_return = 0.0;
  double mean_sigma = 0.0;
  double max_sigma = 0.0;
  double mean_mu_norm = 0.0;
  double frac_positive_adv = 0.0;
  double critic_loss = 0.0;
  double policy_loss = 0.0;
  double k_min = 0.0;  // observation-normalizer scale range
  double k_max = 0.0;
};

/// Adam moments for the networks of one run; persists across iterations.
struct TrainState {
  nn::AdamState policy_mean;
  nn::AdamState policy_var;
  nn::AdamState critic;
  TrainState(const GaussianPolicy& policy, const Critic& critic_net, double lr);
};

/// Snapshot of the policy at a fixed probe state after each minibatch step;
/// used for the single-iteration policy-evolution trace.
struct MinibatchTracePoint {
  int step = 0;  // 0 = before any update
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
  double mu_norm = 0.0;
  double loss = 0.0;  // minibatch loss observed at this step (0 for step 0)
};

/// PPO's clipped surrogate with an optional entropy bonus:
///   rho_i = exp(log pi(a_i|s_i) - old_logp_i)
///   loss = -(1/M) sum min(rho_i A_i, clamp(rho_i, 1-eps, 1+eps) A_i)
///          - w_entropy (1/M) sum 0.5 sum_j log(2 pi e c_j)
/// Requires the combined policy architecture.
LossResult clipped_surrogate_loss(const GaussianPolicy& policy,
                                  const Eigen::MatrixXd& states,
                                  const Eigen::MatrixXd& actions,
                                  const Eigen::VectorXd& advantages,
                                  const Eigen::VectorXd& old_logp, double epsilon,
                                  double w_entropy);

/// Didactic unclipped update: K minibatch Adam steps on the Gaussian loss
/// with signed weights, combined network, no resampling between steps.
/// When `trace` is given, the policy is probed at `probe_state` before the
/// first and after every step.
void vanilla_pg_update(GaussianPolicy& policy, const ProcessedBatch& batch, int steps,
                       int minibatch_size, nn::AdamState& adam, RandomStream& rng,
                       std::vector<MinibatchTracePoint>* trace = nullptr,
                       const Eigen::VectorXd* probe_state = nullptr);

/// One full PPO-CMA iteration (also covers the ablation modes):
/// critic -> GAE -> clip/mirror -> push history -> variance phase over the
/// history -> mean phase over the current iteration.
IterationStats ppo_cma_iteration(GaussianPolicy& policy, Critic& critic,
                                 HistoryBuffer& history,
                                 const std::vector<Episode>& episodes,
                                 const AlgoConfig& config, int episode_cap,
                                 TrainState& train, RandomStream& rng);

/// One PPO iteration: critic -> GAE -> K clipped-surrogate minibatch steps
/// with signed advantages on the combined network.
IterationStats ppo_iteration(GaussianPolicy& policy, Critic& critic,
                             const std::vector<Episode>& episodes,
                             const AlgoConfig& config, int episode_cap,
                             TrainState& train, RandomStream& rng);

/// One vanilla policy-gradient iteration (didactic): critic -> GAE ->
/// vanilla_pg_update with signed advantages.
IterationStats vanilla_pg_iteration(GaussianPolicy& policy, Critic& critic,
                                    const std::vector<Episode>& episodes,
                                    const AlgoConfig& config, int episode_cap,
                                    TrainState& train, RandomStream& rng,
                                    std::vector<MinibatchTracePoint>* trace = nullptr,
                                    const Eigen::VectorXd* probe_state = nullptr);

/// Dispatch on config.mode.
IterationStats run_iteration(GaussianPolicy& policy, Critic& critic,
                             HistoryBuffer& history, const std::vector<Episode>& episodes,
                             const AlgoConfig& config, int episode_cap, TrainState& train,
                             RandomStream& rng,
                             std::vector<MinibatchTracePoint>* pg_trace = nullptr,
                             const Eigen::VectorXd* probe_state = nullptr);

}  // namespace ppocma
