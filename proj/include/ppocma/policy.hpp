#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ppocma/nn.hpp"
#include "ppocma/rng.hpp"

namespace ppocma {

struct ActionBounds {
  Eigen::VectorXd a_min, a_max;
  void validate() const;
  Eigen::VectorXd width() const { return a_max - a_min; }
  Eigen::VectorXd midpoint() const { return 0.5 * (a_max + a_min); }
};

/// Log-variance clipping window: v_max = 2 log(a_max - a_min) keeps the
/// standard deviation below the action range, v_min = 2 log(sigma_min)
/// keeps it above a numerical floor.
struct VarianceLimits {
  Eigen::VectorXd v_min, v_max;
  static VarianceLimits from_bounds(const ActionBounds& bounds, double sigma_min = 0.01);
};

/// Which networks back the policy: separate mean and variance networks
/// (needed to update the variance before the mean), or one network whose
/// output stacks raw mean over raw log-variance.
enum class PolicyArch { separate_nets, combined_net };

/// Which network a loss differentiates. `mean` treats the variance as a
/// constant, `var` treats the mean as a constant; `both` is only valid for
/// the combined architecture.
enum class LossPhase { mean, var, both };

/// Forward evaluation of the policy on a batch of states (columns),
/// keeping everything needed to backpropagate through the soft clipping.
struct PolicyEval {
  Eigen::MatrixXd mu;   // clipped mean, action_dim x batch
  Eigen::MatrixXd var;  // per-dimension variance c = exp(v_clipped)
  // internals for backprop
  Eigen::MatrixXd sig_mu, sig_v;  // sigmoid values of the raw outputs
  nn::ForwardTrace mean_trace, var_trace;
};

/// Diagonal-Gaussian policy with state-dependent mean and variance, both
/// soft-clipped: mu = a_min + (a_max - a_min) * sigmoid(mu_raw) and
/// v = v_min + (v_max - v_min) * sigmoid(v_raw), with c = exp(v).
class GaussianPolicy {
 public:
  GaussianPolicy(int obs_dim, const ActionBounds& bounds,
                 const std::vector<int>& hidden_widths, PolicyArch arch,
                 std::uint64_t seed);

  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return static_cast<int>(bounds_.a_min.size()); }
  PolicyArch arch() const { return arch_; }
  const ActionBounds& bounds() const { return bounds_; }
  const VarianceLimits& variance_limits() const { return vlimits_; }

  void mean_and_var(const Eigen::MatrixXd& states, Eigen::MatrixXd& mu,
                    Eigen::MatrixXd& var) const;

  /// a = mu + sqrt(c) * z with z standard normal. Actions are not clamped
  /// to the bounds; environments clamp internally where they need to.
  Eigen::VectorXd sample_action(const Eigen::VectorXd& state, RandomStream& rng) const;

  double log_prob(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;
  Eigen::VectorXd log_prob(const Eigen::MatrixXd& states,
                           const Eigen::MatrixXd& actions) const;

  PolicyEval evaluate(const Eigen::MatrixXd& states, bool with_trace) const;

  /// Parameter gradient of a scalar loss given dL/dmu and dL/dvar at `eval`,
  /// chained through the clipping transforms. The phase selects which
  /// network the gradient is for (and which input is treated as constant).
  Eigen::VectorXd backprop(const PolicyEval& eval, const Eigen::MatrixXd& grad_mu,
                           const Eigen::MatrixXd& grad_var, LossPhase phase) const;

  /// The network a phase trains. For the combined architecture every phase
  /// refers to the single network.
  nn::Network& network(LossPhase phase);
  const nn::Network& network(LossPhase phase) const;

 private:
  int obs_dim_;
  PolicyArch arch_;
  ActionBounds bounds_;
  VarianceLimits vlimits_;
  nn::Network mean_net_;  // the only network in combined mode
  nn::Network var_net_;   // empty in combined mode
};

struct LossResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // for the phase's network
};

/// Weighted Gaussian-fitting loss
///   (1/M) sum_i w_i sum_j [ (a_ij - mu_j(s_i))^2 / c_j(s_i) + 0.5 log c_j(s_i) ]
/// over a batch of (state, action, weight) columns. Throws on an empty batch.
LossResult gaussian_loss(const GaussianPolicy& policy, const Eigen::MatrixXd& states,
                         const Eigen::MatrixXd& actions, const Eigen::VectorXd& weights,
                         LossPhase phase);

struct PretrainOptions {
  int steps = 4000;
  int batch_size = 128;
  double learning_rate = 3e-4;
};

/// Supervised warm start on standard-normal observation vectors with fixed
/// targets mu = 0.5 (a_max + a_min) and v = 2 log(0.5 (a_max - a_min)), so
/// the initial exploration covers the action box for any observed state.
void pretrain(GaussianPolicy& policy, RandomStream& rng, const PretrainOptions& opts = {});

/// Policy checkpoint: bounds, variance limits and the network block(s).
void save_policy(const GaussianPolicy& policy, const std::string& path);
GaussianPolicy load_policy(const std::string& path);

}  // namespace ppocma
