#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ppocma/experience.hpp"
#include "ppocma/nn.hpp"
#include "ppocma/rng.hpp"

namespace ppocma {

/// Normalized episode time in [0, 1]; appended to critic inputs so the value
/// function can account for truncation at the episode cap. Throws on T == 0.
double time_feature(int t, int episode_cap);

/// Value network over [observation; time feature].
class Critic {
 public:
  Critic(int obs_dim, const std::vector<int>& hidden_widths, std::uint64_t seed);

  int obs_dim() const { return obs_dim_; }
  double value(const Eigen::VectorXd& s, int t, int episode_cap) const;
  /// Batch evaluation with explicit per-column time features.
  Eigen::VectorXd values(const Eigen::MatrixXd& states,
                         const Eigen::VectorXd& time_features) const;

  nn::Network& net() { return net_; }
  const nn::Network& net() const { return net_; }

 private:
  int obs_dim_;
  nn::Network net_;
};

/// Generalized advantage estimation over one episode:
///   delta_t = r_t + gamma V(s_{t+1}) - V(s_t),  A_t = delta_t + gamma lambda A_{t+1}
/// The successor value is zero on a terminal end and bootstrapped from the
/// critic on a timeout or mid-episode. Throws on an empty trajectory.
Eigen::VectorXd compute_gae(const Trajectory& traj, const Critic& critic, double gamma,
                            double lambda, int episode_cap);

struct CriticTrainResult {
  double mean_loss = 0.0;  // average L1 minibatch loss over the K steps
};

/// K minibatch Adam steps on the L1 loss (1/M) sum |V(s_i, t_i) - target_i|
/// with target_i = A_i + V_old(s_i, t_i); advantages and old values are
/// evaluated with the pre-update critic and stay frozen during the K steps.
/// Minibatches are drawn without replacement when enough tuples exist, with
/// replacement otherwise.
CriticTrainResult train_critic(Critic& critic, const std::vector<Trajectory>& trajectories,
                               double gamma, double lambda, int episode_cap,
                               int minibatch_steps, int minibatch_size,
                               nn::AdamState& adam, RandomStream& rng);

void save_critic(const Critic& critic, const std::string& path);
Critic load_critic(const std::string& path);

}  // namespace ppocma
