#include "ppocma/algorithms.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "detail/sampling.hpp"

namespace ppocma {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::vector<Trajectory> trajectories_of(const std::vector<Episode>& episodes) {
  std::vector<Trajectory> out;
  out.reserve(episodes.size());
  for (const auto& ep : episodes) out.push_back(ep.traj);
  return out;
}

std::vector<Eigen::VectorXd> advantages_of(const std::vector<Episode>& episodes,
                                           const Critic& critic, const AlgoConfig& cfg,
                                           int episode_cap) {
  std::vector<Eigen::VectorXd> adv;
  adv.reserve(episodes.size());
  for (const auto& ep : episodes)
    adv.push_back(compute_gae(ep.traj, critic, cfg.gamma, cfg.lambda, episode_cap));
  return adv;
}

double positive_fraction(const std::vector<Eigen::VectorXd>& advantages) {
  long long n = 0, pos = 0;
  for (const auto& a : advantages) {
    n += a.size();
    pos += (a.array() > 0.0).count();
  }
  return n == 0 ? 0.0 : double(pos) / double(n);
}

void fill_collection_stats(IterationStats& stats, const std::vector<Episode>& episodes) {
  double ret_sum = 0.0, sigma_sum = 0.0, sigma_max = 0.0, mu_norm_sum = 0.0;
  long long samples = 0;
  for (const auto& ep : episodes) {
    ret_sum += ep.total_reward();
    const Eigen::ArrayXXd sigma = ep.gen_var.array().sqrt();
    sigma_sum += sigma.sum();
    sigma_max = std::max(sigma_max, sigma.maxCoeff());
    mu_norm_sum += ep.gen_mean.colwise().norm().sum();
    samples += ep.old_logp.size();
  }
  const long long dims = samples * (episodes.empty() ? 1 : episodes.front().gen_mean.rows());
  stats.mean_return = ret_sum / double(episodes.size());
  stats.mean_sigma = sigma_sum / double(dims);
  stats.max_sigma = sigma_max;
  stats.mean_mu_norm = mu_norm_sum / double(samples);
}

struct BatchMinibatch {
  Eigen::MatrixXd states, actions;
  Eigen::VectorXd weights, old_logp;
};

BatchMinibatch gather(const ProcessedBatch& batch, const std::vector<int>& idx) {
  BatchMinibatch mb;
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
  mb.states.resize(batch.states.rows(), n);
  mb.actions.resize(batch.actions.rows(), n);
  mb.weights.resize(n);
  mb.old_logp.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    mb.states.col(i) = batch.states.col(idx[static_cast<std::size_t>(i)]);
    mb.actions.col(i) = batch.actions.col(idx[static_cast<std::size_t>(i)]);
    mb.weights[i] = batch.weights[idx[static_cast<std::size_t>(i)]];
    mb.old_logp[i] = batch.old_logp[idx[static_cast<std::size_t>(i)]];
  }
  return mb;
}

}  // namespace

AlgoMode algo_mode_from_string(const std::string& name) {
  if (name == "vanilla-pg") return AlgoMode::vanilla_pg;
  if (name == "ppo-clip") return AlgoMode::ppo_clip;
  if (name == "ppo-cma") return AlgoMode::ppo_cma;
  if (name == "ppo-cma-no-mirror") return AlgoMode::ppo_cma_no_mirror;
  if (name == "ppo-cma-single-net") return AlgoMode::ppo_cma_single_net;
  throw std::invalid_argument("unknown algorithm mode: " + name);
}

std::string to_string(AlgoMode mode) {
  switch (mode) {
    case AlgoMode::vanilla_pg: return "vanilla-pg";
    case AlgoMode::ppo_clip: return "ppo-clip";
    case AlgoMode::ppo_cma: return "ppo-cma";
    case AlgoMode::ppo_cma_no_mirror: return "ppo-cma-no-mirror";
    case AlgoMode::ppo_cma_single_net: return "ppo-cma-single-net";
  }
  throw std::logic_error("unreachable");
}

void AlgoConfig::validate(int env_episode_cap, std::ostream* warnings) const {
  if (N < 1) throw std::invalid_argument("AlgoConfig: N must be >= 1");
  if (K < 1 || M < 1 || H < 1)
    throw std::invalid_argument("AlgoConfig: K, M, H must be >= 1");
  if (gamma < 0.0 || gamma > 1.0 || lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("AlgoConfig: gamma and lambda must be in [0, 1]");
  if (epsilon <= 0.0) throw std::invalid_argument("AlgoConfig: epsilon must be > 0");
  if (learning_rate <= 0.0)
    throw std::invalid_argument("AlgoConfig: learning rate must be > 0");
  const int cap = T > 0 ? T : env_episode_cap;
  if (N < cap && warnings)
    *warnings << "warning: iteration budget N=" << N << " is below the episode cap T="
              << cap << "; iterations can overshoot their budget by almost a full episode\n";
}

TrainState::TrainState(const GaussianPolicy& policy, const Critic& critic_net, double lr)
    : policy_mean(policy.network(LossPhase::mean).parameters.size(), lr),
      policy_var(policy.arch() == PolicyArch::separate_nets
                     ? policy.network(LossPhase::var).parameters.size()
                     : 0,
                 lr),
      critic(critic_net.net().parameters.size(), lr) {}

LossResult clipped_surrogate_loss(const GaussianPolicy& policy,
                                  const Eigen::MatrixXd& states,
                                  const Eigen::MatrixXd& actions,
                                  const Eigen::VectorXd& advantages,
                                  const Eigen::VectorXd& old_logp, double epsilon,
                                  double w_entropy) {
  const Eigen::Index m = states.cols();
  if (m == 0) throw std::invalid_argument("clipped_surrogate_loss: empty batch");
  if (policy.arch() != PolicyArch::combined_net)
    throw std::logic_error("clipped_surrogate_loss: needs the combined policy network");

  PolicyEval ev = policy.evaluate(states, true);
  const Eigen::ArrayXXd resid = (actions - ev.mu).array();
  const Eigen::ArrayXXd c = ev.var.array();
  const Eigen::ArrayXXd logc = c.log();

  const Eigen::ArrayXd logp =
      (-0.5 * (resid.square() / c + logc + kLog2Pi)).colwise().sum().transpose();
  const Eigen::ArrayXd rho = (logp - old_logp.array()).exp();
  const Eigen::ArrayXd adv = advantages.array();

  const Eigen::ArrayXd unclipped = rho * adv;
  const Eigen::ArrayXd clipped =
      rho.min(1.0 + epsilon).max(1.0 - epsilon) * adv;
  const Eigen::ArrayXd objective = unclipped.min(clipped);

  // diagonal-Gaussian entropy, 0.5 sum_j log(2 pi e c_j)
  const Eigen::ArrayXd entropy =
      0.5 * (logc + 1.0 + kLog2Pi).colwise().sum().transpose();

  LossResult out;
  const double inv_m = 1.0 / double(m);
  out.loss = -objective.mean() - w_entropy * entropy.mean();

  // gradient flows through rho only where the selected branch is not clamped
  Eigen::ArrayXd g(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const bool take_unclipped = unclipped[i] <= clipped[i];
    const bool inside = rho[i] > 1.0 - epsilon && rho[i] < 1.0 + epsilon;
    g[i] = (take_unclipped || inside) ? -inv_m * rho[i] * adv[i] : 0.0;
  }

  // d logp / d mu = (a - mu)/c ; d logp / d c = 0.5 r^2/c^2 - 0.5/c
  Eigen::MatrixXd grad_mu = ((resid / c).rowwise() * g.transpose()).matrix();
  Eigen::MatrixXd grad_c =
      ((0.5 * resid.square() / c.square() - 0.5 / c).rowwise() * g.transpose()).matrix();
  // entropy term: dH/dc = 0.5/c, loss has -w_entropy * mean(H)
  grad_c.array() -= (w_entropy * inv_m) * (0.5 / c);

  out.grad = policy.backprop(ev, grad_mu, grad_c, LossPhase::both);
  return out;
}

double vanilla_pg_update_impl(GaussianPolicy& policy, const ProcessedBatch& batch,
                              int steps, int minibatch_size, nn::AdamState& adam,
                              RandomStream& rng, std::vector<MinibatchTracePoint>* trace,
                              const Eigen::VectorXd* probe_state) {
  if (policy.arch() != PolicyArch::combined_net)
    throw std::logic_error("vanilla_pg_update: needs the combined policy network");
  batch.validate();

  const auto probe = [&](int step, double loss) {
    if (!trace) return;
    Eigen::VectorXd s = probe_state ? *probe_state : Eigen::VectorXd(batch.states.col(0));
    Eigen::MatrixXd mu, var;
    policy.mean_and_var(s, mu, var);
    MinibatchTracePoint pt;
    pt.step = step;
    pt.mu = mu.col(0);
    pt.sigma = var.col(0).array().sqrt();
    pt.mu_norm = pt.mu.norm();
    pt.loss = loss;
    trace->push_back(std::move(pt));
  };

  probe(0, 0.0);
  detail::MinibatchSampler sampler(batch.size());
  double loss_sum = 0.0;
  for (int k = 0; k < steps; ++k) {
    const auto idx = sampler.draw(minibatch_size, rng);
    const BatchMinibatch mb = gather(batch, idx);
    LossResult res =
        gaussian_loss(policy, mb.states, mb.actions, mb.weights, LossPhase::both);
    nn::adam_step(policy.network(LossPhase::both), res.grad, adam);
    loss_sum += res.loss;
    probe(k + 1, res.loss);
  }
  return loss_sum / double(steps);
}

void vanilla_pg_update(GaussianPolicy& policy, const ProcessedBatch& batch, int steps,
                       int minibatch_size, nn::AdamState& adam, RandomStream& rng,
                       std::vector<MinibatchTracePoint>* trace,
                       const Eigen::VectorXd* probe_state) {
  vanilla_pg_update_impl(policy, batch, steps, minibatch_size, adam, rng, trace,
                         probe_state);
}

IterationStats ppo_cma_iteration(GaussianPolicy& policy, Critic& critic,
                                 HistoryBuffer& history,
                                 const std::vector<Episode>& episodes,
                                 const AlgoConfig& config, int episode_cap,
                                 TrainState& train, RandomStream& rng) {
  if (episodes.empty()) throw std::invalid_argument("ppo_cma_iteration: empty experience");
  IterationStats stats;
  fill_collection_stats(stats, episodes);

  stats.critic_loss = train_critic(critic, trajectories_of(episodes), config.gamma,
                                   config.lambda, episode_cap, config.K, config.M,
                                   train.critic, rng)
                          .mean_loss;
  const auto advantages = advantages_of(episodes, critic, config, episode_cap);
  stats.frac_positive_adv = positive_fraction(advantages);

  ProcessedBatch processed = make_batch(episodes, advantages);
  processed = config.mode == AlgoMode::ppo_cma ? mirror_negative_advantages(std::move(processed))
                                               : clip_negative_advantages(std::move(processed));
  if ((processed.weights.array() < 0.0).any())
    throw std::logic_error("ppo_cma_iteration: negative weight after processing");
  history.push(std::move(processed));
  const ProcessedBatch& current = history.iteration(history.iterations() - 1);

  double loss_sum = 0.0;
  if (config.mode == AlgoMode::ppo_cma_single_net) {
    // single combined network: mean and variance update together on the
    // current iteration's data
    detail::MinibatchSampler sampler(current.size());
    for (int k = 0; k < config.K; ++k) {
      const BatchMinibatch mb = gather(current, sampler.draw(config.M, rng));
      LossResult res =
          gaussian_loss(policy, mb.states, mb.actions, mb.weights, LossPhase::both);
      nn::adam_step(policy.network(LossPhase::both), res.grad, train.policy_mean);
      loss_sum += res.loss;
    }
  } else {
    // variance first, from the pooled history
    detail::MinibatchSampler var_sampler(static_cast<int>(history.total_samples()));
    for (int k = 0; k < config.K; ++k) {
      const auto idx = var_sampler.draw(config.M, rng);
      const auto mb = history.gather(std::vector<long long>(idx.begin(), idx.end()));
      LossResult res =
          gaussian_loss(policy, mb.states, mb.actions, mb.weights, LossPhase::var);
      nn::adam_step(policy.network(LossPhase::var), res.grad, train.policy_var);
    }
    // then the mean, from the current iteration only
    detail::MinibatchSampler mean_sampler(current.size());
    for (int k = 0; k < config.K; ++k) {
      const BatchMinibatch mb = gather(current, mean_sampler.draw(config.M, rng));
      LossResult res =
          gaussian_loss(policy, mb.states, mb.actions, mb.weights, LossPhase::mean);
      nn::adam_step(policy.network(LossPhase::mean), res.grad, train.policy_mean);
      loss_sum += res.loss;
    }
  }
  stats.policy_loss = loss_sum / double(config.K);
  return stats;
}

IterationStats ppo_iteration(GaussianPolicy& policy, Critic& critic,
                             const std::vector<Episode>& episodes,
                             const AlgoConfig& config, int episode_cap, TrainState& train,
                             RandomStream& rng) {
  if (episodes.empty()) throw std::invalid_argument("ppo_iteration: empty experience");
  IterationStats stats;
  fill_collection_stats(stats, episodes);

  stats.critic_loss = train_critic(critic, trajectories_of(episodes), config.gamma,
                                   config.lambda, episode_cap, config.K, config.M,
                                   train.critic, rng)
                          .mean_loss;
  const auto advantages = advantages_of(episodes, critic, config, episode_cap);
  stats.frac_positive_adv = positive_fraction(advantages);

  const ProcessedBatch batch = make_batch(episodes, advantages);  // signed weights
  detail::MinibatchSampler sampler(batch.size());
  double loss_sum = 0.0;
  for (int k = 0; k < config.K; ++k) {
    const BatchMinibatch mb = gather(batch, sampler.draw(config.M, rng));
    LossResult res = clipped_surrogate_loss(policy, mb.states, mb.actions, mb.weights,
                                            mb.old_logp, config.epsilon, config.w_entropy);
    nn::adam_step(policy.network(LossPhase::both), res.grad, train.policy_mean);
    loss_sum += res.loss;
  }
  stats.policy_loss = loss_sum / double(config.K);
  return stats;
}

IterationStats vanilla_pg_iteration(GaussianPolicy& policy, Critic& critic,
                                    const std::vector<Episode>& episodes,
                                    const AlgoConfig& config, int episode_cap,
                                    TrainState& train, RandomStream& rng,
                                    std::vector<MinibatchTracePoint>* trace,
                                    const Eigen::VectorXd* probe_state) {
  if (episodes.empty()) throw std::invalid_argument("vanilla_pg_iteration: empty experience");
  IterationStats stats;
  fill_collection_stats(stats, episodes);

  stats.critic_loss = train_critic(critic, trajectories_of(episodes), config.gamma,
                                   config.lambda, episode_cap, config.K, config.M,
                                   train.critic, rng)
                          .mean_loss;
  const auto advantages = advantages_of(episodes, critic, config, episode_cap);
  stats.frac_positive_adv = positive_fraction(advantages);

  const ProcessedBatch batch = make_batch(episodes, advantages);
  stats.policy_loss = vanilla_pg_update_impl(policy, batch, config.K, config.M,
                                             train.policy_mean, rng, trace, probe_state);
  return stats;
}

IterationStats run_iteration(GaussianPolicy& policy, Critic& critic, HistoryBuffer& history,
                             const std::vector<Episode>& episodes, const AlgoConfig& config,
                             int episode_cap, TrainState& train, RandomStream& rng,
                             std::vector<MinibatchTracePoint>* pg_trace,
                             const Eigen::VectorXd* probe_state) {
  switch (config.mode) {
    case AlgoMode::vanilla_pg:
      return vanilla_pg_iteration(policy, critic, episodes, config, episode_cap, train,
                                  rng, pg_trace, probe_state);
    case AlgoMode::ppo_clip:
      return ppo_iteration(policy, critic, episodes, config, episode_cap, train, rng);
    case AlgoMode::ppo_cma:
    case AlgoMode::ppo_cma_no_mirror:
    case AlgoMode::ppo_cma_single_net:
      return ppo_cma_iteration(policy, critic, history, episodes, config, episode_cap,
                               train, rng);
  }
  throw std::logic_error("unreachable");
}

}  // namespace ppocma
