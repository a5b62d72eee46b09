#include "ppocma/critic.hpp"

#include <cstring>
#include <numeric>
#include <stdexcept>

#include "detail/io.hpp"
#include "detail/sampling.hpp"

namespace ppocma {

double time_feature(int t, int episode_cap) {
  if (episode_cap < 1) throw std::invalid_argument("time_feature: episode cap must be >= 1");
  if (t < 0 || t > episode_cap) throw std::invalid_argument("time_feature: t out of range");
  return double(t) / double(episode_cap);
}

Critic::Critic(int obs_dim, const std::vector<int>& hidden_widths, std::uint64_t seed)
    : obs_dim_(obs_dim) {
  nn::NetworkLayout layout{obs_dim + 1, hidden_widths, 1};  // +1: time feature
  net_ = nn::init(layout, seed);
}

Eigen::VectorXd Critic::values(const Eigen::MatrixXd& states,
                               const Eigen::VectorXd& time_features) const {
  if (states.rows() != obs_dim_ || states.cols() != time_features.size())
    throw std::invalid_argument("critic: input shape mismatch");
  Eigen::MatrixXd inputs(obs_dim_ + 1, states.cols());
  inputs.topRows(obs_dim_) = states;
  inputs.row(obs_dim_) = time_features.transpose();
  return nn::forward(net_, inputs).row(0);
}

double Critic::value(const Eigen::VectorXd& s, int t, int episode_cap) const {
  Eigen::VectorXd tf(1);
  tf[0] = time_feature(t, episode_cap);
  return values(s, tf)[0];
}

Eigen::VectorXd compute_gae(const Trajectory& traj, const Critic& critic, double gamma,
                            double lambda, int episode_cap) {
  const int len = static_cast<int>(traj.size());
  if (len == 0) throw std::invalid_argument("compute_gae: empty trajectory");

  // values for every state plus the successor of the last tuple in one pass
  Eigen::MatrixXd states(critic.obs_dim(), len + 1);
  Eigen::VectorXd tf(len + 1);
  for (int i = 0; i < len; ++i) {
    states.col(i) = traj[i].s;
    tf[i] = time_feature(traj[i].t, episode_cap);
  }
  states.col(len) = traj.back().s_next;
  tf[len] = time_feature(std::min(traj.back().t + 1, episode_cap), episode_cap);
  const Eigen::VectorXd v = critic.values(states, tf);

  Eigen::VectorXd adv(len);
  double next_adv = 0.0;
  for (int i = len - 1; i >= 0; --i) {
    const bool last = (i == len - 1);
    const double v_next = (last && traj[i].end == EndKind::terminal) ? 0.0 : v[i + 1];
    const double delta = traj[i].r + gamma * v_next - v[i];
    // the recursion never carries value across the episode boundary
    const double carry = last ? 0.0 : next_adv;
    adv[i] = delta + gamma * lambda * carry;
    next_adv = adv[i];
  }
  return adv;
}

CriticTrainResult train_critic(Critic& critic, const std::vector<Trajectory>& trajectories,
                               double gamma, double lambda, int episode_cap,
                               int minibatch_steps, int minibatch_size,
                               nn::AdamState& adam, RandomStream& rng) {
  // flatten tuples; targets = advantage + old value, frozen before training
  int total = 0;
  for (const auto& tr : trajectories) total += static_cast<int>(tr.size());
  if (total == 0) throw std::invalid_argument("train_critic: no experience");

  Eigen::MatrixXd inputs(critic.obs_dim() + 1, total);
  Eigen::VectorXd targets(total);
  int col = 0;
  for (const auto& tr : trajectories) {
    const Eigen::VectorXd adv = compute_gae(tr, critic, gamma, lambda, episode_cap);
    Eigen::MatrixXd states(critic.obs_dim(), tr.size());
    Eigen::VectorXd tf(tr.size());
    for (std::size_t i = 0; i < tr.size(); ++i) {
      states.col(i) = tr[i].s;
      tf[i] = time_feature(tr[i].t, episode_cap);
    }
    const Eigen::VectorXd v_old = critic.values(states, tf);
    for (std::size_t i = 0; i < tr.size(); ++i) {
      inputs.col(col) << tr[i].s, tf[i];
      targets[col] = adv[i] + v_old[i];
      ++col;
    }
  }

  detail::MinibatchSampler sampler(total);
  double loss_sum = 0.0;
  Eigen::MatrixXd mb(inputs.rows(), minibatch_size);
  Eigen::VectorXd mb_target(minibatch_size);
  for (int step = 0; step < minibatch_steps; ++step) {
    const auto idx = sampler.draw(minibatch_size, rng);
    for (int i = 0; i < minibatch_size; ++i) {
      mb.col(i) = inputs.col(idx[i]);
      mb_target[i] = targets[idx[i]];
    }
    nn::ForwardTrace trace;
    const Eigen::VectorXd v = nn::forward(critic.net(), mb, &trace).row(0);
    const Eigen::VectorXd resid = v - mb_target;
    loss_sum += resid.array().abs().mean();
    // L1 subgradient, sign(0) = 0
    Eigen::MatrixXd grad(1, minibatch_size);
    grad.row(0) = resid.array()
                      .unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); })
                      .transpose() /
                  double(minibatch_size);
    nn::adam_step(critic.net(), nn::backward(critic.net(), trace, grad), adam);
  }
  return {loss_sum / double(minibatch_steps)};
}

namespace {
constexpr char kCriticMagic[8] = {'P', 'C', 'C', 'R', 'I', '0', '0', '1'};
}

void save_critic(const Critic& critic, const std::string& path) {
  std::string buf;
  buf.append(kCriticMagic, 8);
  detail::append_u32(buf, 1);
  detail::append_u32(buf, static_cast<std::uint32_t>(critic.obs_dim()));
  nn::append_network(buf, critic.net());
  detail::atomic_write(path, buf);
}

Critic load_critic(const std::string& path) {
  const std::string buf = detail::read_file(path);
  std::size_t off = 0;
  if (buf.size() < 8 || std::memcmp(buf.data(), kCriticMagic, 8) != 0)
    throw std::runtime_error("critic checkpoint: bad magic");
  off += 8;
  if (detail::read_u32(buf, off) != 1)
    throw std::runtime_error("critic checkpoint: unsupported version");
  const int obs_dim = static_cast<int>(detail::read_u32(buf, off));
  nn::Network net = nn::read_network(buf, off);
  Critic critic(obs_dim, net.layout.hidden_widths, 0);
  if (!(critic.net().layout == net.layout))
    throw std::runtime_error("critic checkpoint: unexpected network layout");
  critic.net().parameters = net.parameters;
  return critic;
}

}  // namespace ppocma
