#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ppocma/algorithms.hpp"

using namespace ppocma;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ActionBounds unit_bounds(int d) {
  return {VectorXd::Constant(d, -1.0), VectorXd::Constant(d, 1.0)};
}

ProcessedBatch signed_batch(const MatrixXd& actions, const VectorXd& advantages,
                            const MatrixXd& gen_mean, const MatrixXd& gen_var) {
  ProcessedBatch b;
  const Eigen::Index n = advantages.size();
  b.states = MatrixXd::Zero(1, n);
  b.actions = actions;
  b.weights = advantages;
  b.gen_mean = gen_mean;
  b.gen_var = gen_var;
  b.old_logp = VectorXd::Zero(n);
  return b;
}

// one-step terminal episodes at the constant zero observation, with policy
// context evaluated honestly from the given policy
std::vector<Episode> fake_episodes(const GaussianPolicy& policy, const MatrixXd& actions,
                                   const VectorXd& rewards) {
  std::vector<Episode> episodes;
  const Eigen::VectorXd state = Eigen::VectorXd::Zero(policy.obs_dim());
  MatrixXd mu, var;
  policy.mean_and_var(state, mu, var);
  for (Eigen::Index i = 0; i < rewards.size(); ++i) {
    Episode ep;
    ExperienceTuple tup;
    tup.s = state;
    tup.a = actions.col(i);
    tup.r = rewards[i];
    tup.s_next = state;
    tup.t = 0;
    tup.end = EndKind::terminal;
    ep.traj.push_back(std::move(tup));
    ep.gen_mean = mu;
    ep.gen_var = var;
    ep.old_logp = VectorXd::Constant(1, policy.log_prob(state, actions.col(i)));
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace

TEST_CASE("mode names round-trip") {
  for (const auto* name : {"vanilla-pg", "ppo-clip", "ppo-cma", "ppo-cma-no-mirror",
                           "ppo-cma-single-net"})
    CHECK(to_string(algo_mode_from_string(name)) == name);
  CHECK_THROWS_AS(algo_mode_from_string("trpo"), std::invalid_argument);
}

TEST_CASE("config validation and the N < T warning") {
  AlgoConfig cfg;
  cfg.N = 50;
  std::ostringstream warnings;
  cfg.validate(100, &warnings);
  CHECK(warnings.str().find("warning") != std::string::npos);

  std::ostringstream quiet;
  cfg.N = 200;
  cfg.validate(100, &quiet);
  CHECK(quiet.str().empty());

  AlgoConfig bad = cfg;
  bad.K = 0;
  CHECK_THROWS_AS(bad.validate(100, nullptr), std::invalid_argument);
  bad = cfg;
  bad.gamma = 1.5;
  CHECK_THROWS_AS(bad.validate(100, nullptr), std::invalid_argument);
}

TEST_CASE("clip_negative_advantages") {
  MatrixXd actions = MatrixXd::Random(2, 3);
  MatrixXd mean = MatrixXd::Zero(2, 3), var = MatrixXd::Ones(2, 3);
  VectorXd adv(3);
  adv << -2.0, 0.0, 3.0;
  const auto clipped = clip_negative_advantages(signed_batch(actions, adv, mean, var));
  CHECK(clipped.weights[0] == 0.0);
  CHECK(clipped.weights[1] == 0.0);
  CHECK(clipped.weights[2] == 3.0);
  CHECK(clipped.actions == actions);  // samples retained

  VectorXd all_neg = VectorXd::Constant(3, -1.0);
  CHECK(clip_negative_advantages(signed_batch(actions, all_neg, mean, var))
            .weights.isZero(0.0));

  VectorXd all_pos(3);
  all_pos << 0.5, 0.0, 2.0;
  CHECK(clip_negative_advantages(signed_batch(actions, all_pos, mean, var)).weights ==
        all_pos);
}

TEST_CASE("mirror_negative_advantages: hand values") {
  SUBCASE("action at the mean mirrors to itself with weight |A|") {
    MatrixXd a(2, 1), mean(2, 1), var(2, 1);
    a << 0.3, -0.1;
    mean << 0.3, -0.1;
    var << 0.5, 2.0;
    VectorXd adv = VectorXd::Constant(1, -1.0);
    const auto m = mirror_negative_advantages(signed_batch(a, adv, mean, var));
    CHECK(m.actions.col(0) == a.col(0));
    CHECK(m.weights[0] == 1.0);  // psi(mu) = exp(0) is exact
  }

  SUBCASE("worked 2D example") {
    MatrixXd a(2, 1), mean(2, 1), var(2, 1);
    a << 0.4, -0.2;
    mean << 0.0, 0.0;
    var << 1.0, 1.0;
    VectorXd adv = VectorXd::Constant(1, -1.0);
    const auto m = mirror_negative_advantages(signed_batch(a, adv, mean, var));
    CHECK(m.actions(0, 0) == doctest::Approx(-0.4).epsilon(1e-14));
    CHECK(m.actions(1, 0) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(m.weights[0] == doctest::Approx(std::exp(-0.5 * 0.2)).epsilon(1e-12));
  }

  SUBCASE("positive advantages pass through untouched") {
    MatrixXd a(2, 2), mean = MatrixXd::Zero(2, 2), var = MatrixXd::Ones(2, 2);
    a << 0.5, -0.5, 0.2, 0.9;
    VectorXd adv(2);
    adv << 1.5, 0.0;
    const auto m = mirror_negative_advantages(signed_batch(a, adv, mean, var));
    CHECK(m.actions == a);
    CHECK(m.weights == adv);
  }

  SUBCASE("non-positive variance is rejected") {
    MatrixXd a = MatrixXd::Random(2, 1), mean = MatrixXd::Zero(2, 1);
    MatrixXd var = MatrixXd::Zero(2, 1);
    CHECK_THROWS_AS(
        mirror_negative_advantages(signed_batch(a, VectorXd::Constant(1, -1.0), mean, var)),
        std::invalid_argument);
  }
}

TEST_CASE("mirroring properties on random samples") {
  RandomStream rng(13);
  const int n = 10000;
  MatrixXd a(2, n), mean(2, n), var(2, n);
  VectorXd adv(n);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < 2; ++r) {
      mean(r, i) = rng.uniform(-1.0, 1.0);
      var(r, i) = rng.uniform(0.01, 4.0);
      a(r, i) = mean(r, i) + std::sqrt(var(r, i)) * rng.normal();
    }
    adv[i] = rng.uniform(-3.0, 3.0);
  }
  const auto batch = signed_batch(a, adv, mean, var);
  const auto mirrored = mirror_negative_advantages(batch);

  CHECK(mirrored.size() == n);  // sample count preserved
  CHECK((mirrored.weights.array() >= 0.0).all());
  CHECK(mirrored.weights.allFinite());
  for (int i = 0; i < n; ++i) {
    if (adv[i] >= 0.0) continue;
    const double psi = mirrored.weights[i] / -adv[i];
    CHECK(psi > 0.0);
    CHECK(psi <= 1.0);
  }

  // involution: mirroring the mirrored actions restores the originals
  const auto twice = mirror_negative_advantages(
      signed_batch(mirrored.actions, adv, mean, var));
  for (int i = 0; i < n; ++i) {
    if (adv[i] >= 0.0) continue;
    CHECK((twice.actions.col(i) - a.col(i)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("history buffer ring semantics") {
  HistoryBuffer history(3);
  const auto batch_of = [](double tag, int size) {
    ProcessedBatch b;
    b.states = MatrixXd::Zero(1, size);
    b.actions = MatrixXd::Constant(2, size, tag);
    b.weights = VectorXd::Constant(size, tag);
    b.gen_mean = MatrixXd::Zero(2, size);
    b.gen_var = MatrixXd::Ones(2, size);
    b.old_logp = VectorXd::Zero(size);
    return b;
  };

  for (int i = 1; i <= 5; ++i) {
    history.push(batch_of(double(i), i));
    CHECK(history.iterations() == std::min(i, 3));
    // contains exactly iterations max(1, i-H+1) .. i
    const int expect_oldest = std::max(1, i - 3 + 1);
    CHECK(history.iteration(0).weights[0] == double(expect_oldest));
    CHECK(history.iteration(history.iterations() - 1).weights[0] == double(i));
  }
  CHECK(history.total_samples() == 3 + 4 + 5);

  // gather spans the union in oldest-first order
  const auto mb = history.gather({0, 2, 3, 11});
  CHECK(mb.weights[0] == 3.0);
  CHECK(mb.weights[1] == 3.0);
  CHECK(mb.weights[2] == 4.0);
  CHECK(mb.weights[3] == 5.0);
  CHECK_THROWS_AS(history.gather({12}), std::out_of_range);
}

TEST_CASE("clipped surrogate: hand values") {
  GaussianPolicy policy(1, unit_bounds(2), {4}, PolicyArch::combined_net, 3);
  const MatrixXd s = MatrixXd::Zero(1, 2);
  MatrixXd a(2, 2);
  a << 0.1, -0.3, 0.2, 0.4;
  const VectorXd logp = policy.log_prob(s, a);

  SUBCASE("fresh policy, rho = 1: loss is -mean(A)") {
    VectorXd adv(2);
    adv << 0.7, -0.2;
    const auto res = clipped_surrogate_loss(policy, s, a, adv, logp, 0.2, 0.0);
    CHECK(res.loss == doctest::Approx(-adv.mean()).epsilon(1e-12));
  }

  SUBCASE("rho = 2 with positive advantage clips to 1 + eps") {
    VectorXd adv = VectorXd::Constant(1, 1.0);
    const VectorXd old = logp.head(1).array() - std::log(2.0);  // rho = 2
    const auto res = clipped_surrogate_loss(policy, s.leftCols(1), a.leftCols(1), adv,
                                            old, 0.2, 0.0);
    CHECK(res.loss == doctest::Approx(-1.2).epsilon(1e-12));
    CHECK(res.grad.isZero(0.0));  // clamped branch, no gradient through rho
  }

  SUBCASE("rho = 0.5 with negative advantage binds at 1 - eps") {
    VectorXd adv = VectorXd::Constant(1, -1.0);
    const VectorXd old = logp.head(1).array() + std::log(2.0);  // rho = 0.5
    const auto res = clipped_surrogate_loss(policy, s.leftCols(1), a.leftCols(1), adv,
                                            old, 0.2, 0.0);
    CHECK(res.loss == doctest::Approx(0.8).epsilon(1e-12));
  }
}

TEST_CASE("clipped surrogate gradient matches finite differences") {
  RandomStream rng(19);
  for (int rep = 0; rep < 4; ++rep) {
    GaussianPolicy policy(2, unit_bounds(2), {5, 4}, PolicyArch::combined_net,
                          rng.next_u64());
    MatrixXd s(2, 6), a(2, 6);
    VectorXd adv(6), old(6);
    for (int c = 0; c < 6; ++c) {
      for (int r = 0; r < 2; ++r) {
        s(r, c) = rng.normal();
        a(r, c) = 0.7 * rng.normal();
      }
      adv[c] = rng.uniform(-2.0, 2.0);
    }
    old = policy.log_prob(s, a).array() + 0.05;  // rho slightly off 1
    const double eps = 0.2, w_ent = 0.03;
    const auto res = clipped_surrogate_loss(policy, s, a, adv, old, eps, w_ent);

    GaussianPolicy probe = policy;
    nn::Network& net = probe.network(LossPhase::both);
    VectorXd numeric(net.parameters.size());
    const double h = 1e-6;
    for (Eigen::Index p = 0; p < net.parameters.size(); ++p) {
      const double keep = net.parameters[p];
      net.parameters[p] = keep + h;
      const double up = clipped_surrogate_loss(probe, s, a, adv, old, eps, w_ent).loss;
      net.parameters[p] = keep - h;
      const double dn = clipped_surrogate_loss(probe, s, a, adv, old, eps, w_ent).loss;
      net.parameters[p] = keep;
      numeric[p] = (up - dn) / (2.0 * h);
    }
    const double rel = (res.grad - numeric).norm() / std::max(1e-12, numeric.norm());
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("huge epsilon reduces the surrogate to the importance-weighted gradient") {
  RandomStream rng(23);
  GaussianPolicy policy(1, unit_bounds(2), {4}, PolicyArch::combined_net, 7);
  // states off zero: with zero-initialized biases a zero state would put
  // the hidden pre-activations exactly on the leaky-ReLU kink, where
  // central differences do not measure the subgradient
  MatrixXd s(1, 4), a(2, 4);
  VectorXd adv(4);
  for (int c = 0; c < 4; ++c) {
    s(0, c) = 0.5 + 0.1 * c;
    for (int r = 0; r < 2; ++r) a(r, c) = rng.normal() * 0.5;
    adv[c] = rng.uniform(-1.0, 1.0);
  }
  const VectorXd old = policy.log_prob(s, a).array() - 0.1;
  const auto surrogate = clipped_surrogate_loss(policy, s, a, adv, old, 1e9, 0.0);

  // reference: finite differences of -mean(exp(logp - old) * A) via log_prob
  GaussianPolicy probe = policy;
  nn::Network& net = probe.network(LossPhase::both);
  VectorXd numeric(net.parameters.size());
  const double h = 1e-6;
  const auto iw_loss = [&](const GaussianPolicy& p) {
    return -((p.log_prob(s, a) - old).array().exp() * adv.array()).mean();
  };
  for (Eigen::Index p = 0; p < net.parameters.size(); ++p) {
    const double keep = net.parameters[p];
    net.parameters[p] = keep + h;
    const double up = iw_loss(probe);
    net.parameters[p] = keep - h;
    const double dn = iw_loss(probe);
    net.parameters[p] = keep;
    numeric[p] = (up - dn) / (2.0 * h);
  }
  CHECK((surrogate.grad - numeric).norm() / numeric.norm() < 1e-4);
}

TEST_CASE("vanilla_pg_update: zero weights leave the policy unchanged") {
  GaussianPolicy policy(1, unit_bounds(2), {8}, PolicyArch::combined_net, 5);
  const VectorXd before = policy.network(LossPhase::both).parameters;
  MatrixXd actions = MatrixXd::Random(2, 10);
  auto batch = signed_batch(actions, VectorXd::Zero(10), MatrixXd::Zero(2, 10),
                            MatrixXd::Ones(2, 10));
  nn::AdamState adam(before.size(), 3e-4);
  RandomStream rng(1);
  vanilla_pg_update(policy, batch, 50, 4, adam, rng);
  CHECK(policy.network(LossPhase::both).parameters == before);
}

TEST_CASE("vanilla_pg_update: a single positive sample attracts the mean") {
  GaussianPolicy policy(1, unit_bounds(2), {16}, PolicyArch::combined_net, 29);
  MatrixXd target(2, 1);
  target << 0.3, -0.5;
  auto batch = signed_batch(target, VectorXd::Ones(1), MatrixXd::Zero(2, 1),
                            MatrixXd::Ones(2, 1));
  nn::AdamState adam(policy.network(LossPhase::both).parameters.size(), 3e-4);
  RandomStream rng(2);
  vanilla_pg_update(policy, batch, 6000, 1, adam, rng);
  MatrixXd mu, var;
  policy.mean_and_var(MatrixXd::Zero(1, 1), mu, var);
  CHECK(std::abs(mu(0, 0) - 0.3) < 1e-2);
  CHECK(std::abs(mu(1, 0) + 0.5) < 1e-2);
}

TEST_CASE("ppo_cma_iteration: ring occupancy and non-negative training weights") {
  GaussianPolicy policy(1, unit_bounds(2), {8, 8}, PolicyArch::separate_nets, 31);
  Critic critic(1, {8, 8}, 32);
  HistoryBuffer history(2);
  AlgoConfig cfg;
  cfg.mode = AlgoMode::ppo_cma;
  cfg.K = 5;
  cfg.M = 8;
  cfg.H = 2;
  cfg.gamma = 0.0;
  TrainState train(policy, critic, 3e-4);
  RandomStream rng(3), sample_rng(4);

  for (int iter = 1; iter <= 4; ++iter) {
    MatrixXd actions(2, 12);
    VectorXd rewards(12);
    for (int i = 0; i < 12; ++i) {
      actions.col(i) = policy.sample_action(VectorXd::Zero(1), sample_rng);
      rewards[i] = -actions.col(i).squaredNorm();
    }
    const auto episodes = fake_episodes(policy, actions, rewards);
    const auto stats = ppo_cma_iteration(policy, critic, history, episodes, cfg, 1,
                                         train, rng);
    CHECK(history.iterations() == std::min(iter, 2));
    for (int h = 0; h < history.iterations(); ++h)
      CHECK((history.iteration(h).weights.array() >= 0.0).all());
    CHECK(std::isfinite(stats.policy_loss));
    CHECK(std::isfinite(stats.critic_loss));
  }
  CHECK_THROWS_AS(
      ppo_cma_iteration(policy, critic, history, {}, cfg, 1, train, rng),
      std::invalid_argument);
}

TEST_CASE("mean phase trains on the current iteration only") {
  // iteration 1 rewards favor X, iteration 2 rewards favor Y = -X; if the
  // mean phase pooled the history the update would cancel, so the mean must
  // move toward Y after iteration 2
  GaussianPolicy policy(1, unit_bounds(2), {16, 16}, PolicyArch::separate_nets, 41);
  Critic critic(1, {16, 16}, 42);
  critic.net().parameters.setZero();
  HistoryBuffer history(5);
  AlgoConfig cfg;
  cfg.mode = AlgoMode::ppo_cma_no_mirror;
  cfg.K = 400;
  cfg.M = 16;
  cfg.H = 5;
  cfg.gamma = 0.0;
  TrainState train(policy, critic, 3e-4);
  RandomStream rng(5);

  const auto make_iter = [&](double sign) {
    MatrixXd actions(2, 16);
    VectorXd rewards(16);
    for (int i = 0; i < 16; ++i) {
      const bool good = i < 8;
      actions.col(i) = VectorXd::Constant(2, good ? sign * 0.7 : -sign * 0.7);
      rewards[i] = good ? 10.0 : 0.0;
    }
    return fake_episodes(policy, actions, rewards);
  };

  ppo_cma_iteration(policy, critic, history, make_iter(+1.0), cfg, 1, train, rng);
  MatrixXd mu_after1, var1;
  policy.mean_and_var(MatrixXd::Zero(1, 1), mu_after1, var1);
  ppo_cma_iteration(policy, critic, history, make_iter(-1.0), cfg, 1, train, rng);
  MatrixXd mu_after2, var2;
  policy.mean_and_var(MatrixXd::Zero(1, 1), mu_after2, var2);

  // iteration 2 pulled the mean toward -0.7 relative to where iteration 1
  // left it, despite the history still holding the opposite-signed data
  CHECK(mu_after2(0, 0) < mu_after1(0, 0) - 0.05);
  CHECK(mu_after2(1, 0) < mu_after1(1, 0) - 0.05);
}

TEST_CASE("single-net mode trains one combined network") {
  GaussianPolicy policy(1, unit_bounds(2), {8, 8}, PolicyArch::combined_net, 51);
  Critic critic(1, {8, 8}, 52);
  HistoryBuffer history(1);
  AlgoConfig cfg;
  cfg.mode = AlgoMode::ppo_cma_single_net;
  cfg.K = 5;
  cfg.M = 8;
  cfg.gamma = 0.0;
  CHECK(cfg.effective_history() == 1);
  TrainState train(policy, critic, 3e-4);
  RandomStream rng(6), srng(7);
  MatrixXd actions(2, 10);
  VectorXd rewards(10);
  for (int i = 0; i < 10; ++i) {
    actions.col(i) = policy.sample_action(VectorXd::Zero(1), srng);
    rewards[i] = -actions.col(i).squaredNorm();
  }
  const auto episodes = fake_episodes(policy, actions, rewards);
  CHECK_NOTHROW(ppo_cma_iteration(policy, critic, history, episodes, cfg, 1, train, rng));
}

TEST_CASE("ppo_iteration runs and is deterministic") {
  const auto run_once = [] {
    GaussianPolicy policy(1, unit_bounds(2), {8, 8}, PolicyArch::combined_net, 61);
    Critic critic(1, {8, 8}, 62);
    AlgoConfig cfg;
    cfg.mode = AlgoMode::ppo_clip;
    cfg.K = 10;
    cfg.M = 8;
    cfg.gamma = 0.0;
    TrainState train(policy, critic, 3e-4);
    RandomStream rng(8), srng(9);
    MatrixXd actions(2, 12);
    VectorXd rewards(12);
    for (int i = 0; i < 12; ++i) {
      actions.col(i) = policy.sample_action(VectorXd::Zero(1), srng);
      rewards[i] = -actions.col(i).squaredNorm();
    }
    const auto episodes = fake_episodes(policy, actions, rewards);
    ppo_iteration(policy, critic, episodes, cfg, 1, train, rng);
    return policy.network(LossPhase::both).parameters;
  };
  CHECK(run_once() == run_once());
}
