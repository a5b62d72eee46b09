#include "ppocma/cma.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "detail/csv.hpp"
#include "detail/io.hpp"

namespace ppocma::cma {

CmaState CmaState::make(Eigen::VectorXd mean0, Eigen::MatrixXd cov0, int pop) {
  if (pop < 2) throw std::invalid_argument("CmaState: population must be >= 2");
  const int n = static_cast<int>(mean0.size());
  if (cov0.rows() != n || cov0.cols() != n)
    throw std::invalid_argument("CmaState: covariance shape mismatch");
  CmaState s;
  s.mean = std::move(mean0);
  s.cov = std::move(cov0);
  s.path = Eigen::VectorXd::Zero(n);
  s.pop = pop;
  const double m = double(pop / 2);
  s.c_mu = 0.5 * std::min(1.0, 2.0 * m / ((n + 2.0) * (n + 2.0)));
  s.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + m);
  s.c_c = 4.0 / (n + 4.0);
  s.beta0 = 1.0 - s.c_c;
  s.beta1 = std::sqrt(s.c_c * (2.0 - s.c_c));
  return s;
}

Eigen::VectorXd rank_weights(const Eigen::VectorXd& fitness) {
  const int pop = static_cast<int>(fitness.size());
  if (pop < 2) throw std::invalid_argument("rank_weights: need at least 2 samples");
  if (!fitness.allFinite()) throw std::invalid_argument("rank_weights: non-finite fitness");

  std::vector<int> order(pop);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return fitness[a] > fitness[b]; });

  const int m = pop / 2;
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(pop);
  double sum = 0.0;
  for (int rank = 1; rank <= m; ++rank) {
    const double w = std::log(m + 0.5) - std::log(double(rank));
    weights[order[rank - 1]] = w;
    sum += w;
  }
  weights /= sum;
  return weights;
}

IterationTrace cma_iteration(CmaState& state, const Objective& objective,
                             RandomStream& rng) {
  const int n = static_cast<int>(state.mean.size());
  Eigen::LLT<Eigen::MatrixXd> llt(state.cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("cma_iteration: covariance is not positive definite");
  const Eigen::MatrixXd chol = llt.matrixL();

  Eigen::MatrixXd samples(n, state.pop);
  Eigen::VectorXd fitness(state.pop);
  Eigen::VectorXd z(n);
  for (int i = 0; i < state.pop; ++i) {
    for (int j = 0; j < n; ++j) z[j] = rng.normal();
    samples.col(i) = state.mean + chol * z;
    fitness[i] = objective(samples.col(i));
    if (!std::isfinite(fitness[i]))
      throw std::runtime_error("cma_iteration: objective returned a non-finite value");
  }

  const Eigen::VectorXd weights = rank_weights(fitness);

  // covariance first, around the old mean (rank-mu order), plus the
  // rank-one evolution-path term
  const Eigen::VectorXd mean_old = state.mean;
  Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < state.pop; ++i) {
    if (weights[i] == 0.0) continue;
    const Eigen::VectorXd d = samples.col(i) - mean_old;
    rank_mu.noalias() += weights[i] * d * d.transpose();
  }
  state.cov = (1.0 - state.c_mu - state.c_1) * state.cov + state.c_mu * rank_mu +
              state.c_1 * state.path * state.path.transpose();

  // then the mean, then the low-pass filtered mean step
  state.mean = samples * weights;
  state.path = state.beta0 * state.path + state.beta1 * (state.mean - mean_old);

  // transpose() aliases its destination, so evaluate into a temporary
  const Eigen::MatrixXd symmetrized = 0.5 * (state.cov + state.cov.transpose());
  state.cov = symmetrized;
  const double min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(state.cov, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
  if (min_eig <= 1e-12)
    state.cov += (2e-12 - min_eig) * Eigen::MatrixXd::Identity(n, n);

  state.iteration += 1;
  return {state.iteration, fitness.maxCoeff(), state.mean.norm(), state.cov.trace(),
          state.path.norm()};
}

std::vector<IterationTrace> run(CmaState& state, const Objective& objective,
                                int iterations, RandomStream& rng,
                                const std::string& trace_csv_path) {
  std::vector<IterationTrace> traces;
  traces.reserve(iterations);
  for (int i = 0; i < iterations; ++i)
    traces.push_back(cma_iteration(state, objective, rng));
  if (!trace_csv_path.empty()) {
    std::string csv = "iteration,best_fitness,mu_norm,trace_c,p_norm\n";
    for (const auto& tr : traces) {
      csv += std::to_string(tr.iteration);
      csv += ',';
      csv += detail::format_double(tr.best_fitness);
      csv += ',';
      csv += detail::format_double(tr.mean_norm);
      csv += ',';
      csv += detail::format_double(tr.cov_trace);
      csv += ',';
      csv += detail::format_double(tr.path_norm);
      csv += '\n';
    }
    detail::atomic_write(trace_csv_path, csv);
  }
  return traces;
}

}  // namespace ppocma::cma
