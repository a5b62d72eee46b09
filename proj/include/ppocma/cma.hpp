#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "ppocma/rng.hpp"

namespace ppocma::cma {

/// Search distribution state of the simplified CMA-ES: full covariance,
/// rank-mu update with top-half log-rank weights and a rank-one evolution
/// path term. There is no separate step-size control path; the covariance
/// update carries all scale adaptation.
struct CmaState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::VectorXd path;
  int pop = 64;
  long long iteration = 0;
  // learning rates; the defaults depend on the dimension and population
  double c_mu = 0.0, c_1 = 0.0, c_c = 0.0;
  double beta0 = 0.0, beta1 = 0.0;

  static CmaState make(Eigen::VectorXd mean0, Eigen::MatrixXd cov0, int pop);
};

/// Rank-based weights for a population of fitness values (larger is better):
/// the worst half gets exactly zero, the best m = floor(pop/2) get
/// log(m + 0.5) - log(rank) normalized to sum one. Ties are broken by sample
/// index (stable sort). Throws on non-finite fitness or pop < 2.
Eigen::VectorXd rank_weights(const Eigen::VectorXd& fitness);

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct IterationTrace {
  long long iteration = 0;
  double best_fitness = 0.0;
  double mean_norm = 0.0;
  double cov_trace = 0.0;
  double path_norm = 0.0;
};

/// One iteration: sample pop points from N(mean, cov), evaluate, weight by
/// rank, update the covariance around the OLD mean (rank-mu order), then
/// move the mean to the weighted sample average and low-pass filter the
/// mean step into the evolution path. The covariance is symmetrized and
/// jittered to keep its smallest eigenvalue above 1e-12.
IterationTrace cma_iteration(CmaState& state, const Objective& objective,
                             RandomStream& rng);

/// Run for a number of iterations; when `trace_csv_path` is non-empty the
/// per-iteration trace is written there as CSV
/// (iteration,best_fitness,mu_norm,trace_c,p_norm).
std::vector<IterationTrace> run(CmaState& state, const Objective& objective,
                                int iterations, RandomStream& rng,
                                const std::string& trace_csv_path = "");

}  // namespace ppocma::cma
