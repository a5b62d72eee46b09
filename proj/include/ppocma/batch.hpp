#pragma once

#include <Eigen/Dense>
#include <deque>
#include <vector>

#include "ppocma/experience.hpp"
#include "ppocma/rng.hpp"

namespace ppocma {

/// One collected episode plus the policy context recorded while it was
/// generated: per-step clipped mean, per-step variance and log-density of
/// the sampled action under the generating policy.
struct Episode {
  Trajectory traj;
  Eigen::MatrixXd gen_mean;  // action_dim x length
  Eigen::MatrixXd gen_var;
  Eigen::VectorXd old_logp;

  double total_reward() const;
};

/// (state, action, weight) columns ready for policy fitting, together with
/// the generating-policy context. After clipping or mirroring the weights
/// are non-negative; straight from collection they hold signed advantages.
struct ProcessedBatch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd weights;
  Eigen::MatrixXd gen_mean;
  Eigen::MatrixXd gen_var;
  Eigen::VectorXd old_logp;

  int size() const { return static_cast<int>(weights.size()); }
  /// Throws std::invalid_argument on length mismatches or non-finite weights.
  void validate() const;
};

/// Flatten one iteration's episodes into a batch; `advantages[e]` aligns
/// with episodes[e] and lands in `weights` (signed).
ProcessedBatch make_batch(const std::vector<Episode>& episodes,
                          const std::vector<Eigen::VectorXd>& advantages);

/// weights <- max(A, 0); samples are kept (zero weight contributes nothing).
ProcessedBatch clip_negative_advantages(ProcessedBatch batch);

/// Samples with A >= 0 pass through with weight A. Samples with A < 0 are
/// replaced by the reflection a' = 2 mu - a about the generating mean with
/// weight -A * psi, psi = exp(-0.5 sum_j (a_j - mu_j)^2 / c_j). Their
/// stored log-density is unchanged (the reflection has equal density).
/// Throws on non-positive variance entries.
ProcessedBatch mirror_negative_advantages(ProcessedBatch batch);

/// Ring of the last H iterations' processed batches, oldest evicted first.
/// Variance training samples minibatches uniformly over the union of all
/// buffered samples.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int capacity);

  void push(ProcessedBatch batch);
  void clear();

  int capacity() const { return capacity_; }
  int iterations() const { return static_cast<int>(items_.size()); }
  long long total_samples() const { return total_samples_; }
  const ProcessedBatch& iteration(int i) const { return items_.at(i); }

  struct Minibatch {
    Eigen::MatrixXd states;
    Eigen::MatrixXd actions;
    Eigen::VectorXd weights;
  };
  /// Gather columns by index into the union of buffered samples (oldest
  /// iteration first).
  Minibatch gather(const std::vector<long long>& union_indices) const;

 private:
  int capacity_;
  long long total_samples_ = 0;
  std::deque<ProcessedBatch> items_;
};

}  // namespace ppocma
