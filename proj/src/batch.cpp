#include "ppocma/batch.hpp"

#include <cmath>
#include <stdexcept>

namespace ppocma {

double Episode::total_reward() const {
  double sum = 0.0;
  for (const auto& tup : traj) sum += tup.r;
  return sum;
}

void ProcessedBatch::validate() const {
  const Eigen::Index n = weights.size();
  if (states.cols() != n || actions.cols() != n || gen_mean.cols() != n ||
      gen_var.cols() != n || old_logp.size() != n)
    throw std::invalid_argument("ProcessedBatch: column counts differ");
  if (!weights.allFinite())
    throw std::invalid_argument("ProcessedBatch: non-finite weights");
}

ProcessedBatch make_batch(const std::vector<Episode>& episodes,
                          const std::vector<Eigen::VectorXd>& advantages) {
  if (episodes.empty()) throw std::invalid_argument("make_batch: no episodes");
  if (advantages.size() != episodes.size())
    throw std::invalid_argument("make_batch: advantage count mismatch");
  long long n = 0;
  for (const auto& ep : episodes) n += static_cast<long long>(ep.traj.size());
  const int obs_dim = static_cast<int>(episodes.front().traj.front().s.size());
  const int act_dim = static_cast<int>(episodes.front().gen_mean.rows());

  ProcessedBatch batch;
  batch.states.resize(obs_dim, n);
  batch.actions.resize(act_dim, n);
  batch.weights.resize(n);
  batch.gen_mean.resize(act_dim, n);
  batch.gen_var.resize(act_dim, n);
  batch.old_logp.resize(n);

  long long col = 0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    if (advantages[e].size() != static_cast<Eigen::Index>(ep.traj.size()))
      throw std::invalid_argument("make_batch: advantage length mismatch");
    for (std::size_t i = 0; i < ep.traj.size(); ++i, ++col) {
      batch.states.col(col) = ep.traj[i].s;
      batch.actions.col(col) = ep.traj[i].a;
      batch.weights[col] = advantages[e][static_cast<Eigen::Index>(i)];
      batch.gen_mean.col(col) = ep.gen_mean.col(static_cast<Eigen::Index>(i));
      batch.gen_var.col(col) = ep.gen_var.col(static_cast<Eigen::Index>(i));
      batch.old_logp[col] = ep.old_logp[static_cast<Eigen::Index>(i)];
    }
  }
  batch.validate();
  return batch;
}

ProcessedBatch clip_negative_advantages(ProcessedBatch batch) {
  batch.validate();
  batch.weights = batch.weights.cwiseMax(0.0);
  return batch;
}

ProcessedBatch mirror_negative_advantages(ProcessedBatch batch) {
  batch.validate();
  if ((batch.gen_var.array() <= 0.0).any())
    throw std::invalid_argument("mirror_negative_advantages: non-positive variance");
  for (int i = 0; i < batch.size(); ++i) {
    const double adv = batch.weights[i];
    if (adv >= 0.0) continue;
    const Eigen::VectorXd diff = batch.actions.col(i) - batch.gen_mean.col(i);
    const double psi =
        std::exp(-0.5 * (diff.array().square() / batch.gen_var.col(i).array()).sum());
    batch.actions.col(i) = 2.0 * batch.gen_mean.col(i) - batch.actions.col(i);
    batch.weights[i] = -adv * psi;
    // the reflection is equidistant from the mean, so its density (and the
    // stored old_logp) is unchanged
  }
  return batch;
}

HistoryBuffer::HistoryBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("HistoryBuffer: capacity must be >= 1");
}

void HistoryBuffer::push(ProcessedBatch batch) {
  batch.validate();
  total_samples_ += batch.size();
  items_.push_back(std::move(batch));
  while (static_cast<int>(items_.size()) > capacity_) {
    total_samples_ -= items_.front().size();
    items_.pop_front();
  }
}

void HistoryBuffer::clear() {
  items_.clear();
  total_samples_ = 0;
}

HistoryBuffer::Minibatch HistoryBuffer::gather(
    const std::vector<long long>& union_indices) const {
  if (items_.empty()) throw std::logic_error("HistoryBuffer: empty");
  const Eigen::Index n = static_cast<Eigen::Index>(union_indices.size());
  Minibatch mb;
  mb.states.resize(items_.front().states.rows(), n);
  mb.actions.resize(items_.front().actions.rows(), n);
  mb.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    long long idx = union_indices[static_cast<std::size_t>(i)];
    if (idx < 0 || idx >= total_samples_)
      throw std::out_of_range("HistoryBuffer: index out of range");
    for (const auto& item : items_) {
      if (idx < item.size()) {
        mb.states.col(i) = item.states.col(idx);
        mb.actions.col(i) = item.actions.col(idx);
        mb.weights[i] = item.weights[idx];
        break;
      }
      idx -= item.size();
    }
  }
  return mb;
}

}  // namespace ppocma
