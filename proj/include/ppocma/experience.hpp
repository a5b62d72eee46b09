#pragma once

#include <Eigen/Dense>
#include <vector>

namespace ppocma {

enum class EndKind { none, terminal, timeout };

/// One simulated step: observation (already normalized), action, reward,
/// successor observation, how (or whether) the episode ended, and the
/// timestep index within the episode.
struct ExperienceTuple {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  EndKind end = EndKind::none;
  int t = 0;
};

using Trajectory = std::vector<ExperienceTuple>;

}  // namespace ppocma
