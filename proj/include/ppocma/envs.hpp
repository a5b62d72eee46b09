#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>

#include "ppocma/experience.hpp"
#include "ppocma/policy.hpp"
#include "ppocma/rng.hpp"

namespace ppocma {

/// Episodic environment. Reset before stepping; stepping after an episode
/// has ended throws std::logic_error.
class Env {
 public:
  virtual ~Env() = default;

  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual const ActionBounds& bounds() const = 0;
  virtual int episode_cap() const = 0;  // T

  virtual Eigen::VectorXd reset(RandomStream& rng) = 0;

  struct Step {
    Eigen::VectorXd obs;
    double reward = 0.0;
    EndKind end = EndKind::none;
  };
  virtual Step step(const Eigen::VectorXd& action) = 0;
};

/// State-agnostic 2D quadratic problem: constant zero observation, a single
/// step per episode, reward -a.a evaluated on the raw (unclamped) action so
/// the policy density matches the evaluated action exactly.
class QuadraticEnv : public Env {
 public:
  QuadraticEnv();
  int obs_dim() const override { return 1; }
  int action_dim() const override { return 2; }
  const ActionBounds& bounds() const override { return bounds_; }
  int episode_cap() const override { return 1; }
  Eigen::VectorXd reset(RandomStream& rng) override;
  Step step(const Eigen::VectorXd& action) override;

 private:
  ActionBounds bounds_;
  bool live_ = false;
};

/// Deterministic damped point mass on the plane chasing a per-episode random
/// target. Observation is [position, velocity, target]; the reward is the
/// negative squared distance to the target. Actions are clamped to the
/// bounds before the dynamics, as physical actuators would.
class PointMassEnv : public Env {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kDamping = 0.1;
  static constexpr int kEpisodeCap = 100;

  PointMassEnv();
  int obs_dim() const override { return 6; }
  int action_dim() const override { return 2; }
  const ActionBounds& bounds() const override { return bounds_; }
  int episode_cap() const override { return kEpisodeCap; }
  Eigen::VectorXd reset(RandomStream& rng) override;
  Step step(const Eigen::VectorXd& action) override;

 private:
  Eigen::VectorXd observation() const;
  ActionBounds bounds_;
  Eigen::Vector2d position_, velocity_, target_;
  int t_ = 0;
  bool live_ = false;
};

/// Applies each policy action `factor` times (or until the episode ends),
/// summing rewards; the wrapped episode cap is ceil(T / factor).
class ActionRepeatEnv : public Env {
 public:
  ActionRepeatEnv(std::unique_ptr<Env> inner, int factor);
  int obs_dim() const override { return inner_->obs_dim(); }
  int action_dim() const override { return inner_->action_dim(); }
  const ActionBounds& bounds() const override { return inner_->bounds(); }
  int episode_cap() const override;
  Eigen::VectorXd reset(RandomStream& rng) override { return inner_->reset(rng); }
  Step step(const Eigen::VectorXd& action) override;

 private:
  std::unique_ptr<Env> inner_;
  int factor_;
};

/// "quadratic" or "pointmass", optionally wrapped in action repeat.
std::unique_ptr<Env> make_env(const std::string& name, int action_repeat = 1);

/// Per-dimension observation scaling k_j = min(k_j_prev, 1/(rho_j + kappa))
/// where rho_j is the root mean square of the raw variable over all
/// iterations so far. k is frozen during collection and updated between
/// iterations, and never increases after initialization.
class ObsNormalizer {
 public:
  explicit ObsNormalizer(int dim, double kappa = 0.001);

  bool initialized() const { return initialized_; }
  /// Accumulate one iteration's raw observations (columns) and refresh k.
  /// Throws on an empty batch.
  void update(const Eigen::MatrixXd& raw_observations);
  /// Elementwise k * raw. Throws std::logic_error when uninitialized.
  Eigen::VectorXd apply(const Eigen::VectorXd& raw) const;
  const Eigen::VectorXd& scale() const;

 private:
  double kappa_;
  Eigen::VectorXd k_, sum_sq_;
  long long count_ = 0;
  bool initialized_ = false;
};

}  // namespace ppocma
