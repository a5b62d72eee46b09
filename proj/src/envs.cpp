#include "ppocma/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace ppocma {

namespace {
ActionBounds unit_box(int dim) {
  return {Eigen::VectorXd::Constant(dim, -1.0), Eigen::VectorXd::Constant(dim, 1.0)};
}
}  // namespace

QuadraticEnv::QuadraticEnv() : bounds_(unit_box(2)) {}

Eigen::VectorXd QuadraticEnv::reset(RandomStream&) {
  live_ = true;
  return Eigen::VectorXd::Zero(1);
}

Env::Step QuadraticEnv::step(const Eigen::VectorXd& action) {
  if (!live_) throw std::logic_error("QuadraticEnv: step without reset or after end");
  if (action.size() != 2 || !action.allFinite())
    throw std::invalid_argument("QuadraticEnv: bad action");
  live_ = false;
  // raw action on purpose: the Gaussian density in the losses must match
  // the action the reward was evaluated at
  return {Eigen::VectorXd::Zero(1), -action.squaredNorm(), EndKind::terminal};
}

PointMassEnv::PointMassEnv() : bounds_(unit_box(2)) {}

Eigen::VectorXd PointMassEnv::observation() const {
  Eigen::VectorXd obs(6);
  obs << position_, velocity_, target_;
  return obs;
}

Eigen::VectorXd PointMassEnv::reset(RandomStream& rng) {
  position_.setZero();
  velocity_.setZero();
  target_ << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
  t_ = 0;
  live_ = true;
  return observation();
}

Env::Step PointMassEnv::step(const Eigen::VectorXd& action) {
  if (!live_) throw std::logic_error("PointMassEnv: step without reset or after end");
  if (action.size() != 2 || !action.allFinite())
    throw std::invalid_argument("PointMassEnv: bad action");
  const Eigen::Vector2d a =
      action.cwiseMax(bounds_.a_min).cwiseMin(bounds_.a_max).head<2>();
  velocity_ = (1.0 - kDamping) * velocity_ + kDt * a;
  position_ += kDt * velocity_;
  const double reward = -(position_ - target_).squaredNorm();
  t_ += 1;
  const EndKind end = t_ >= kEpisodeCap ? EndKind::timeout : EndKind::none;
  if (end != EndKind::none) live_ = false;
  return {observation(), reward, end};
}

ActionRepeatEnv::ActionRepeatEnv(std::unique_ptr<Env> inner, int factor)
    : inner_(std::move(inner)), factor_(factor) {
  if (factor < 1) throw std::invalid_argument("ActionRepeatEnv: factor must be >= 1");
}

int ActionRepeatEnv::episode_cap() const {
  return (inner_->episode_cap() + factor_ - 1) / factor_;
}

Env::Step ActionRepeatEnv::step(const Eigen::VectorXd& action) {
  Step out = inner_->step(action);
  for (int i = 1; i < factor_ && out.end == EndKind::none; ++i) {
    Step next = inner_->step(action);
    next.reward += out.reward;
    out = std::move(next);
  }
  return out;
}

std::unique_ptr<Env> make_env(const std::string& name, int action_repeat) {
  std::unique_ptr<Env> env;
  if (name == "quadratic") env = std::make_unique<QuadraticEnv>();
  else if (name == "pointmass") env = std::make_unique<PointMassEnv>();
  else throw std::invalid_argument("unknown environment: " + name);
  if (action_repeat > 1)
    env = std::make_unique<ActionRepeatEnv>(std::move(env), action_repeat);
  return env;
}

ObsNormalizer::ObsNormalizer(int dim, double kappa)
    : kappa_(kappa), k_(Eigen::VectorXd::Ones(dim)), sum_sq_(Eigen::VectorXd::Zero(dim)) {
  if (dim < 1) throw std::invalid_argument("ObsNormalizer: dim must be >= 1");
}

void ObsNormalizer::update(const Eigen::MatrixXd& raw_observations) {
  if (raw_observations.cols() == 0)
    throw std::invalid_argument("ObsNormalizer: empty batch");
  if (raw_observations.rows() != k_.size())
    throw std::invalid_argument("ObsNormalizer: dimension mismatch");
  sum_sq_ += raw_observations.array().square().rowwise().sum().matrix();
  count_ += raw_observations.cols();
  const Eigen::ArrayXd rms = (sum_sq_.array() / double(count_)).sqrt();
  const Eigen::VectorXd candidate = (1.0 / (rms + kappa_)).matrix();
  k_ = initialized_ ? k_.cwiseMin(candidate) : candidate;
  initialized_ = true;
}

Eigen::VectorXd ObsNormalizer::apply(const Eigen::VectorXd& raw) const {
  if (!initialized_) throw std::logic_error("ObsNormalizer: not initialized");
  return k_.cwiseProduct(raw);
}

const Eigen::VectorXd& ObsNormalizer::scale() const {
  if (!initialized_) throw std::logic_error("ObsNormalizer: not initialized");
  return k_;
}

}  // namespace ppocma
