#include "ppocma/policy.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "detail/io.hpp"

namespace ppocma {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

// clamped so clipped outputs stay strictly inside their open intervals even
// when |x| is large enough that 1/(1+exp(-x)) rounds to 0 or 1
constexpr double kSigClamp = 1e-15;

double sigmoid(double x) {
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
  return std::min(std::max(s, kSigClamp), 1.0 - kSigClamp);
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

void ActionBounds::validate() const {
  if (a_min.size() != a_max.size() || a_min.size() == 0)
    throw std::invalid_argument("ActionBounds: dimension mismatch");
  if (!a_min.allFinite() || !a_max.allFinite())
    throw std::invalid_argument("ActionBounds: bounds must be finite");
  if (((a_max - a_min).array() <= 0.0).any())
    throw std::invalid_argument("ActionBounds: a_min < a_max must hold elementwise");
}

VarianceLimits VarianceLimits::from_bounds(const ActionBounds& bounds, double sigma_min) {
  VarianceLimits v;
  v.v_max = 2.0 * (bounds.a_max - bounds.a_min).array().log();
  v.v_min = Eigen::VectorXd::Constant(bounds.a_min.size(), 2.0 * std::log(sigma_min));
  if (((v.v_max - v.v_min).array() <= 0.0).any())
    throw std::invalid_argument("VarianceLimits: v_min < v_max must hold elementwise");
  return v;
}

GaussianPolicy::GaussianPolicy(int obs_dim, const ActionBounds& bounds,
                               const std::vector<int>& hidden_widths, PolicyArch arch,
                               std::uint64_t seed)
    : obs_dim_(obs_dim), arch_(arch), bounds_(bounds),
      vlimits_(VarianceLimits::from_bounds(bounds)) {
  bounds_.validate();
  const int d = action_dim();
  nn::NetworkLayout layout{obs_dim, hidden_widths,
                           arch == PolicyArch::combined_net ? 2 * d : d};
  mean_net_ = nn::init(layout, seed);
  if (arch == PolicyArch::separate_nets)
    var_net_ = nn::init(layout, seed + 0x9E3779B97F4A7C15ull);
}

PolicyEval GaussianPolicy::evaluate(const Eigen::MatrixXd& states, bool with_trace) const {
  if (states.rows() != obs_dim_)
    throw std::invalid_argument("policy: state width does not match networks");
  const int d = action_dim();
  PolicyEval ev;
  Eigen::MatrixXd mu_raw, v_raw;
  if (arch_ == PolicyArch::combined_net) {
    Eigen::MatrixXd out = nn::forward(mean_net_, states, with_trace ? &ev.mean_trace : nullptr);
    mu_raw = out.topRows(d);
    v_raw = out.bottomRows(d);
  } else {
    mu_raw = nn::forward(mean_net_, states, with_trace ? &ev.mean_trace : nullptr);
    v_raw = nn::forward(var_net_, states, with_trace ? &ev.var_trace : nullptr);
  }
  ev.sig_mu = sigmoid(mu_raw);
  ev.sig_v = sigmoid(v_raw);
  const auto width = bounds_.width();
  ev.mu = (ev.sig_mu.array().colwise() * width.array()).colwise() + bounds_.a_min.array();
  Eigen::MatrixXd v_clip =
      (ev.sig_v.array().colwise() * (vlimits_.v_max - vlimits_.v_min).array()).colwise() +
      vlimits_.v_min.array();
  ev.var = v_clip.array().exp();
  return ev;
}

void GaussianPolicy::mean_and_var(const Eigen::MatrixXd& states, Eigen::MatrixXd& mu,
                                  Eigen::MatrixXd& var) const {
  PolicyEval ev = evaluate(states, false);
  mu = std::move(ev.mu);
  var = std::move(ev.var);
}

Eigen::VectorXd GaussianPolicy::sample_action(const Eigen::VectorXd& state,
                                              RandomStream& rng) const {
  PolicyEval ev = evaluate(state, false);
  Eigen::VectorXd a(action_dim());
  for (int j = 0; j < action_dim(); ++j)
    a[j] = ev.mu(j, 0) + std::sqrt(ev.var(j, 0)) * rng.normal();
  return a;
}

Eigen::VectorXd GaussianPolicy::log_prob(const Eigen::MatrixXd& states,
                                         const Eigen::MatrixXd& actions) const {
  PolicyEval ev = evaluate(states, false);
  const Eigen::ArrayXXd r2 = (actions - ev.mu).array().square();
  const Eigen::ArrayXXd logc = ev.var.array().log();
  return (-0.5 * (r2 / ev.var.array() + logc + kLog2Pi)).colwise().sum();
}

double GaussianPolicy::log_prob(const Eigen::VectorXd& state,
                                const Eigen::VectorXd& action) const {
  return log_prob(Eigen::MatrixXd(state), Eigen::MatrixXd(action))[0];
}

Eigen::VectorXd GaussianPolicy::backprop(const PolicyEval& eval,
                                         const Eigen::MatrixXd& grad_mu,
                                         const Eigen::MatrixXd& grad_var,
                                         LossPhase phase) const {
  const auto width = bounds_.width();
  const auto vspan = (vlimits_.v_max - vlimits_.v_min).eval();
  const auto raw_mu_grad = [&] {
    return ((grad_mu.array() * eval.sig_mu.array() * (1.0 - eval.sig_mu.array()))
                .colwise() * width.array())
        .matrix()
        .eval();
  };
  // dc/dv_raw = c * (v_max - v_min) * s (1 - s)
  const auto raw_v_grad = [&] {
    return ((grad_var.array() * eval.var.array() * eval.sig_v.array() *
             (1.0 - eval.sig_v.array()))
                .colwise() * vspan.array())
        .matrix()
        .eval();
  };

  if (arch_ == PolicyArch::combined_net) {
    if (phase != LossPhase::both)
      throw std::logic_error("combined-net policy trains with LossPhase::both");
    Eigen::MatrixXd g(2 * action_dim(), eval.mu.cols());
    g.topRows(action_dim()) = raw_mu_grad();
    g.bottomRows(action_dim()) = raw_v_grad();
    return nn::backward(mean_net_, eval.mean_trace, g);
  }
  switch (phase) {
    case LossPhase::mean:
      return nn::backward(mean_net_, eval.mean_trace, raw_mu_grad());
    case LossPhase::var:
      return nn::backward(var_net_, eval.var_trace, raw_v_grad());
    case LossPhase::both:
      throw std::logic_error("LossPhase::both requires the combined architecture");
  }
  throw std::logic_error("unreachable");
}

nn::Network& GaussianPolicy::network(LossPhase phase) {
  if (arch_ == PolicyArch::combined_net || phase != LossPhase::var) return mean_net_;
  return var_net_;
}

const nn::Network& GaussianPolicy::network(LossPhase phase) const {
  if (arch_ == PolicyArch::combined_net || phase != LossPhase::var) return mean_net_;
  return var_net_;
}

LossResult gaussian_loss(const GaussianPolicy& policy, const Eigen::MatrixXd& states,
                         const Eigen::MatrixXd& actions, const Eigen::VectorXd& weights,
                         LossPhase phase) {
  const Eigen::Index m = states.cols();
  if (m == 0) throw std::invalid_argument("gaussian_loss: empty batch");
  if (actions.cols() != m || weights.size() != m)
    throw std::invalid_argument("gaussian_loss: batch length mismatch");
  if (!weights.allFinite())
    throw std::invalid_argument("gaussian_loss: non-finite weights");

  PolicyEval ev = policy.evaluate(states, true);
  const Eigen::ArrayXXd resid = (actions - ev.mu).array();
  const Eigen::ArrayXXd c = ev.var.array();
  const Eigen::ArrayXXd logc = c.log();
  const Eigen::Array<double, 1, Eigen::Dynamic> w = weights.transpose().array();

  const Eigen::Array<double, 1, Eigen::Dynamic> per_sample =
      (resid.square() / c + 0.5 * logc).colwise().sum();
  LossResult out;
  out.loss = (w * per_sample).sum() / double(m);

  const double inv_m = 1.0 / double(m);
  if (phase == LossPhase::mean || phase == LossPhase::both) {
    Eigen::MatrixXd grad_mu =
        ((-2.0 * resid / c).rowwise() * w * inv_m).matrix();
    if (phase == LossPhase::mean) {
      out.grad = policy.backprop(ev, grad_mu, Eigen::MatrixXd(), LossPhase::mean);
      return out;
    }
    Eigen::MatrixXd grad_c =
        (((-resid.square() / c.square()) + 0.5 / c).rowwise() * w * inv_m).matrix();
    out.grad = policy.backprop(ev, grad_mu, grad_c, LossPhase::both);
    return out;
  }
  Eigen::MatrixXd grad_c =
      (((-resid.square() / c.square()) + 0.5 / c).rowwise() * w * inv_m).matrix();
  out.grad = policy.backprop(ev, Eigen::MatrixXd(), grad_c, LossPhase::var);
  return out;
}

void pretrain(GaussianPolicy& policy, RandomStream& rng, const PretrainOptions& opts) {
  const int d = policy.action_dim();
  const int b = opts.batch_size;
  const Eigen::VectorXd mu_target = policy.bounds().midpoint();
  const Eigen::VectorXd v_target = 2.0 * (0.5 * policy.bounds().width()).array().log();

  nn::AdamState adam_mean(policy.network(LossPhase::mean).parameters.size(),
                          opts.learning_rate);
  nn::AdamState adam_var(policy.network(LossPhase::var).parameters.size(),
                         opts.learning_rate);
  const double scale = 1.0 / double(b * d);

  Eigen::MatrixXd states(policy.obs_dim(), b);
  for (int step = 0; step < opts.steps; ++step) {
    for (Eigen::Index col = 0; col < states.cols(); ++col)
      for (Eigen::Index row = 0; row < states.rows(); ++row)
        states(row, col) = rng.normal();

    PolicyEval ev = policy.evaluate(states, true);
    const Eigen::ArrayXXd mu_err = ev.mu.array().colwise() - mu_target.array();
    Eigen::MatrixXd v_clip = ev.var.array().log();
    const Eigen::ArrayXXd v_err = v_clip.array().colwise() - v_target.array();

    const Eigen::MatrixXd grad_mu = (2.0 * scale * mu_err).matrix();
    // v = log c, so dL/dc = dL/dv / c
    const Eigen::MatrixXd grad_c = (2.0 * scale * v_err / ev.var.array()).matrix();

    if (policy.arch() == PolicyArch::combined_net) {
      Eigen::VectorXd g = policy.backprop(ev, grad_mu, grad_c, LossPhase::both);
      nn::adam_step(policy.network(LossPhase::both), g, adam_mean);
    } else {
      Eigen::VectorXd gm = policy.backprop(ev, grad_mu, Eigen::MatrixXd(), LossPhase::mean);
      Eigen::VectorXd gv = policy.backprop(ev, Eigen::MatrixXd(), grad_c, LossPhase::var);
      nn::adam_step(policy.network(LossPhase::mean), gm, adam_mean);
      nn::adam_step(policy.network(LossPhase::var), gv, adam_var);
    }
  }
}

namespace {
constexpr char kPolicyMagic[8] = {'P', 'C', 'P', 'O', 'L', '0', '0', '1'};
}

void save_policy(const GaussianPolicy& policy, const std::string& path) {
  std::string buf;
  buf.append(kPolicyMagic, 8);
  detail::append_u32(buf, 1);
  detail::append_u32(buf, policy.arch() == PolicyArch::combined_net ? 1u : 0u);
  detail::append_u32(buf, static_cast<std::uint32_t>(policy.obs_dim()));
  detail::append_u32(buf, static_cast<std::uint32_t>(policy.action_dim()));
  detail::append_doubles(buf, policy.bounds().a_min);
  detail::append_doubles(buf, policy.bounds().a_max);
  detail::append_doubles(buf, policy.variance_limits().v_min);
  detail::append_doubles(buf, policy.variance_limits().v_max);
  nn::append_network(buf, policy.network(LossPhase::mean));
  if (policy.arch() == PolicyArch::separate_nets)
    nn::append_network(buf, policy.network(LossPhase::var));
  detail::atomic_write(path, buf);
}

GaussianPolicy load_policy(const std::string& path) {
  const std::string buf = detail::read_file(path);
  std::size_t off = 0;
  if (buf.size() < 8 || std::memcmp(buf.data(), kPolicyMagic, 8) != 0)
    throw std::runtime_error("policy checkpoint: bad magic");
  off += 8;
  if (detail::read_u32(buf, off) != 1)
    throw std::runtime_error("policy checkpoint: unsupported version");
  const PolicyArch arch =
      detail::read_u32(buf, off) == 1 ? PolicyArch::combined_net : PolicyArch::separate_nets;
  const int obs_dim = static_cast<int>(detail::read_u32(buf, off));
  const int act_dim = static_cast<int>(detail::read_u32(buf, off));
  ActionBounds bounds{Eigen::VectorXd(act_dim), Eigen::VectorXd(act_dim)};
  detail::read_doubles(buf, off, bounds.a_min);
  detail::read_doubles(buf, off, bounds.a_max);
  VarianceLimits vl{Eigen::VectorXd(act_dim), Eigen::VectorXd(act_dim)};
  detail::read_doubles(buf, off, vl.v_min);
  detail::read_doubles(buf, off, vl.v_max);

  nn::Network mean = nn::read_network(buf, off);
  GaussianPolicy policy(obs_dim, bounds, mean.layout.hidden_widths, arch, 0);
  if (!(policy.variance_limits().v_min.isApprox(vl.v_min) &&
        policy.variance_limits().v_max.isApprox(vl.v_max)))
    throw std::runtime_error("policy checkpoint: variance limits do not match bounds");
  if (!(policy.network(LossPhase::mean).layout == mean.layout))
    throw std::runtime_error("policy checkpoint: unexpected network layout");
  policy.network(LossPhase::mean).parameters = mean.parameters;
  if (arch == PolicyArch::separate_nets) {
    nn::Network var = nn::read_network(buf, off);
    if (!(policy.network(LossPhase::var).layout == var.layout))
      throw std::runtime_error("policy checkpoint: unexpected network layout");
    policy.network(LossPhase::var).parameters = var.parameters;
  }
  return policy;
}

}  // namespace ppocma
