#include "ppocma/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "detail/io.hpp"

namespace ppocma::nn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using WeightMap = Eigen::Map<const RowMajor>;
using BiasMap = Eigen::Map<const Eigen::VectorXd>;

// offset of layer l's weight block in the flat parameter vector
std::int64_t layer_offset(const std::vector<int>& sizes, int layer) {
  std::int64_t off = 0;
  for (int l = 0; l < layer; ++l)
    off += static_cast<std::int64_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  return off;
}

}  // namespace

std::vector<int> NetworkLayout::layer_sizes() const {
  std::vector<int> sizes;
  sizes.reserve(hidden_widths.size() + 2);
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden_widths.begin(), hidden_widths.end());
  sizes.push_back(output_dim);
  return sizes;
}

std::int64_t NetworkLayout::parameter_count() const {
  const auto sizes = layer_sizes();
  std::int64_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    n += static_cast<std::int64_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  return n;
}

void NetworkLayout::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw std::invalid_argument("NetworkLayout: input and output dims must be >= 1");
  for (int w : hidden_widths)
    if (w < 1) throw std::invalid_argument("NetworkLayout: hidden widths must be >= 1");
}

Network init(const NetworkLayout& layout, std::uint64_t seed) {
  layout.validate();
  Network net{layout, Eigen::VectorXd::Zero(layout.parameter_count())};
  RandomStream rng(seed);
  const auto sizes = layout.layer_sizes();
  std::int64_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l], fan_out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::int64_t i = 0; i < std::int64_t(fan_out) * fan_in; ++i)
      net.parameters[off + i] = rng.uniform(-limit, limit);
    off += std::int64_t(fan_out) * fan_in + fan_out;  // biases stay zero
  }
  return net;
}

Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& inputs,
                        ForwardTrace* trace) {
  if (inputs.rows() != net.layout.input_dim)
    throw std::invalid_argument("forward: input width does not match layout");
  const auto sizes = net.layout.layer_sizes();
  const int layers = net.layout.layer_count();
  if (trace) {
    trace->layer_inputs.assign(layers, {});
    trace->preactivations.assign(layers - 1, {});
  }

  Eigen::MatrixXd x = inputs;
  for (int l = 0; l < layers; ++l) {
    const std::int64_t off = layer_offset(sizes, l);
    WeightMap w(net.parameters.data() + off, sizes[l + 1], sizes[l]);
    BiasMap b(net.parameters.data() + off + std::int64_t(sizes[l + 1]) * sizes[l],
              sizes[l + 1]);
    if (trace) trace->layer_inputs[l] = x;
    Eigen::MatrixXd z = (w * x).colwise() + b;
    if (l + 1 < layers) {
      if (trace) trace->preactivations[l] = z;
      x = z.array().max(0.0) + kLeakySlope * z.array().min(0.0);
    } else {
      x = std::move(z);
    }
  }
  return x;
}

Eigen::VectorXd backward(const Network& net, const ForwardTrace& trace,
                         const Eigen::MatrixXd& output_grad) {
  const auto sizes = net.layout.layer_sizes();
  const int layers = net.layout.layer_count();
  if (output_grad.rows() != net.layout.output_dim ||
      output_grad.cols() != trace.layer_inputs.front().cols())
    throw std::invalid_argument("backward: output_grad shape mismatch");

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.parameters.size());
  Eigen::MatrixXd delta = output_grad;
  for (int l = layers - 1; l >= 0; --l) {
    const std::int64_t off = layer_offset(sizes, l);
    const std::int64_t wcount = std::int64_t(sizes[l + 1]) * sizes[l];
    WeightMap w(net.parameters.data() + off, sizes[l + 1], sizes[l]);

    Eigen::Map<RowMajor> gw(grad.data() + off, sizes[l + 1], sizes[l]);
    gw = delta * trace.layer_inputs[l].transpose();
    grad.segment(off + wcount, sizes[l + 1]) = delta.rowwise().sum();

    if (l > 0) {
      Eigen::MatrixXd back = w.transpose() * delta;
      const auto& z = trace.preactivations[l - 1];
      delta = back.array() * z.array().unaryExpr([](double v) {
        return v > 0.0 ? 1.0 : kLeakySlope;
      });
    }
  }
  return grad;
}

Eigen::VectorXd backward(const Network& net, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& output_grad) {
  ForwardTrace trace;
  forward(net, inputs, &trace);
  return backward(net, trace, output_grad);
}

void adam_step(Network& net, const Eigen::VectorXd& grads, AdamState& state) {
  if (grads.size() != net.parameters.size())
    throw std::invalid_argument("adam_step: gradient length mismatch");
  if (!grads.allFinite())
    throw std::invalid_argument("adam_step: non-finite gradient entries");
  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment.array().matrix() +
                        (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step_count));
  net.parameters.array() -=
      state.learning_rate * (state.first_moment.array() / bc1) /
      ((state.second_moment.array() / bc2).sqrt() + state.epsilon);
}

namespace {
constexpr char kMagic[8] = {'P', 'C', 'N', 'E', 'T', '0', '0', '1'};
}

void append_network(std::string& out, const Network& net) {
  out.append(kMagic, 8);
  detail::append_u32(out, 1);  // format version
  detail::append_u32(out, static_cast<std::uint32_t>(net.layout.input_dim));
  detail::append_u32(out, static_cast<std::uint32_t>(net.layout.hidden_widths.size()));
  for (int w : net.layout.hidden_widths)
    detail::append_u32(out, static_cast<std::uint32_t>(w));
  detail::append_u32(out, static_cast<std::uint32_t>(net.layout.output_dim));
  detail::append_u32(out, 0);  // activation tag: 0 = leaky-relu hidden, linear out
  detail::append_u64(out, static_cast<std::uint64_t>(net.parameters.size()));
  detail::append_doubles(out, net.parameters);
}

Network read_network(const std::string& buf, std::size_t& off) {
  if (buf.size() < off + 8 || std::memcmp(buf.data() + off, kMagic, 8) != 0)
    throw std::runtime_error("network checkpoint: bad magic");
  off += 8;
  if (detail::read_u32(buf, off) != 1)
    throw std::runtime_error("network checkpoint: unsupported version");
  NetworkLayout layout;
  layout.input_dim = static_cast<int>(detail::read_u32(buf, off));
  const std::uint32_t n_hidden = detail::read_u32(buf, off);
  layout.hidden_widths.resize(n_hidden);
  for (std::uint32_t i = 0; i < n_hidden; ++i)
    layout.hidden_widths[i] = static_cast<int>(detail::read_u32(buf, off));
  layout.output_dim = static_cast<int>(detail::read_u32(buf, off));
  if (detail::read_u32(buf, off) != 0)
    throw std::runtime_error("network checkpoint: unknown activation tag");
  const std::uint64_t count = detail::read_u64(buf, off);
  if (count != static_cast<std::uint64_t>(layout.parameter_count()))
    throw std::runtime_error("network checkpoint: parameter count does not match layout");
  Network net{layout, Eigen::VectorXd(count)};
  detail::read_doubles(buf, off, net.parameters);
  return net;
}

void save_network(const Network& net, const std::string& path) {
  std::string buf;
  append_network(buf, net);
  detail::atomic_write(path, buf);
}

Network load_network(const std::string& path) {
  const std::string buf = detail::read_file(path);
  std::size_t off = 0;
  return read_network(buf, off);
}

}  // namespace ppocma::nn
