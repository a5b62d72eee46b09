#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ppocma/rng.hpp"

namespace ppocma::nn {

/// Negative slope of the hidden leaky-ReLU units. Fixed (not configurable)
/// so that numerical expectations in tests stay bit-stable.
inline constexpr double kLeakySlope = 0.01;

enum class Activation { leaky_relu };

/// Shape of a dense feed-forward network: hidden layers use leaky-ReLU,
/// the output layer is linear.
struct NetworkLayout {
  int input_dim = 1;
  std::vector<int> hidden_widths;
  int output_dim = 1;
  Activation hidden_activation = Activation::leaky_relu;

  /// Consecutive layer widths: input, hidden..., output.
  std::vector<int> layer_sizes() const;
  /// Number of affine layers.
  int layer_count() const { return static_cast<int>(hidden_widths.size()) + 1; }
  std::int64_t parameter_count() const;
  /// Throws std::invalid_argument when any dimension is < 1.
  void validate() const;

  bool operator==(const NetworkLayout& o) const {
    return input_dim == o.input_dim && hidden_widths == o.hidden_widths &&
           output_dim == o.output_dim && hidden_activation == o.hidden_activation;
  }
};

/// Network = layout + flat parameter vector. Per layer the storage order is
/// weights (row-major, output x input) followed by biases.
struct Network {
  NetworkLayout layout;
  Eigen::VectorXd parameters;
};

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 3e-4;

  AdamState() = default;
  explicit AdamState(std::int64_t n_params, double lr = 3e-4)
      : first_moment(Eigen::VectorXd::Zero(n_params)),
        second_moment(Eigen::VectorXd::Zero(n_params)),
        learning_rate(lr) {}
};

/// Per-layer inputs and pre-activations kept from a forward pass so the
/// backward pass does not have to recompute them.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> layer_inputs;    // input actually fed to layer l
  std::vector<Eigen::MatrixXd> preactivations;  // affine output of each hidden layer
};

/// Seeded initialization: weights uniform in +-sqrt(6 / (fan_in + fan_out)),
/// biases zero. Identical (layout, seed) gives bit-identical parameters.
Network init(const NetworkLayout& layout, std::uint64_t seed);

/// Batched forward pass; columns of `inputs` are samples.
Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& inputs,
                        ForwardTrace* trace = nullptr);

/// Parameter gradient of any scalar loss L with dL/doutputs = output_grad,
/// summed over the batch columns. The caller owns the loss normalization:
/// scale output_grad by 1/M for a mean-reduced loss.
Eigen::VectorXd backward(const Network& net, const ForwardTrace& trace,
                         const Eigen::MatrixXd& output_grad);
Eigen::VectorXd backward(const Network& net, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& output_grad);

/// Standard bias-corrected Adam update, in place.
/// Throws std::invalid_argument on non-finite gradient entries.
void adam_step(Network& net, const Eigen::VectorXd& grads, AdamState& state);

/// Checkpoint container: fixed header (format version, layout dims,
/// activation tag) followed by the raw parameter vector. Round-trips are
/// bit-exact. Writes go to a temp file renamed into place.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

// serialize into / parse from an open byte buffer; used by the policy and
// critic containers which embed network blocks
void append_network(std::string& out, const Network& net);
Network read_network(const std::string& buf, std::size_t& offset);

}  // namespace ppocma::nn
