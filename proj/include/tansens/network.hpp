#pragma once

// Fully-connected ReLU networks.
//
// Conventions used throughout the library:
//  * Layer i (1-based in docs, 0-based in code) maps N_{i-1} nodes to N_i
//    nodes through W_i of shape N_{i-1} x N_i (row = source, column = target),
//    so a layer computes W_i^T a + b_i.
//  * Hidden neurons are indexed globally in layer-major order.
//  * A neuron with preactivation exactly 0 is inactive (ReLU'(0) = 0).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tansens {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dataset inputs, one sample per row. Stored in single precision; every
/// computation converts rows to double first.
using InputMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Vector sample_row(const InputMatrix& X, Eigen::Index i) {
  return X.row(i).transpose().cast<double>();
}

struct NetworkSpec {
  /// [d_in, N_1, ..., N_{k-1}, d_out]
  std::vector<std::size_t> layer_sizes;
  bool use_bias = true;

  /// Throws ValidationError unless there are >= 2 layers, all of width >= 1.
  void validate() const;

  std::size_t depth() const { return layer_sizes.size() - 1; }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t hidden_layers() const { return depth() - 1; }
  std::size_t hidden_width(std::size_t hidden_index) const {
    return layer_sizes[hidden_index + 1];
  }
  /// Total number of hidden (ReLU) neurons.
  std::size_t hidden_neurons() const;
  std::size_t weight_count() const;
  /// N_theta: weights plus biases when use_bias is set.
  std::size_t parameter_count() const;
  /// Number of input->output paths, d_in * N_1 * ... * d_out, saturating at
  /// SIZE_MAX.
  std::size_t path_count() const;

  bool operator==(const NetworkSpec&) const = default;
};

std::string to_string(const NetworkSpec& spec);

struct Params {
  NetworkSpec spec;
  std::vector<Matrix> weights;  // weights[i]: N_i x N_{i+1}
  std::vector<Vector> biases;   // biases[i]: N_{i+1}; zero when !use_bias

  static Params zeros(const NetworkSpec& spec);

  std::size_t depth() const { return weights.size(); }

  /// Throws ShapeError when weights/biases disagree with spec, or when a
  /// biasless network carries nonzero biases.
  void check_consistent() const;

  /// Largest absolute weight of each layer (w_max_i).
  std::vector<double> layer_max_abs() const;
  double max_abs_weight() const;

  /// Flattened parameter vector: per layer, row-major weights then biases.
  Vector flatten() const;
  static Params unflatten(const NetworkSpec& spec, const Vector& theta);

  bool operator==(const Params& other) const;
};

/// Signs of all hidden preactivations, layer-major.
struct ActivationPattern {
  std::vector<std::int8_t> signs;
  std::vector<std::size_t> layer_widths;

  std::size_t size() const { return signs.size(); }
  /// n_i(x) for each hidden layer.
  std::vector<std::size_t> active_counts() const;
  /// T(x), the number of active hidden neurons.
  std::size_t active_total() const;
  /// '1' for active, '0' for inactive neurons.
  std::string bitstring() const;

  bool operator==(const ActivationPattern&) const = default;
};

struct ForwardTrace {
  Vector input;
  std::vector<Vector> preactivations;  // one per hidden layer
  std::vector<Vector> activations;     // ReLU of preactivations
  Vector output;
  ActivationPattern pattern;
  /// True when some hidden preactivation is exactly zero.
  bool on_boundary = false;
};

/// Evaluates the network at x and records every intermediate quantity.
ForwardTrace forward(const Params& params, const Vector& x);

/// Recomputes the sign pattern from the recorded preactivations.
ActivationPattern activation_pattern(const ForwardTrace& trace);

/// J[0] = I (d_in x d_in), J[i] = D_i W_i^T J[i-1] for i = 1..k-1, i.e. the
/// Jacobian of the hidden activations of layer i w.r.t. x under the frozen
/// activation pattern at x.
std::vector<Matrix> forward_jacobian(const Params& params, const Vector& x);

/// Same, from an existing trace.
std::vector<Matrix> forward_jacobian(const Params& params, const ForwardTrace& trace);

/// Hidden preactivations of rows [begin, begin + count) of X, one matrix per
/// hidden layer with one row per sample.
std::vector<Matrix> batch_hidden_preactivations(const Params& params, const InputMatrix& X,
                                                Eigen::Index begin, Eigen::Index count);

/// Builds the trace of sample `row` out of batch preactivations, leaving the
/// output empty. Used where only the gates matter.
ForwardTrace trace_from_preactivations(const std::vector<Matrix>& preactivations,
                                       Eigen::Index row);

}  // namespace tansens
