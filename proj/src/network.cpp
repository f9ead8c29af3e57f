#include "tansens/network.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "tansens/error.hpp"

namespace tansens {

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) {
    throw ValidationError("network needs at least an input and an output layer");
  }
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    if (layer_sizes[i] == 0) {
      throw ValidationError("layer " + std::to_string(i) + " has zero width");
    }
  }
}

std::size_t NetworkSpec::hidden_neurons() const {
  if (layer_sizes.size() < 3) return 0;
  return std::accumulate(layer_sizes.begin() + 1, layer_sizes.end() - 1, std::size_t{0});
}

std::size_t NetworkSpec::weight_count() const {
  std::size_t n = 0;
  for (std::size_t i = 1; i < layer_sizes.size(); ++i) {
    n += layer_sizes[i - 1] * layer_sizes[i];
  }
  return n;
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = weight_count();
  if (use_bias) {
    for (std::size_t i = 1; i < layer_sizes.size(); ++i) n += layer_sizes[i];
  }
  return n;
}

std::size_t NetworkSpec::path_count() const {
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  std::size_t n = 1;
  for (std::size_t w : layer_sizes) {
    if (n > kMax / w) return kMax;
    n *= w;
  }
  return n;
}

std::string to_string(const NetworkSpec& spec) {
  std::ostringstream os;
  for (std::size_t i = 0; i < spec.layer_sizes.size(); ++i) {
    if (i) os << '-';
    os << spec.layer_sizes[i];
  }
  os << (spec.use_bias ? " (bias)" : " (biasless)");
  return os.str();
}

Params Params::zeros(const NetworkSpec& spec) {
  spec.validate();
  Params p;
  p.spec = spec;
  for (std::size_t i = 1; i < spec.layer_sizes.size(); ++i) {
    const auto rows = static_cast<Eigen::Index>(spec.layer_sizes[i - 1]);
    const auto cols = static_cast<Eigen::Index>(spec.layer_sizes[i]);
    p.weights.push_back(Matrix::Zero(rows, cols));
    p.biases.push_back(Vector::Zero(cols));
  }
  return p;
}

void Params::check_consistent() const {
  spec.validate();
  const std::size_t k = spec.depth();
  if (weights.size() != k || biases.size() != k) {
    throw ShapeError("expected " + std::to_string(k) + " weight/bias blocks, got " +
                     std::to_string(weights.size()) + "/" + std::to_string(biases.size()));
  }
  for (std::size_t i = 0; i < k; ++i) {
    const auto rows = static_cast<Eigen::Index>(spec.layer_sizes[i]);
    const auto cols = static_cast<Eigen::Index>(spec.layer_sizes[i + 1]);
    if (weights[i].rows() != rows || weights[i].cols() != cols) {
      throw ShapeError("layer " + std::to_string(i + 1) + " weight is " +
                       std::to_string(weights[i].rows()) + "x" + std::to_string(weights[i].cols()) +
                       ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (biases[i].size() != cols) {
      throw ShapeError("layer " + std::to_string(i + 1) + " bias has length " +
                       std::to_string(biases[i].size()));
    }
    if (!spec.use_bias && !biases[i].isZero(0.0)) {
      throw ShapeError("biasless network carries nonzero biases in layer " + std::to_string(i + 1));
    }
  }
}

std::vector<double> Params::layer_max_abs() const {
  std::vector<double> out;
  out.reserve(weights.size());
  for (const auto& w : weights) out.push_back(w.size() ? w.cwiseAbs().maxCoeff() : 0.0);
  return out;
}

double Params::max_abs_weight() const {
  const auto m = layer_max_abs();
  return m.empty() ? 0.0 : *std::max_element(m.begin(), m.end());
}

Vector Params::flatten() const {
  Vector theta(static_cast<Eigen::Index>(spec.parameter_count()));
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (Eigen::Index r = 0; r < weights[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[i].cols(); ++c) theta[at++] = weights[i](r, c);
    }
    if (spec.use_bias) {
      theta.segment(at, biases[i].size()) = biases[i];
      at += biases[i].size();
    }
  }
  return theta;
}

Params Params::unflatten(const NetworkSpec& spec, const Vector& theta) {
  Params p = zeros(spec);
  if (static_cast<std::size_t>(theta.size()) != spec.parameter_count()) {
    throw ShapeError("parameter vector has length " + std::to_string(theta.size()) +
                     ", expected " + std::to_string(spec.parameter_count()));
  }
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    for (Eigen::Index r = 0; r < p.weights[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < p.weights[i].cols(); ++c) p.weights[i](r, c) = theta[at++];
    }
    if (spec.use_bias) {
      p.biases[i] = theta.segment(at, p.biases[i].size());
      at += p.biases[i].size();
    }
  }
  return p;
}

bool Params::operator==(const Params& other) const {
  if (!(spec == other.spec) || weights.size() != other.weights.size() ||
      biases.size() != other.biases.size()) {
    return false;
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rows() != other.weights[i].rows() ||
        weights[i].cols() != other.weights[i].cols() || weights[i] != other.weights[i]) {
      return false;
    }
    if (biases[i].size() != other.biases[i].size() || biases[i] != other.biases[i]) return false;
  }
  return true;
}

std::vector<std::size_t> ActivationPattern::active_counts() const {
  std::vector<std::size_t> counts;
  counts.reserve(layer_widths.size());
  std::size_t at = 0;
  for (std::size_t w : layer_widths) {
    counts.push_back(static_cast<std::size_t>(
        std::count(signs.begin() + static_cast<std::ptrdiff_t>(at),
                   signs.begin() + static_cast<std::ptrdiff_t>(at + w), std::int8_t{1})));
    at += w;
  }
  return counts;
}

std::size_t ActivationPattern::active_total() const {
  return static_cast<std::size_t>(std::count(signs.begin(), signs.end(), std::int8_t{1}));
}

std::string ActivationPattern::bitstring() const {
  std::string s(signs.size(), '0');
  for (std::size_t i = 0; i < signs.size(); ++i) {
    if (signs[i] > 0) s[i] = '1';
  }
  return s;
}

ForwardTrace forward(const Params& params, const Vector& x) {
  const auto& spec = params.spec;
  if (static_cast<std::size_t>(x.size()) != spec.input_dim()) {
    throw ShapeError("input has length " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(spec.input_dim()));
  }
  ForwardTrace t;
  t.input = x;
  t.pattern.layer_widths.assign(spec.layer_sizes.begin() + 1, spec.layer_sizes.end() - 1);
  t.pattern.signs.reserve(spec.hidden_neurons());

  Vector a = x;
  const std::size_t k = params.depth();
  for (std::size_t i = 0; i + 1 < k; ++i) {
    Vector h = params.weights[i].transpose() * a + params.biases[i];
    Vector act = h.cwiseMax(0.0);
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      t.pattern.signs.push_back(h[j] > 0.0 ? std::int8_t{1} : std::int8_t{-1});
      if (h[j] == 0.0) t.on_boundary = true;
    }
    t.preactivations.push_back(std::move(h));
    a = act;
    t.activations.push_back(std::move(act));
  }
  t.output = params.weights[k - 1].transpose() * a + params.biases[k - 1];
  return t;
}

ActivationPattern activation_pattern(const ForwardTrace& trace) {
  ActivationPattern p;
  for (const auto& h : trace.preactivations) {
    p.layer_widths.push_back(static_cast<std::size_t>(h.size()));
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      p.signs.push_back(h[j] > 0.0 ? std::int8_t{1} : std::int8_t{-1});
    }
  }
  return p;
}

std::vector<Matrix> forward_jacobian(const Params& params, const ForwardTrace& trace) {
  const auto d_in = static_cast<Eigen::Index>(params.spec.input_dim());
  std::vector<Matrix> jac;
  jac.reserve(params.depth());
  jac.push_back(Matrix::Identity(d_in, d_in));
  for (std::size_t i = 0; i < trace.preactivations.size(); ++i) {
    Matrix next = params.weights[i].transpose() * jac.back();
    const Vector& h = trace.preactivations[i];
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      if (!(h[j] > 0.0)) next.row(j).setZero();
    }
    jac.push_back(std::move(next));
  }
  return jac;
}

std::vector<Matrix> batch_hidden_preactivations(const Params& params, const InputMatrix& X,
                                                Eigen::Index begin, Eigen::Index count) {
  if (static_cast<std::size_t>(X.cols()) != params.spec.input_dim()) {
    throw ShapeError("dataset has " + std::to_string(X.cols()) + " columns, network expects " +
                     std::to_string(params.spec.input_dim()));
  }
  if (begin < 0 || count < 0 || begin + count > X.rows()) throw ShapeError("row range out of bounds");
  std::vector<Matrix> out;
  Matrix a = X.middleRows(begin, count).cast<double>();
  for (std::size_t i = 0; i + 1 < params.depth(); ++i) {
    Matrix h = a * params.weights[i];
    h.rowwise() += params.biases[i].transpose();
    a = h.cwiseMax(0.0);
    out.push_back(std::move(h));
  }
  return out;
}

ForwardTrace trace_from_preactivations(const std::vector<Matrix>& preactivations,
                                       Eigen::Index row) {
  ForwardTrace t;
  for (const auto& h : preactivations) {
    Vector pre = h.row(row).transpose();
    t.pattern.layer_widths.push_back(static_cast<std::size_t>(pre.size()));
    for (Eigen::Index j = 0; j < pre.size(); ++j) {
      t.pattern.signs.push_back(pre[j] > 0.0 ? std::int8_t{1} : std::int8_t{-1});
      if (pre[j] == 0.0) t.on_boundary = true;
    }
    t.activations.push_back(pre.cwiseMax(0.0));
    t.preactivations.push_back(std::move(pre));
  }
  return t;
}

std::vector<Matrix> forward_jacobian(const Params& params, const Vector& x) {
  return forward_jacobian(params, forward(params, x));
}

}  // namespace tansens
