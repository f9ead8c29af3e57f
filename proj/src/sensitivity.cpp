#include "tansens/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "tansens/binary_io.hpp"
#include "tansens/parallel.hpp"

namespace tansens {
namespace {

std::size_t layer_row_count(const NetworkSpec& spec, std::size_t layer0, bool with_bias) {
  const std::size_t n = spec.layer_sizes[layer0] * spec.layer_sizes[layer0 + 1];
  return with_bias ? n + spec.layer_sizes[layer0 + 1] : n;
}

std::vector<std::size_t> layer_row_offsets(const NetworkSpec& spec, bool with_bias) {
  std::vector<std::size_t> off(spec.depth() + 1, 0);
  for (std::size_t q = 0; q < spec.depth(); ++q) {
    off[q + 1] = off[q] + layer_row_count(spec, q, with_bias);
  }
  return off;
}

inline bool gate_open(const ForwardTrace& t, std::size_t hidden, Eigen::Index j) {
  return t.preactivations[hidden][j] > 0.0;
}

// B[q]: N_{q+1} x d_out, gated path products from target node v of layer q+1
// (after its gate) to every output node.
std::vector<Matrix> backward_products(const Params& p, const ForwardTrace& t) {
  const std::size_t k = p.depth();
  std::vector<Matrix> back(k);
  const auto d_out = static_cast<Eigen::Index>(p.spec.output_dim());
  back[k - 1] = Matrix::Identity(d_out, d_out);
  for (std::size_t q = k - 1; q-- > 0;) {
    back[q] = p.weights[q + 1] * back[q + 1];
    for (Eigen::Index j = 0; j < back[q].rows(); ++j) {
      if (!gate_open(t, q, j)) back[q].row(j).setZero();
    }
  }
  return back;
}

std::vector<Vector> backward_sums(const Params& p, const ForwardTrace& t) {
  const std::size_t k = p.depth();
  std::vector<Vector> back(k);
  back[k - 1] = Vector::Ones(static_cast<Eigen::Index>(p.spec.output_dim()));
  for (std::size_t q = k - 1; q-- > 0;) {
    back[q] = p.weights[q + 1] * back[q + 1];
    for (Eigen::Index j = 0; j < back[q].size(); ++j) {
      if (!gate_open(t, q, j)) back[q][j] = 0.0;
    }
  }
  return back;
}

SensitivityMatrix empty_matrix(const Params& params, bool with_bias, bool boundary) {
  SensitivityMatrix s;
  s.spec = params.spec;
  s.includes_bias_rows = with_bias;
  s.boundary_point = boundary;
  const auto rows = layer_row_offsets(params.spec, with_bias).back();
  s.entries = Matrix::Zero(static_cast<Eigen::Index>(rows),
                           static_cast<Eigen::Index>(params.spec.input_dim()));
  return s;
}

// Writes entries(row(q,u,v), :) = J[q](u, :) * back(v) for every layer.
void fill_outer_blocks(SensitivityMatrix& s, const std::vector<Matrix>& jac,
                       const std::vector<Vector>& back) {
  const auto off = layer_row_offsets(s.spec, s.includes_bias_rows);
  for (std::size_t q = 0; q < jac.size(); ++q) {
    const Matrix& J = jac[q];
    const Vector& b = back[q];
    const auto width = b.size();
    for (Eigen::Index u = 0; u < J.rows(); ++u) {
      for (Eigen::Index v = 0; v < width; ++v) {
        if (b[v] == 0.0) continue;
        const auto row = static_cast<Eigen::Index>(off[q]) + u * width + v;
        s.entries.row(row) = b[v] * J.row(u);
      }
    }
  }
}

void check_input(const Params& params, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != params.spec.input_dim()) {
    throw ShapeError("input has length " + std::to_string(x.size()) + ", network expects " +
                     std::to_string(params.spec.input_dim()));
  }
}

}  // namespace

std::string ParamIndex::label() const {
  std::ostringstream os;
  os << layer << '/';
  if (bias) {
    os << 'b';
  } else {
    os << source;
  }
  os << '/' << target;
  return os.str();
}

ParamIndex SensitivityMatrix::row_label(std::size_t row) const {
  const auto off = layer_row_offsets(spec, includes_bias_rows);
  for (std::size_t q = 0; q < spec.depth(); ++q) {
    if (row < off[q + 1]) {
      const std::size_t local = row - off[q];
      const std::size_t width = spec.layer_sizes[q + 1];
      const std::size_t n_weights = spec.layer_sizes[q] * width;
      if (local >= n_weights) return {q + 1, 0, local - n_weights, true};
      return {q + 1, local / width, local % width, false};
    }
  }
  throw ShapeError("row " + std::to_string(row) + " out of range");
}

std::size_t sensitivity_row(const NetworkSpec& spec, const ParamIndex& index,
                            bool include_bias_rows) {
  if (index.layer < 1 || index.layer > spec.depth()) throw ShapeError("layer index out of range");
  const std::size_t q = index.layer - 1;
  const std::size_t width = spec.layer_sizes[q + 1];
  const auto off = layer_row_offsets(spec, include_bias_rows);
  if (index.bias) {
    if (!include_bias_rows) throw ShapeError("bias rows are not part of this layout");
    return off[q] + spec.layer_sizes[q] * width + index.target;
  }
  if (index.source >= spec.layer_sizes[q] || index.target >= width) {
    throw ShapeError("weight index out of range");
  }
  return off[q] + index.source * width + index.target;
}

SensitivityMatrix tangent_sample_sensitivity(const Params& params, const Vector& x,
                                             SensitivityOptions options) {
  check_input(params, x);
  const ForwardTrace trace = forward(params, x);
  SensitivityMatrix s = empty_matrix(params, options.include_bias_rows, trace.on_boundary);
  fill_outer_blocks(s, forward_jacobian(params, trace), backward_sums(params, trace));
  return s;
}

std::vector<SensitivityMatrix> tangent_sample_sensitivity_per_output(const Params& params,
                                                                     const Vector& x,
                                                                     SensitivityOptions options) {
  check_input(params, x);
  const ForwardTrace trace = forward(params, x);
  const auto jac = forward_jacobian(params, trace);
  const auto back = backward_products(params, trace);
  std::vector<SensitivityMatrix> out;
  for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(params.spec.output_dim()); ++l) {
    std::vector<Vector> column;
    column.reserve(back.size());
    for (const auto& b : back) column.emplace_back(b.col(l));
    SensitivityMatrix s = empty_matrix(params, options.include_bias_rows, trace.on_boundary);
    fill_outer_blocks(s, jac, column);
    out.push_back(std::move(s));
  }
  return out;
}

PathLimitError::PathLimitError(std::size_t paths, std::size_t cap)
    : Error("path enumeration refused: network has " + std::to_string(paths) +
            " input-output paths, cap is " + std::to_string(cap)),
      paths_(paths) {}

SensitivityMatrix path_enumeration_sensitivity(const Params& params, const Vector& x,
                                               std::size_t path_cap) {
  check_input(params, x);
  const std::size_t paths = params.spec.path_count();
  if (paths > path_cap) throw PathLimitError(paths, path_cap);

  const ForwardTrace trace = forward(params, x);
  SensitivityMatrix s = empty_matrix(params, false, trace.on_boundary);
  const auto off = layer_row_offsets(params.spec, false);
  const std::size_t k = params.depth();
  const auto& sizes = params.spec.layer_sizes;

  std::vector<std::size_t> nodes(k + 1);
  std::vector<double> w(k), prefix(k + 1), suffix(k + 1);

  auto accumulate_path = [&](Eigen::Index input) {
    for (std::size_t p = 0; p < k; ++p) {
      w[p] = params.weights[p](static_cast<Eigen::Index>(nodes[p]),
                               static_cast<Eigen::Index>(nodes[p + 1]));
    }
    prefix[0] = 1.0;
    for (std::size_t p = 0; p < k; ++p) prefix[p + 1] = prefix[p] * w[p];
    suffix[k] = 1.0;
    for (std::size_t p = k; p-- > 0;) suffix[p] = suffix[p + 1] * w[p];
    for (std::size_t p = 0; p < k; ++p) {
      const std::size_t row = off[p] + nodes[p] * sizes[p + 1] + nodes[p + 1];
      s.entries(static_cast<Eigen::Index>(row), input) += prefix[p] * suffix[p + 1];
    }
  };

  // Depth-first over layers 1..k; hidden nodes with a closed gate end the path.
  auto walk = [&](auto&& self, std::size_t layer, Eigen::Index input) -> void {
    for (std::size_t v = 0; v < sizes[layer]; ++v) {
      if (layer < k && !gate_open(trace, layer - 1, static_cast<Eigen::Index>(v))) continue;
      nodes[layer] = v;
      if (layer == k) {
        accumulate_path(input);
      } else {
        self(self, layer + 1, input);
      }
    }
  };

  for (std::size_t i = 0; i < sizes[0]; ++i) {
    nodes[0] = i;
    walk(walk, 1, static_cast<Eigen::Index>(i));
  }
  return s;
}

Vector weight_gradient_of_output_sum(const Params& params, const Vector& x) {
  check_input(params, x);
  const ForwardTrace trace = forward(params, x);
  const auto back = backward_sums(params, trace);
  Vector g(static_cast<Eigen::Index>(params.spec.weight_count()));
  Eigen::Index at = 0;
  for (std::size_t q = 0; q < params.depth(); ++q) {
    const Vector& a = q == 0 ? trace.input : trace.activations[q - 1];
    for (Eigen::Index u = 0; u < a.size(); ++u) {
      for (Eigen::Index v = 0; v < back[q].size(); ++v) g[at++] = a[u] * back[q][v];
    }
  }
  return g;
}

FiniteDifferenceResult finite_difference_sensitivity(const Params& params, const Vector& x,
                                                     double h) {
  check_input(params, x);
  if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");

  FiniteDifferenceResult r;
  const ForwardTrace trace = forward(params, x);
  r.matrix = empty_matrix(params, false, trace.on_boundary);

  // Within a region h_l moves by at most h * max_i |dh_l/dx_i| per step.
  const auto jac = forward_jacobian(params, trace);
  r.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < trace.preactivations.size(); ++m) {
    const Matrix pre_jac = params.weights[m].transpose() * jac[m];
    const Vector& pre = trace.preactivations[m];
    for (Eigen::Index j = 0; j < pre.size(); ++j) {
      const double slope = pre_jac.row(j).cwiseAbs().maxCoeff();
      const double dist = std::abs(pre[j]);
      if (slope > 0.0) r.min_margin = std::min(r.min_margin, dist / slope);
      if (dist < h || dist <= 2.0 * h * slope) r.near_boundary = true;
    }
  }
  if (r.near_boundary) {
    std::ostringstream os;
    os << "input lies within one finite-difference step of a region boundary (margin "
       << r.min_margin << ", step " << h << ")";
    r.warning = os.str();
  }

  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x;
    Vector xm = x;
    xp[i] += h;
    xm[i] -= h;
    r.matrix.entries.col(i) = (weight_gradient_of_output_sum(params, xp) -
                               weight_gradient_of_output_sum(params, xm)) /
                              (2.0 * h);
  }
  return r;
}

double frobenius_sq(const SensitivityMatrix& s) { return s.entries.squaredNorm(); }

SensitivityFactors sensitivity_factors(const Params& params, const Vector& x) {
  check_input(params, x);
  const ForwardTrace trace = forward(params, x);
  return {forward_jacobian(params, trace), backward_sums(params, trace)};
}

FrobeniusEngine::FrobeniusEngine(const Params& params) : params_(&params) {
  if (params.depth() >= 2) first_gram_ = params.weights[0].transpose() * params.weights[0];
}

double FrobeniusEngine::operator()(const Vector& x) const {
  return (*this)(forward(*params_, x));
}

// ||Sens||_F^2 = sum_q ||J^{(q)}||_F^2 * ||b_q||^2, and ||J^{(q)}||_F^2 is the
// trace of the Gram matrix J J^T restricted to the active nodes of layer q.
double FrobeniusEngine::operator()(const ForwardTrace& trace) const {
  const Params& p = *params_;
  const std::size_t k = p.depth();
  const auto back = backward_sums(p, trace);
  double total = static_cast<double>(p.spec.input_dim()) * back[0].squaredNorm();
  if (k == 1) return total;

  std::vector<std::vector<Eigen::Index>> active(k - 1);
  for (std::size_t m = 0; m + 1 < k; ++m) {
    const Vector& h = trace.preactivations[m];
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      if (h[j] > 0.0) active[m].push_back(j);
    }
  }
  if (active[0].empty()) return total;
  Matrix gram = first_gram_(active[0], active[0]);
  total += gram.trace() * back[1].squaredNorm();
  for (std::size_t q = 2; q < k; ++q) {
    if (active[q - 1].empty()) break;
    const Matrix w = p.weights[q - 1](active[q - 2], active[q - 1]);
    gram = w.transpose() * gram * w;
    total += gram.trace() * back[q].squaredNorm();
  }
  return total;
}

double sensitivity_frobenius_sq(const Params& params, const Vector& x) {
  check_input(params, x);
  return FrobeniusEngine(params)(x);
}

FrobeniusSummary mean_frobenius_sq(const Params& params, const InputMatrix& X,
                                   std::size_t threads) {
  if (X.rows() == 0) throw ValidationError("mean_frobenius_sq: empty dataset");
  if (static_cast<std::size_t>(X.cols()) != params.spec.input_dim()) {
    throw ShapeError("dataset dimension does not match network input");
  }
  const FrobeniusEngine engine(params);
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<double> values(n);
  parallel_for(n, threads, [&](std::size_t i) {
    values[i] = engine(sample_row(X, static_cast<Eigen::Index>(i)));
  });
  FrobeniusSummary s;
  s.samples = n;
  double sum = 0.0;
  for (double v : values) {
    sum += v;
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(n);
  return s;
}

void write_sensitivity_csv(std::ostream& os, const SensitivityMatrix& s) {
  os << "param";
  for (Eigen::Index i = 0; i < s.entries.cols(); ++i) os << ",x" << i;
  os << '\n';
  os << std::setprecision(17);
  for (Eigen::Index r = 0; r < s.entries.rows(); ++r) {
    os << s.row_label(static_cast<std::size_t>(r)).label();
    for (Eigen::Index i = 0; i < s.entries.cols(); ++i) os << ',' << s.entries(r, i);
    os << '\n';
  }
}

namespace {
constexpr char kSensMagic[8] = {'T', 'S', 'N', 'S', 'S', 'E', 'N', '\0'};
}

void write_sensitivity_binary(std::ostream& os, const SensitivityMatrix& s) {
  os.write(kSensMagic, sizeof kSensMagic);
  binio::put<std::uint32_t>(os, 1);
  binio::put<std::uint8_t>(os, s.spec.use_bias ? 1 : 0);
  binio::put<std::uint8_t>(os, s.includes_bias_rows ? 1 : 0);
  binio::put<std::uint8_t>(os, s.boundary_point ? 1 : 0);
  binio::put<std::uint8_t>(os, 0);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.spec.layer_sizes.size()));
  for (std::size_t w : s.spec.layer_sizes) binio::put<std::uint64_t>(os, w);
  binio::put<std::uint64_t>(os, static_cast<std::uint64_t>(s.entries.rows()));
  binio::put<std::uint64_t>(os, static_cast<std::uint64_t>(s.entries.cols()));
  for (Eigen::Index r = 0; r < s.entries.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.entries.cols(); ++c) binio::put<double>(os, s.entries(r, c));
  }
}

SensitivityMatrix read_sensitivity_binary(std::istream& is) {
  char magic[sizeof kSensMagic];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kSensMagic)) {
    throw FormatError("not a sensitivity matrix file (bad magic)");
  }
  if (binio::get<std::uint32_t>(is, "version") != 1) {
    throw FormatError("unsupported sensitivity file version");
  }
  SensitivityMatrix s;
  s.spec.use_bias = binio::get<std::uint8_t>(is, "use_bias") != 0;
  s.includes_bias_rows = binio::get<std::uint8_t>(is, "bias rows flag") != 0;
  s.boundary_point = binio::get<std::uint8_t>(is, "boundary flag") != 0;
  binio::get<std::uint8_t>(is, "padding");
  const auto n_sizes = binio::get<std::uint32_t>(is, "layer count");
  if (n_sizes < 2 || n_sizes > 4096) throw FormatError("implausible layer count");
  for (std::uint32_t i = 0; i < n_sizes; ++i) {
    s.spec.layer_sizes.push_back(static_cast<std::size_t>(binio::get<std::uint64_t>(is, "size")));
  }
  s.spec.validate();
  const auto rows = binio::get<std::uint64_t>(is, "rows");
  const auto cols = binio::get<std::uint64_t>(is, "cols");
  if (rows != layer_row_offsets(s.spec, s.includes_bias_rows).back() ||
      cols != s.spec.input_dim()) {
    throw FormatError("sensitivity matrix shape does not match its network layout");
  }
  s.entries.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < s.entries.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.entries.cols(); ++c) s.entries(r, c) = binio::get<double>(is, "entry");
  }
  return s;
}

}  // namespace tansens
