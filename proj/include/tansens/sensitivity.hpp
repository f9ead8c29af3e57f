#pragma once

// Tangent sample sensitivity: the matrix of mixed derivatives d^2 f / dw dx
// of a ReLU network, one row per weight parameter and one column per input
// coordinate. Outputs are summed, so every row aggregates the active paths
// from an input to any output node.
//
// Row order is (layer, source, target): layer-1 weights first, each layer in
// row-major order of its N_{i-1} x N_i weight matrix. When bias rows are
// requested they follow the weight rows of their layer.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "tansens/error.hpp"
#include "tansens/network.hpp"

namespace tansens {

struct ParamIndex {
  std::size_t layer = 0;  // 1-based
  std::size_t source = 0;
  std::size_t target = 0;
  bool bias = false;

  /// "layer/source/target", or "layer/b/target" for biases.
  std::string label() const;
  bool operator==(const ParamIndex&) const = default;
};

struct SensitivityOptions {
  /// Append the (identically zero) bias rows so the row count equals N_theta.
  bool include_bias_rows = false;
};

struct SensitivityMatrix {
  NetworkSpec spec;
  Matrix entries;
  bool includes_bias_rows = false;
  /// Some hidden preactivation was exactly zero at the evaluation point; the
  /// matrix was computed with those neurons gated off.
  bool boundary_point = false;

  ParamIndex row_label(std::size_t row) const;
};

/// Row of weight (layer, source, target) in a matrix with the given layout.
std::size_t sensitivity_row(const NetworkSpec& spec, const ParamIndex& index,
                            bool include_bias_rows = false);

/// Layer-wise algorithm: entry (w = u->v in layer m, i) equals J^{(m-1)}_{u,i}
/// times the gated backward sum from v to the outputs. One forward pass and
/// one backward pass per evaluation; paths are never enumerated.
SensitivityMatrix tangent_sample_sensitivity(const Params& params, const Vector& x,
                                             SensitivityOptions options = {});

/// One matrix per output node; their sum is tangent_sample_sensitivity.
std::vector<SensitivityMatrix> tangent_sample_sensitivity_per_output(
    const Params& params, const Vector& x, SensitivityOptions options = {});

inline constexpr std::size_t kDefaultPathCap = 10'000'000;

/// Raised when brute-force path enumeration would exceed its cap.
class PathLimitError : public Error {
 public:
  PathLimitError(std::size_t paths, std::size_t cap);
  std::size_t paths() const { return paths_; }

 private:
  std::size_t paths_;
};

/// Reference implementation: walks every input->output path, keeps the ones
/// whose hidden nodes all have positive preactivation and adds the product of
/// the remaining weights to each weight on the path.
SensitivityMatrix path_enumeration_sensitivity(const Params& params, const Vector& x,
                                               std::size_t path_cap = kDefaultPathCap);

struct FiniteDifferenceResult {
  SensitivityMatrix matrix;
  /// A +-h step along some coordinate may cross a region boundary.
  bool near_boundary = false;
  /// min over hidden neurons of |h_l(x)| / max_i |dh_l/dx_i|.
  double min_margin = 0.0;
  std::string warning;
};

/// Central differences of grad_theta sum_l f_l(x) along each input coordinate.
FiniteDifferenceResult finite_difference_sensitivity(const Params& params, const Vector& x,
                                                     double h);

/// Gradient of sum_l f_l(x; theta) w.r.t. the weights, in sensitivity row order.
Vector weight_gradient_of_output_sum(const Params& params, const Vector& x);

double frobenius_sq(const SensitivityMatrix& s);

/// The rank-one factors of each layer block: block q of the matrix is
/// back[q] (outer) jac[q], row (u, v) = back[q][v] * jac[q].row(u).
struct SensitivityFactors {
  std::vector<Matrix> jac;
  std::vector<Vector> back;
};

SensitivityFactors sensitivity_factors(const Params& params, const Vector& x);

/// ||Sens(x)||_F^2 without materialising the matrix. The Gram matrix W_1^T W_1
/// is cached, so reuse one engine for many inputs of the same Params.
class FrobeniusEngine {
 public:
  explicit FrobeniusEngine(const Params& params);
  double operator()(const Vector& x) const;
  double operator()(const ForwardTrace& trace) const;

 private:
  const Params* params_;
  Matrix first_gram_;
};

double sensitivity_frobenius_sq(const Params& params, const Vector& x);

struct FrobeniusSummary {
  double mean = 0.0;
  double max = 0.0;
  std::size_t samples = 0;
};

/// Mean and max of ||Sens(x)||_F^2 over the rows of X. Samples are processed
/// by `threads` workers; the reduction order is fixed.
FrobeniusSummary mean_frobenius_sq(const Params& params, const InputMatrix& X,
                                   std::size_t threads = 1);

void write_sensitivity_csv(std::ostream& os, const SensitivityMatrix& s);

// Binary layout (little-endian): magic "TSNSSEN\0", u32 version, u8 use_bias,
// u8 includes_bias_rows, u8 boundary_point, u8 pad, u32 L, L x u64 layer
// sizes, u64 rows, u64 cols, rows*cols f64 row-major.
void write_sensitivity_binary(std::ostream& os, const SensitivityMatrix& s);
SensitivityMatrix read_sensitivity_binary(std::istream& is);

}  // namespace tansens
