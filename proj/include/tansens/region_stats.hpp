#pragma once

// Statistics of activation regions realised by a dataset: active-neuron
// counts, sigmoid membership probabilities of activation patterns, the
// region-weighted empirical sensitivity and per-neuron margins.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tansens/network.hpp"

namespace tansens {

struct Histogram {
  double origin = 0.0;
  double bin_width = 1.0;
  std::vector<std::size_t> counts;

  double lower(std::size_t bin) const { return origin + bin_width * static_cast<double>(bin); }
  double upper(std::size_t bin) const { return lower(bin + 1); }
  std::size_t total() const;
};

/// 2 * IQR * n^{-1/3}; 1.0 when the IQR is zero.
double freedman_diaconis_width(std::span<const double> values);

/// Bins of width `bin_width` (Freedman-Diaconis when <= 0) starting at
/// floor(min value), covering every value.
Histogram make_histogram(std::span<const double> values, double bin_width = 0.0);

/// Same binning over [origin, origin + bins * width).
Histogram make_histogram(std::span<const double> values, double origin, double bin_width,
                         std::size_t bins);

struct ActiveNodeStats {
  /// T(x) per sample.
  std::vector<std::size_t> counts;
  /// n_i(x) per sample, one entry per hidden layer.
  std::vector<std::vector<std::size_t>> per_layer_counts;
  std::size_t hidden_neurons = 0;
  /// Maximum-likelihood normal fit: sample mean and population std of T(x).
  double mu = 0.0;
  double sigma = 0.0;
  Histogram histogram;

  std::vector<double> count_values() const;
  std::vector<double> layer_count_values(std::size_t layer) const;
};

ActiveNodeStats active_node_stats(const Params& params, const InputMatrix& X,
                                  double bin_width = 0.0, std::size_t threads = 1);

/// Train-vs-test overlay of total and per-layer active-neuron histograms on
/// shared bins. Columns: scope,bin_lo,bin_hi,train_count,test_count,
/// train_fraction,test_fraction. Scope is "total" or "layer<i>".
void write_active_histograms_csv(std::ostream& os, const ActiveNodeStats& train,
                                 const ActiveNodeStats& test, double bin_width = 0.0);

struct RegionProbability {
  ActivationPattern pattern;
  double log_prob = 0.0;
};

/// log p(A | x) = sum_{a_l = +1} log sigmoid(h_l) + sum_{a_l = -1} log(1 - sigmoid(h_l)).
RegionProbability pattern_log_probability(const Params& params, const Vector& x,
                                          const ActivationPattern& pattern);

/// log sigmoid(z), exact for large |z|.
double log_sigmoid(double z);

struct EmpiricalOptions {
  /// Renormalise the region probabilities over the observed patterns.
  bool normalize = true;
  /// Patterns processed per block of the probability matrix.
  std::size_t block = 256;
};

struct EmpiricalSensitivity {
  double value = 0.0;
  /// Distinct patterns observed, first-occurrence order.
  std::vector<ActivationPattern> patterns;
  /// Frobenius^2 of the sensitivity matrix of each region.
  std::vector<double> region_sensitivity;
  /// log p(A_i), renormalised when options.normalize is set.
  std::vector<double> log_prob;
  /// Number of samples realising each pattern.
  std::vector<std::size_t> multiplicity;
};

/// S_hat(X) = sum_{A in A+} p(A) ||Sens(A)||_F^2, with A+ the patterns realised
/// by X and p(A) = mean over x in X of the membership probability of A at x.
EmpiricalSensitivity empirical_tangent_sensitivity(const Params& params, const InputMatrix& X,
                                                   EmpiricalOptions options = {});

/// One line per distinct pattern: "<bitstring>,<multiplicity>,<log_prob>,<region_frobenius_sq>".
void write_patterns_csv(std::ostream& os, const EmpiricalSensitivity& e);

struct ConstancyReport {
  std::size_t trials = 0;
  std::size_t in_region = 0;
  std::size_t violations = 0;
  double max_abs_diff = 0.0;
  /// No perturbation stayed inside the region.
  bool inconclusive = false;

  double fraction_in_region() const {
    return trials ? static_cast<double>(in_region) / static_cast<double>(trials) : 0.0;
  }
  bool passed() const { return !inconclusive && violations == 0; }
};

/// Perturbs x uniformly in the box of half-width `radius`, keeps the
/// perturbations with an unchanged activation pattern and compares their
/// sensitivity matrices with the one at x entrywise (tolerance `tol`).
ConstancyReport region_constancy_check(const Params& params, const Vector& x, std::size_t trials,
                                       double radius, std::uint64_t seed = 0, double tol = 1e-12);

struct NeuronMargin {
  /// min_x |h_l(x)|
  double rho = 0.0;
  /// min_x |sigmoid(h_l(x)) - 1/2|
  double rho_hat = 0.0;
  std::size_t argmin_rho = 0;
  std::size_t argmin_rho_hat = 0;
};

std::vector<NeuronMargin> neuron_margins(const Params& params, const InputMatrix& X);

/// Columns: neuron,layer,index,rho,rho_hat.
void write_margins_csv(std::ostream& os, const NetworkSpec& spec,
                       const std::vector<NeuronMargin>& margins);

}  // namespace tansens
