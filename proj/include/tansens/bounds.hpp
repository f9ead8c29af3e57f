#pragma once

// Closed-form upper bounds on the Frobenius norm of tangent sensitivity, the
// Hoeffding concentration diagnostic and the maximal linear-region count.
//
// N_theta in both bounds counts weights only: the bounds are stated for
// biasless networks and bias rows of the sensitivity matrix are zero anyway.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "tansens/network.hpp"
#include "tansens/region_stats.hpp"

namespace tansens {

struct Eq1Result {
  /// N_theta d_in N_max^{2(k-1)} (prod_i w_max_i / min_i w_max_i)^2; NaN when
  /// some layer is all zero.
  double tight = 0.0;
  /// N_theta d_in (N_max w_max)^{2(k-1)}.
  double loose = 0.0;
  double log_tight = 0.0;
  double log_loose = 0.0;
  bool tight_defined = true;

  double n_theta = 0.0;
  double d_in = 0.0;
  std::size_t k = 0;
  /// Widest layer among N_1 .. N_k (the output layer included).
  double n_max = 0.0;
  double w_max = 0.0;
  std::vector<double> layer_max;
};

Eq1Result bound_eq1(const Params& params);

/// Everything the normal-approximation bound depends on; lets sweeps describe
/// hypothetical networks without materialising their weights.
struct Eq2Inputs {
  double n_theta = 0.0;
  double d_in = 0.0;
  std::size_t k = 1;
  double mu = 0.0;
  double sigma = 1.0;
  std::vector<double> layer_max;

  void validate() const;
};

struct Eq2Result {
  double value = 0.0;
  double log_value = 0.0;
  /// Same bound with the k-th absolute moment in place of the (k-1)-th.
  double proof_variant = 0.0;
  double log_proof_variant = 0.0;

  double log_sigma_factor = 0.0;  // 2(k-1) log sigma
  double log_power_factor = 0.0;  // (k-1) log 2 - 2k log k
  double gamma_factor = 0.0;      // Gamma(k/2)
  double psi = 0.0;               // 1F1(-(k-1)/2; 1/2; -mu^2 / (2 sigma^2))
  double log_abs_psi = 0.0;
  double psi_proof = 0.0;         // 1F1(-k/2; 1/2; -mu^2 / (2 sigma^2))
  double log_weight_factor = 0.0; // 2 sum_i log w_max_i
};

Eq2Inputs eq2_inputs(const Params& params, double mu, double sigma);

Eq2Result bound_eq2(const Eq2Inputs& in);
Eq2Result bound_eq2(const Params& params, const ActiveNodeStats& stats);
Eq2Result bound_eq2(const Params& params, double mu, double sigma);

/// sigma^{2(k-1)} 1F1(-(k-1)/2; 1/2; -mu^2/(2 sigma^2))^2, the part of the
/// normal-approximation bound that depends on the active-node distribution.
double log_psi_star(std::size_t k, double mu, double sigma);
double psi_star(std::size_t k, double mu, double sigma);

/// Mean over samples of (T(x)/k)^k, the path-count proxy the normal
/// approximation replaces. Diagnostic only.
double active_path_proxy(const ActiveNodeStats& stats, std::size_t k);

/// exp(-eps^2 T / (2 sens_max^2)).
double hoeffding_tail(double epsilon, std::size_t samples, double sens_max);

/// prod over hidden layers of floor(N_i / d_in)^{d_in}.
boost::multiprecision::cpp_int max_region_count(const NetworkSpec& spec);

struct BoundReport {
  double eq1_value = 0.0;
  double eq1_tight_value = 0.0;
  double eq2_value = 0.0;
  double eq2_proof_variant = 0.0;
  std::map<std::string, double> components;
  std::vector<double> layer_max;

  nlohmann::json to_json() const;
};

BoundReport make_bound_report(const Params& params, const ActiveNodeStats& stats);

}  // namespace tansens
