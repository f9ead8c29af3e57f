#include "tansens/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tansens/error.hpp"
#include "tansens/specfun.hpp"

namespace tansens {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sum_log(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::log(x);
  return s;
}

// Non-finite values have no JSON representation; they are written as null.
nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

Eq1Result bound_eq1(const Params& params) {
  params.check_consistent();
  Eq1Result r;
  const auto& sizes = params.spec.layer_sizes;
  r.k = params.depth();
  r.n_theta = static_cast<double>(params.spec.weight_count());
  r.d_in = static_cast<double>(params.spec.input_dim());
  r.n_max = static_cast<double>(*std::max_element(sizes.begin() + 1, sizes.end()));
  r.layer_max = params.layer_max_abs();
  r.w_max = *std::max_element(r.layer_max.begin(), r.layer_max.end());

  const double e = 2.0 * static_cast<double>(r.k - 1);
  r.loose = r.n_theta * r.d_in * std::pow(r.n_max * r.w_max, e);
  r.log_loose = std::log(r.n_theta) + std::log(r.d_in) + e * (std::log(r.n_max) + std::log(r.w_max));

  const double w_min = *std::min_element(r.layer_max.begin(), r.layer_max.end());
  if (!(w_min > 0.0)) {
    r.tight_defined = false;
    r.tight = kNaN;
    r.log_tight = kNaN;
    return r;
  }
  // Product of all layer maxima but the smallest one.
  double prod = 1.0;
  bool skipped = false;
  for (double w : r.layer_max) {
    if (!skipped && w == w_min) {
      skipped = true;
      continue;
    }
    prod *= w;
  }
  r.tight = r.n_theta * r.d_in * std::pow(r.n_max, e) * prod * prod;
  r.log_tight = std::log(r.n_theta) + std::log(r.d_in) + e * std::log(r.n_max) +
                2.0 * (sum_log(r.layer_max) - std::log(w_min));
  return r;
}

void Eq2Inputs::validate() const {
  if (k < 1) throw DomainError("bound needs depth k >= 1");
  if (layer_max.size() != k) throw ShapeError("need one layer maximum per layer");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("bound needs sigma > 0");
  if (!std::isfinite(mu)) throw DomainError("bound needs a finite mu");
  if (!(n_theta > 0.0) || !(d_in > 0.0)) throw DomainError("bound needs N_theta, d_in > 0");
  for (double w : layer_max) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("layer maxima must be finite and >= 0");
  }
}

Eq2Inputs eq2_inputs(const Params& params, double mu, double sigma) {
  params.check_consistent();
  Eq2Inputs in;
  in.n_theta = static_cast<double>(params.spec.weight_count());
  in.d_in = static_cast<double>(params.spec.input_dim());
  in.k = params.depth();
  in.mu = mu;
  in.sigma = sigma;
  in.layer_max = params.layer_max_abs();
  return in;
}

Eq2Result bound_eq2(const Eq2Inputs& in) {
  in.validate();
  Eq2Result r;
  const double k = static_cast<double>(in.k);
  const double z = -in.mu * in.mu / (2.0 * in.sigma * in.sigma);

  const KummerResult psi = kummer_1f1_eval(-(k - 1.0) / 2.0, 0.5, z);
  const KummerResult psi_proof = kummer_1f1_eval(-k / 2.0, 0.5, z);
  r.psi = psi.value;
  r.log_abs_psi = psi.log_abs;
  r.psi_proof = psi_proof.value;
  r.gamma_factor = gamma_fn(k / 2.0);
  r.log_sigma_factor = 2.0 * (k - 1.0) * std::log(in.sigma);
  r.log_power_factor = (k - 1.0) * std::numbers::ln2 - 2.0 * k * std::log(k);

  const bool zero_weight =
      std::any_of(in.layer_max.begin(), in.layer_max.end(), [](double w) { return w == 0.0; });
  r.log_weight_factor = zero_weight ? -HUGE_VAL : 2.0 * sum_log(in.layer_max);

  const double log_base = std::log(in.n_theta) + std::log(in.d_in) - std::log(std::numbers::pi) +
                          r.log_weight_factor - 2.0 * k * std::log(k);
  r.log_value = log_base + r.log_sigma_factor + (k - 1.0) * std::numbers::ln2 +
                2.0 * log_gamma_fn(k / 2.0) + 2.0 * psi.log_abs;
  r.log_proof_variant = log_base + 2.0 * k * std::log(in.sigma) + k * std::numbers::ln2 +
                        2.0 * log_gamma_fn((k + 1.0) / 2.0) + 2.0 * psi_proof.log_abs;
  r.value = psi.sign == 0 ? 0.0 : std::exp(r.log_value);
  r.proof_variant = psi_proof.sign == 0 ? 0.0 : std::exp(r.log_proof_variant);
  return r;
}

Eq2Result bound_eq2(const Params& params, const ActiveNodeStats& stats) {
  return bound_eq2(eq2_inputs(params, stats.mu, stats.sigma));
}

Eq2Result bound_eq2(const Params& params, double mu, double sigma) {
  return bound_eq2(eq2_inputs(params, mu, sigma));
}

double log_psi_star(std::size_t k, double mu, double sigma) {
  if (k < 1) throw DomainError("psi* needs k >= 1");
  if (!(sigma > 0.0)) throw DomainError("psi* needs sigma > 0");
  const double kk = static_cast<double>(k);
  const KummerResult psi = kummer_1f1_eval(-(kk - 1.0) / 2.0, 0.5, -mu * mu / (2.0 * sigma * sigma));
  return 2.0 * (kk - 1.0) * std::log(sigma) + 2.0 * psi.log_abs;
}

double psi_star(std::size_t k, double mu, double sigma) {
  return std::exp(log_psi_star(k, mu, sigma));
}

double active_path_proxy(const ActiveNodeStats& stats, std::size_t k) {
  if (stats.counts.empty()) throw ValidationError("active_path_proxy: empty statistics");
  if (k < 1) throw DomainError("active_path_proxy needs k >= 1");
  const double kk = static_cast<double>(k);
  double s = 0.0;
  for (std::size_t t : stats.counts) s += std::pow(static_cast<double>(t) / kk, kk);
  return s / static_cast<double>(stats.counts.size());
}

double hoeffding_tail(double epsilon, std::size_t samples, double sens_max) {
  if (!(epsilon >= 0.0)) throw DomainError("hoeffding_tail needs epsilon >= 0");
  if (samples < 1) throw DomainError("hoeffding_tail needs at least one sample");
  if (!(sens_max > 0.0)) throw DomainError("hoeffding_tail needs sens_max > 0");
  return std::exp(-0.5 * epsilon * epsilon * static_cast<double>(samples) /
                  (sens_max * sens_max));
}

boost::multiprecision::cpp_int max_region_count(const NetworkSpec& spec) {
  spec.validate();
  const std::size_t d_in = spec.input_dim();
  boost::multiprecision::cpp_int count = 1;
  for (std::size_t i = 1; i + 1 < spec.layer_sizes.size(); ++i) {
    const boost::multiprecision::cpp_int q = spec.layer_sizes[i] / d_in;
    count *= boost::multiprecision::pow(q, static_cast<unsigned>(d_in));
    if (count == 0) break;
  }
  return count;
}

BoundReport make_bound_report(const Params& params, const ActiveNodeStats& stats) {
  const Eq1Result e1 = bound_eq1(params);
  BoundReport r;
  r.eq1_value = e1.loose;
  r.eq1_tight_value = e1.tight;
  r.layer_max = e1.layer_max;
  r.components = {
      {"n_theta", e1.n_theta},        {"d_in", e1.d_in},
      {"k", static_cast<double>(e1.k)}, {"n_max", e1.n_max},
      {"w_max", e1.w_max},            {"log_eq1", e1.log_loose},
      {"log_eq1_tight", e1.log_tight}, {"mu", stats.mu},
      {"sigma", stats.sigma},
  };
  if (stats.sigma > 0.0) {
    const Eq2Result e2 = bound_eq2(params, stats);
    r.eq2_value = e2.value;
    r.eq2_proof_variant = e2.proof_variant;
    r.components["log_eq2"] = e2.log_value;
    r.components["log_eq2_proof_variant"] = e2.log_proof_variant;
    r.components["gamma"] = e2.gamma_factor;
    r.components["psi"] = e2.psi;
    r.components["psi_proof_variant"] = e2.psi_proof;
    r.components["log_sigma_factor"] = e2.log_sigma_factor;
    r.components["log_power_factor"] = e2.log_power_factor;
    r.components["log_weight_factor"] = e2.log_weight_factor;
  } else {
    r.eq2_value = kNaN;
    r.eq2_proof_variant = kNaN;
  }
  return r;
}

nlohmann::json BoundReport::to_json() const {
  nlohmann::json j;
  j["eq1_value"] = number(eq1_value);
  j["eq1_tight_value"] = number(eq1_tight_value);
  j["eq2_value"] = number(eq2_value);
  j["eq2_proof_variant"] = number(eq2_proof_variant);
  nlohmann::json c = nlohmann::json::object();
  for (const auto& [name, v] : components) c[name] = number(v);
  c["w_max_i"] = layer_max;
  j["components"] = c;
  return j;
}

}  // namespace tansens
