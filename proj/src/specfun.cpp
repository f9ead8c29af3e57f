#include "tansens/specfun.hpp"

#include <cfloat>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tansens/error.hpp"

namespace tansens {
namespace {

using real = long double;

constexpr std::size_t kAlternatingTermCap = 10'000;
constexpr std::size_t kPositiveTermCap = 2'000'000;
constexpr double kTargetRelError = 1e-12;
constexpr real kRescaleAbove = 1e1000L;
constexpr real kRescaleBy = 1e-1000L;

bool is_nonpositive_integer(double x) { return x <= 0.0 && std::floor(x) == x; }

// Neumaier-compensated sum, rescaled whenever it grows past kRescaleAbove so
// that e^{|z|}-sized sums stay representable; log_scale tracks the factor.
struct ScaledSum {
  real sum = 0.0L;
  real comp = 0.0L;
  real abs_sum = 0.0L;
  real log_scale = 0.0L;

  void add(real t) {
    const real s = sum + t;
    if (std::fabs(sum) >= std::fabs(t)) {
      comp += (sum - s) + t;
    } else {
      comp += (t - s) + sum;
    }
    sum = s;
    abs_sum += std::fabs(t);
  }
  bool rescale_if_needed(real& term) {
    if (std::fabs(sum) < kRescaleAbove && abs_sum < kRescaleAbove) return false;
    sum *= kRescaleBy;
    comp *= kRescaleBy;
    abs_sum *= kRescaleBy;
    term *= kRescaleBy;
    log_scale -= std::log(kRescaleBy);
    return true;
  }
  real total() const { return sum + comp; }
};

struct SeriesOutcome {
  ScaledSum acc;
  std::size_t terms = 0;
  bool converged = false;
};

// sum_n (a)_n / (b)_n z^n / n!, stopping after `exact_terms` terms when given.
SeriesOutcome hypergeometric_series(real a, real b, real z, std::size_t max_terms,
                                    std::size_t exact_terms) {
  SeriesOutcome out;
  real term = 1.0L;
  out.acc.add(term);
  out.terms = 1;
  for (std::size_t n = 0;; ++n) {
    if (exact_terms != 0 && out.terms == exact_terms) {
      out.converged = true;
      return out;
    }
    if (out.terms >= max_terms) return out;
    const real nn = static_cast<real>(n);
    const real ratio = (a + nn) / (b + nn) * z / (nn + 1.0L);
    term *= ratio;
    out.acc.add(term);
    ++out.terms;
    out.acc.rescale_if_needed(term);
    if (exact_terms == 0 && std::fabs(ratio) < 0.5L &&
        std::fabs(term) <= LDBL_EPSILON * std::fabs(out.acc.total())) {
      out.converged = true;
      return out;
    }
  }
}

KummerResult finish(const SeriesOutcome& s, real log_prefactor, bool polynomial) {
  KummerResult r;
  r.terms = s.terms;
  r.polynomial = polynomial;
  const real total = s.acc.total();
  if (total == 0.0L) {
    r.value = 0.0;
    r.log_abs = -HUGE_VAL;
    r.sign = 0;
    r.rel_error = 0.0;
    return r;
  }
  const real cancellation = s.acc.abs_sum / std::fabs(total);
  r.sign = total > 0 ? 1 : -1;
  const real log_abs = std::log(std::fabs(total)) + s.acc.log_scale + log_prefactor;
  r.log_abs = static_cast<double>(log_abs);
  if (s.acc.log_scale == 0.0L && log_prefactor == 0.0L) {
    r.value = static_cast<double>(total);
  } else {
    r.value = r.sign * static_cast<double>(std::exp(log_abs));
  }
  // Summation error grows with the term count and the amount of cancellation;
  // exponentiating a log of size L adds about L ulps.
  r.rel_error = static_cast<double>(
      LDBL_EPSILON * (static_cast<real>(s.terms) * cancellation + std::fabs(log_abs) + 1.0L));
  return r;
}

}  // namespace

KummerResult kummer_1f1_eval(double a, double b, double z) {
  if (is_nonpositive_integer(b)) {
    throw DomainError("1F1: b = " + std::to_string(b) + " is a nonpositive integer");
  }
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(z)) {
    throw DomainError("1F1: non-finite argument");
  }
  if (z == 0.0 || a == 0.0) {
    KummerResult r;
    r.value = 1.0;
    r.terms = 1;
    r.polynomial = a == 0.0;
    return r;
  }

  KummerResult r;
  if (is_nonpositive_integer(a)) {
    const auto n_terms = static_cast<std::size_t>(-a) + 1;
    r = finish(hypergeometric_series(a, b, z, n_terms, n_terms), 0.0L, true);
  } else if (z < 0.0 && b - a >= 0.0 && b > 0.0) {
    // Kummer's transformation: all terms of 1F1(b-a; b; -z) are nonnegative.
    auto s = hypergeometric_series(static_cast<real>(b) - a, b, -static_cast<real>(z),
                                   kPositiveTermCap, 0);
    if (!s.converged) {
      throw AccuracyError("1F1: series did not converge within " +
                              std::to_string(kPositiveTermCap) + " terms",
                          HUGE_VAL);
    }
    r = finish(s, static_cast<real>(z), false);
  } else {
    auto s = hypergeometric_series(a, b, z, kAlternatingTermCap, 0);
    if (!s.converged) {
      const real last = s.acc.total();
      std::ostringstream os;
      os << "1F1(" << a << ", " << b << ", " << z << "): no convergence within "
         << kAlternatingTermCap << " terms";
      throw AccuracyError(os.str(), last == 0.0L ? HUGE_VAL : 1.0);
    }
    r = finish(s, 0.0L, false);
  }
  if (r.rel_error > kTargetRelError) {
    std::ostringstream os;
    os << "1F1(" << a << ", " << b << ", " << z << "): estimated relative error " << r.rel_error
       << " exceeds " << kTargetRelError;
    throw AccuracyError(os.str(), r.rel_error);
  }
  return r;
}

double kummer_1f1(double a, double b, double z) { return kummer_1f1_eval(a, b, z).value; }

double gamma_fn(double x) {
  if (is_nonpositive_integer(x)) throw DomainError("Gamma has a pole at " + std::to_string(x));
  return std::tgamma(x);
}

double log_gamma_fn(double x) {
  if (is_nonpositive_integer(x)) throw DomainError("Gamma has a pole at " + std::to_string(x));
  return std::lgamma(x);
}

void MomentQuery::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("moment query needs sigma > 0");
  if (!(order >= 0.0) || !std::isfinite(order)) {
    throw DomainError("moment order must be a nonnegative real");
  }
  if (!std::isfinite(mu)) throw DomainError("moment query needs a finite mu");
}

double log_normal_abs_moment(const MomentQuery& q) {
  q.validate();
  const double k = q.order;
  const KummerResult psi = kummer_1f1_eval(-k / 2.0, 0.5, -q.mu * q.mu / (2.0 * q.sigma * q.sigma));
  return k * std::log(q.sigma) + 0.5 * k * std::numbers::ln2 + log_gamma_fn((k + 1.0) / 2.0) -
         0.5 * std::log(std::numbers::pi) + psi.log_abs;
}

double normal_abs_moment(const MomentQuery& q) {
  q.validate();
  const double k = q.order;
  const double psi = kummer_1f1(-k / 2.0, 0.5, -q.mu * q.mu / (2.0 * q.sigma * q.sigma));
  return std::pow(q.sigma, k) * std::pow(2.0, k / 2.0) * gamma_fn((k + 1.0) / 2.0) /
         std::sqrt(std::numbers::pi) * psi;
}

}  // namespace tansens
