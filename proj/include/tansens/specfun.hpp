#pragma once

#include <cstddef>

namespace tansens {

/// Outcome of a confluent hypergeometric evaluation. `value` may overflow to
/// +-inf for huge arguments while `log_abs` stays finite.
struct KummerResult {
  double value = 0.0;
  double log_abs = 0.0;
  int sign = 1;
  /// Series terms summed, including the leading 1.
  std::size_t terms = 0;
  /// The series terminated because a is a nonpositive integer.
  bool polynomial = false;
  /// Estimated relative error of `value`.
  double rel_error = 0.0;
};

/// Kummer's function 1F1(a; b; z) = sum_n (a)_n / (b)_n z^n / n! with rising
/// factorials (a)_n = a (a+1) ... (a+n-1).
///
/// Nonpositive integer a gives a polynomial of exactly |a|+1 terms. For z < 0
/// with b - a >= 0 the evaluation goes through e^z 1F1(b-a; b; -z), whose terms
/// are all positive. Any other alternating case is summed directly and capped
/// at 10^4 terms.
///
/// Throws DomainError when b is a nonpositive integer and AccuracyError when
/// the relative error estimate exceeds 1e-12 or the term cap is hit.
KummerResult kummer_1f1_eval(double a, double b, double z);

double kummer_1f1(double a, double b, double z);

/// Gamma function; DomainError at the poles.
double gamma_fn(double x);
/// log |Gamma(x)|; DomainError at the poles.
double log_gamma_fn(double x);

struct MomentQuery {
  double order = 0.0;
  double mu = 0.0;
  double sigma = 1.0;

  void validate() const;
};

/// E|X|^k for X ~ N(mu, sigma^2):
///   sigma^k 2^{k/2} Gamma((k+1)/2) / sqrt(pi) * 1F1(-k/2; 1/2; -mu^2 / (2 sigma^2)).
double normal_abs_moment(const MomentQuery& q);

/// Natural log of normal_abs_moment, usable for orders where the moment
/// itself overflows.
double log_normal_abs_moment(const MomentQuery& q);

}  // namespace tansens
