#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "tansens/bounds.hpp"
#include "tansens/error.hpp"
#include "tansens/sensitivity.hpp"
#include "test_util.hpp"

using namespace tansens;
using namespace tansens::testing;

namespace {

double quadrature_abs_moment(double k, double mu, double sigma) {
  const int n = 200000;
  const double lo = mu - 14 * sigma, hi = mu + 14 * sigma, h = (hi - lo) / n;
  auto f = [&](double x) {
    const double z = (x - mu) / sigma;
    return std::pow(std::abs(x), k) * std::exp(-0.5 * z * z) / (sigma * std::sqrt(2 * std::numbers::pi));
  };
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

Params scaled(Params p, double c) {
  for (auto& w : p.weights) w *= c;
  for (auto& b : p.biases) b *= c;
  return p;
}

}  // namespace

TEST(Eq1, SingleLayerCollapses) {
  Params p = Params::zeros(make_spec({2, 1}, false));
  p.weights[0] << 0.3, -2.0;
  const Eq1Result r = bound_eq1(p);
  EXPECT_EQ(r.tight, 4.0);
  EXPECT_EQ(r.loose, 4.0);
  EXPECT_EQ(frobenius_sq(tangent_sample_sensitivity(p, Vector::Ones(2))), 2.0);
}

TEST(Eq1, UniformWeightsTightEqualsLoose) {
  for (double c : {0.05, 0.7, 3.0}) {
    Params p = Params::zeros(make_spec({4, 6, 6, 6}, false));
    for (auto& w : p.weights) w.setConstant(-c);
    const Eq1Result r = bound_eq1(p);
    EXPECT_LT(rel(r.tight, r.loose), 1e-14);
    const double expected = 96.0 * 4.0 * std::pow(6.0 * c, 4);
    EXPECT_LT(rel(r.loose, expected), 1e-14);
    EXPECT_EQ(r.n_theta, 96.0);
    EXPECT_EQ(r.n_max, 6.0);
  }
}

TEST(Eq1, ComponentsOnMixedNetwork) {
  Params p = Params::zeros(make_spec({3, 5, 2}, true));
  p.weights[0].setConstant(0.5);
  p.weights[0](1, 3) = -2.0;
  p.weights[1].setConstant(0.25);
  p.biases[0].setConstant(100.0);
  const Eq1Result r = bound_eq1(p);
  EXPECT_EQ(r.n_theta, 25.0);
  EXPECT_EQ(r.k, 2u);
  EXPECT_EQ(r.layer_max, (std::vector<double>{2.0, 0.25}));
  EXPECT_EQ(r.w_max, 2.0);
  // 25 * 3 * 5^2 * (2 * 0.25 / 0.25)^2
  EXPECT_DOUBLE_EQ(r.tight, 25.0 * 3.0 * 25.0 * 4.0);
  EXPECT_DOUBLE_EQ(r.loose, 25.0 * 3.0 * 100.0);
  EXPECT_NEAR(r.log_tight, std::log(r.tight), 1e-13);
  EXPECT_LE(r.tight, r.loose);
}

TEST(Eq1, ZeroLayerLeavesTightUndefined) {
  Params p = Params::zeros(make_spec({3, 4, 2}, false));
  p.weights[0].setConstant(1.0);
  const Eq1Result r = bound_eq1(p);
  EXPECT_FALSE(r.tight_defined);
  EXPECT_TRUE(std::isnan(r.tight));
  EXPECT_TRUE(std::isfinite(r.loose));
}

TEST(Eq1, DominatesSampleSensitivity) {
  std::mt19937_64 rng(51);
  for (int net = 0; net < 40; ++net) {
    const NetworkSpec spec = random_spec(rng, 1, 4, 6, net % 2 == 0);
    const Params p = random_params(spec, rng);
    const Eq1Result r = bound_eq1(p);
    EXPECT_LE(r.tight, r.loose * (1 + 1e-12));
    for (int s = 0; s < 30; ++s) {
      EXPECT_LE(sensitivity_frobenius_sq(p, random_vector(spec.input_dim(), rng, 3.0)), r.tight);
    }
  }
}

TEST(Eq1, Homogeneity) {
  std::mt19937_64 rng(52);
  for (int net = 0; net < 20; ++net) {
    const Params p = random_params(random_spec(rng, 1, 5, 7, false), rng);
    const double k = static_cast<double>(p.depth());
    for (double c : {0.5, 2.0, 7.0}) {
      const Eq1Result a = bound_eq1(p), b = bound_eq1(scaled(p, c));
      EXPECT_LT(rel(b.tight, a.tight * std::pow(c, 2 * (k - 1))), 1e-12);
      EXPECT_LT(rel(b.loose, a.loose * std::pow(c, 2 * (k - 1))), 1e-12);
    }
  }
}

TEST(Eq1, LayerMaxPreservingChangesAreInvisible) {
  std::mt19937_64 rng(53);
  Params p = random_params(make_spec({3, 5, 4, 2}, false), rng);
  const Eq1Result a = bound_eq1(p);
  for (auto& w : p.weights) {
    const double m = w.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (std::abs(w.data()[i]) < m) w.data()[i] *= 0.3;
    }
  }
  const Eq1Result b = bound_eq1(p);
  EXPECT_EQ(a.tight, b.tight);
  EXPECT_EQ(a.loose, b.loose);
}

TEST(Eq2, SingleLayerCollapses) {
  Params p = Params::zeros(make_spec({3, 2}, false));
  p.weights[0].setConstant(0.5);
  p.weights[0](2, 1) = -1.5;
  for (double mu : {0.0, 1.0, 4.0}) {
    for (double s : {0.3, 2.0}) {
      EXPECT_LT(rel(bound_eq2(p, mu, s).value, 6.0 * 3.0 * 2.25), 1e-13);
    }
  }
}

TEST(Eq2, MatchesMomentQuadrature) {
  // The printed bound equals N_theta d_in (E|X|^{k-1})^2 k^{-2k} (prod w)^2 with
  // X ~ N(mu, sigma^2); the proof variant uses E|X|^k.
  Eq2Inputs in;
  in.n_theta = 1234;
  in.d_in = 17;
  for (std::size_t k : {2u, 3u, 4u, 6u}) {
    in.k = k;
    in.layer_max.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) in.layer_max[i] = 0.2 + 0.3 * static_cast<double>(i);
    double prod = 1.0;
    for (double w : in.layer_max) prod *= w;
    for (auto [mu, s] : {std::pair{0.0, 1.0}, std::pair{3.0, 1.5}, std::pair{12.0, 2.0}}) {
      in.mu = mu;
      in.sigma = s;
      const double kk = static_cast<double>(k);
      const double base = in.n_theta * in.d_in * prod * prod / std::pow(kk, 2 * kk);
      const Eq2Result r = bound_eq2(in);
      EXPECT_LT(rel(r.value, base * std::pow(quadrature_abs_moment(kk - 1, mu, s), 2)), 1e-8);
      EXPECT_LT(rel(r.proof_variant, base * std::pow(quadrature_abs_moment(kk, mu, s), 2)), 1e-8);
      EXPECT_NEAR(r.log_value, std::log(r.value), 1e-12 * std::abs(r.log_value) + 1e-12);
    }
  }
}

TEST(Eq2, VanishesAsSigmaShrinksAtZeroMean) {
  Eq2Inputs in{100, 10, 3, 0.0, 1.0, {1.0, 1.0, 1.0}};
  double prev = HUGE_VAL;
  for (double s : {1.0, 1e-1, 1e-2, 1e-4, 1e-8}) {
    in.sigma = s;
    const double v = bound_eq2(in).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-25);
}

TEST(Eq2, MonotoneInSigmaAndLayerMaxima) {
  Eq2Inputs in{5000, 30, 4, 40.0, 1.0, {0.1, 0.2, 0.3, 0.4}};
  double prev = 0.0;
  for (double s = 0.5; s < 30.0; s *= 1.4) {
    in.sigma = s;
    const double v = bound_eq2(in).value;
    EXPECT_GT(v, prev);
    prev = v;
  }
  in.sigma = 4.0;
  for (std::size_t i = 0; i < 4; ++i) {
    Eq2Inputs up = in;
    up.layer_max[i] *= 1.1;
    EXPECT_GT(bound_eq2(up).value, bound_eq2(in).value);
  }
}

TEST(Eq2, LargeDepthStaysFiniteInLogSpace) {
  Eq2Inputs in{5e6, 3072, 40, 480.0, 40.0, std::vector<double>(40, 0.1)};
  const Eq2Result r = bound_eq2(in);
  EXPECT_TRUE(std::isfinite(r.log_value));
  EXPECT_TRUE(std::isfinite(r.log_proof_variant));
}

TEST(Eq2, ValidationAndPsiStar) {
  Eq2Inputs in{10, 2, 2, 1.0, 0.0, {1.0, 1.0}};
  EXPECT_THROW(bound_eq2(in), DomainError);
  in.sigma = 1.0;
  in.layer_max = {1.0};
  EXPECT_THROW(bound_eq2(in), ShapeError);
  EXPECT_EQ(psi_star(1, 3.0, 0.5), 1.0);
  // k = 3: sigma^4 (1 + mu^2/sigma^2)^2 = (mu^2 + sigma^2)^2
  EXPECT_LT(rel(psi_star(3, 2.0, 0.5), std::pow(4.25, 2)), 1e-13);
  EXPECT_THROW(psi_star(2, 1.0, 0.0), DomainError);
}

TEST(Eq2, ActivePathProxy) {
  ActiveNodeStats s;
  s.counts = {2, 4, 6};
  EXPECT_DOUBLE_EQ(active_path_proxy(s, 2), (1.0 + 4.0 + 9.0) / 3.0);
  EXPECT_THROW(active_path_proxy(ActiveNodeStats{}, 2), ValidationError);
}

TEST(Hoeffding, Values) {
  EXPECT_EQ(hoeffding_tail(0.0, 10, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(hoeffding_tail(1.0, 100, 2.0), std::exp(-12.5));
  double prev = 1.0;
  for (std::size_t t : {1u, 10u, 100u, 1000u}) {
    const double v = hoeffding_tail(0.5, t, 1.0);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_THROW(hoeffding_tail(1.0, 0, 1.0), DomainError);
  EXPECT_THROW(hoeffding_tail(1.0, 5, 0.0), DomainError);
}

TEST(MaxRegionCount, Examples) {
  EXPECT_EQ(max_region_count(make_spec({1, 3, 2, 1})), 6);
  EXPECT_EQ(max_region_count(make_spec({3072, 100, 100, 100, 100, 10})), 0);
  EXPECT_EQ(max_region_count(make_spec({2, 5, 1})), 4);
  // 10^20 overflows 64 bits.
  EXPECT_EQ(max_region_count(make_spec({1, 100000, 100000, 100000, 100000, 1})),
            boost::multiprecision::cpp_int("100000000000000000000"));
}

TEST(BoundReport, JsonHasComponentsAndNulls) {
  std::mt19937_64 rng(54);
  const Params p = random_params(make_spec({3, 4, 2}, false), rng);
  ActiveNodeStats s;
  s.mu = 2.0;
  s.sigma = 0.5;
  const BoundReport r = make_bound_report(p, s);
  EXPECT_LE(r.eq1_tight_value, r.eq1_value);
  const nlohmann::json j = r.to_json();
  for (const char* key : {"n_theta", "d_in", "k", "n_max", "w_max", "mu", "sigma", "gamma", "psi"}) {
    EXPECT_TRUE(j["components"].contains(key)) << key;
  }
  EXPECT_EQ(j["components"]["w_max_i"].size(), 2u);
  s.sigma = 0.0;
  EXPECT_TRUE(make_bound_report(p, s).to_json()["eq2_value"].is_null());
}
