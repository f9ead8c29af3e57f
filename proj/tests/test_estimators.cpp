#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "tansens/error.hpp"
#include "tansens/estimators.hpp"
#include "test_util.hpp"

using namespace tansens;
using namespace tansens::testing;

namespace {

ActiveNodeStats stats(double mu, double sigma) {
  ActiveNodeStats s;
  s.mu = mu;
  s.sigma = sigma;
  return s;
}

Params scaled(Params p, double c) {
  for (auto& w : p.weights) w *= c;
  return p;
}

}  // namespace

TEST(EstimatorL1, NullCaseAndScaling) {
  std::mt19937_64 rng(71);
  const Params p = random_params(make_spec({5, 6, 4, 3}), rng);
  EXPECT_EQ(estimate_l1(p, p, 1.7), 1.7);
  EXPECT_EQ(estimate_l1_log(p, p, 1.7), 1.7);
  for (double c : {0.5, 1.1, 3.0}) {
    EXPECT_NEAR(l1_ratio(p, scaled(p, c)), std::pow(c, -6.0), 1e-13 * std::pow(c, -6.0));
  }
}

TEST(EstimatorL1, InvariantWhenLayerMaximaArePreserved) {
  std::mt19937_64 rng(72);
  const Params prev = random_params(make_spec({4, 5, 3}), rng);
  Params cur = prev;
  for (auto& w : cur.weights) {
    const double m = w.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (std::abs(w.data()[i]) < m) w.data()[i] = -0.5 * w.data()[i];
    }
  }
  for (auto& b : cur.biases) b.setConstant(9.0);
  EXPECT_EQ(estimate_l1(prev, cur, 0.8), 0.8);
  EXPECT_EQ(estimate_l1_log(prev, cur, 0.8), 0.8);
}

TEST(EstimatorL1, LogFormDoublingBound) {
  // 1-1-1 biasless net: eq1_tight = 2 * max(w1, w2)^2 when the other is 1.
  Params prev = Params::zeros(make_spec({1, 1, 1}, false));
  prev.weights[0](0, 0) = 1.0;
  prev.weights[1](0, 0) = std::sqrt(std::numbers::e / 2.0);
  Params cur = prev;
  cur.weights[1](0, 0) = std::sqrt(std::numbers::e);
  EXPECT_NEAR(estimate_l1_log(prev, cur, 1.0), 1.0 / (1.0 + std::numbers::ln2), 1e-15);
  Params tiny = Params::zeros(make_spec({1, 1}, false));
  tiny.weights[0](0, 0) = 5.0;
  EXPECT_THROW(estimate_l1_log(tiny, tiny, 1.0), DomainError);
  EXPECT_THROW(estimate_l1(prev, Params::zeros(prev.spec), 1.0), DomainError);
  EXPECT_THROW(estimate_l1(prev, tiny, 1.0), ShapeError);
}

TEST(EstimatorL2, NullCasesAndClosedForm) {
  std::mt19937_64 rng(73);
  const Params p = random_params(make_spec({3, 5, 4, 2}), rng);
  EXPECT_EQ(estimate_l2(p, stats(4.0, 1.2), stats(4.0, 1.2), 0.9), 0.9);
  const Params single = random_params(make_spec({3, 2}), rng);
  EXPECT_EQ(estimate_l2(single, stats(1.0, 0.1), stats(7.0, 3.0), 0.9), 0.9);
  // k = 3: psi* = (mu^2 + sigma^2)^2
  EXPECT_NEAR(l2_ratio(3, stats(4.0, 1.0), stats(3.0, 2.0)), std::pow(13.0 / 17.0, 2), 1e-14);
  EXPECT_THROW(estimate_l2(p, stats(4.0, 0.0), stats(4.0, 1.0), 0.9), DomainError);
}

TEST(EstimatorL3, NullCasesAndInvariance) {
  std::mt19937_64 rng(74);
  const Params p = random_params(make_spec({4, 6, 5, 3}), rng);
  const InputMatrix X = random_inputs(60, 4, rng);
  EXPECT_EQ(estimate_l3(p, X, X, 2.25), 2.25);
  InputMatrix rev = X.colwise().reverse();
  EXPECT_NEAR(estimate_l3(p, X, rev, 2.25), 2.25, 1e-12);
  EXPECT_DOUBLE_EQ(l3_ratio(2.0, 3.0), 1.5);
  EXPECT_THROW(l3_ratio(0.0, 1.0), DomainError);
  EXPECT_THROW(estimate_l3(p, X, X, -1.0), DomainError);
}

TEST(EstimatorAccuracy, RatioForms) {
  EXPECT_EQ(estimate_accuracy(1.0, 0.73), 0.73);
  EXPECT_DOUBLE_EQ(estimate_accuracy(2.0, 0.8), 0.4);
  EXPECT_DOUBLE_EQ(estimate_accuracy(0.5, 0.8), 1.0);
  EXPECT_DOUBLE_EQ(estimate_accuracy(2.0, 0.8, AccuracyMode::direct), 1.0);
  EXPECT_DOUBLE_EQ(estimate_accuracy(0.5, 0.8, AccuracyMode::direct), 0.4);
  EXPECT_THROW(estimate_accuracy(0.0, 0.5), DomainError);
  EXPECT_THROW(estimate_accuracy(1.0, 1.5), DomainError);
}

TEST(Mae, Basics) {
  const std::vector<double> t{0.1, 2.0, -3.0};
  EXPECT_EQ(mae(t, t), 0.0);
  const std::vector<double> e{0.6, 2.5, -2.5};
  EXPECT_NEAR(mae(e, t), 0.5, 1e-15);
  EXPECT_THROW(mae(e, std::vector<double>{1.0}), ShapeError);
  EXPECT_THROW(mae(std::vector<double>{}, std::vector<double>{}), ValidationError);
}

TEST(EstimatorCsv, HeaderRowsAndSummary) {
  EXPECT_EQ(estimator_csv_header(),
            "epoch,train_loss,test_loss,train_acc,test_acc,est_l1,est_l1_log,est_l2,est_l3,"
            "est_acc_l1,est_acc_l2,est_acc_l3");
  std::vector<EstimatorReport> reports(3);
  for (std::size_t e = 0; e < 3; ++e) {
    auto& r = reports[e];
    r.epoch = e;
    r.train_loss = 1.0;
    r.test_loss = 1.0 + 0.1 * static_cast<double>(e);
    r.train_acc = 0.9;
    r.test_acc = 0.8;
    r.est_l1 = r.est_l1_log = r.est_l2 = r.est_l3 = r.test_loss;
    r.est_acc_l1 = r.est_acc_l2 = r.est_acc_l3 = 0.85;
  }
  reports[0].est_l2 = 100.0;  // epoch 0 is excluded
  const EstimatorSummary s = summarize(reports);
  EXPECT_EQ(s.epochs, 2u);
  EXPECT_NEAR(s.mae_loss_baseline, 0.15, 1e-15);
  EXPECT_EQ(s.mae_loss_l2, 0.0);
  EXPECT_NEAR(s.mae_acc_baseline, 0.1, 1e-15);
  EXPECT_NEAR(s.mae_acc_l3, 0.05, 1e-15);

  std::ostringstream os;
  write_estimator_csv_header(os);
  write_estimator_csv_row(os, reports[1]);
  EXPECT_EQ(os.str(), estimator_csv_header() + "\n1,1,1.1000000000000001,0.90000000000000002,0.80000000000000004,"
                      "1.1000000000000001,1.1000000000000001,1.1000000000000001,1.1000000000000001,"
                      "0.84999999999999998,0.84999999999999998,0.84999999999999998\n");
  std::ostringstream ss;
  write_summary_csv(ss, s);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "estimator,mae_cross_entropy,mae_accuracy");
}
