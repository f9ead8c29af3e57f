#pragma once

// Test-loss estimators driven by the change in tangent sensitivity. Each one
// scales the training loss by a sensitivity ratio; none of them ever sees test
// labels (test data enters as bare inputs).

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>

#include "tansens/network.hpp"
#include "tansens/region_stats.hpp"

namespace tansens {

/// (prod_i w_max_i(prev))^2 / (prod_i w_max_i(cur))^2.
double l1_ratio(const Params& prev, const Params& cur);
double estimate_l1(const Params& prev, const Params& cur, double train_loss);

/// log eq1_tight(prev) / log eq1_tight(cur); DomainError unless both bounds
/// exceed 1.
double l1_log_ratio(const Params& prev, const Params& cur);
double estimate_l1_log(const Params& prev, const Params& cur, double train_loss);

/// psi*(k, mu_test, sigma_test) / psi*(k, mu_train, sigma_train).
double l2_ratio(std::size_t k, const ActiveNodeStats& train, const ActiveNodeStats& test);
double estimate_l2(const Params& params, const ActiveNodeStats& train_stats,
                   const ActiveNodeStats& test_stats, double train_loss);

/// S_hat(test) / S_hat(train); DomainError when S_hat(train) is zero.
double l3_ratio(double s_hat_train, double s_hat_test);
double estimate_l3(const Params& params, const InputMatrix& X_train, const InputMatrix& X_test,
                   double train_loss, EmpiricalOptions options = {});

enum class AccuracyMode {
  /// clamp(train_acc / ratio, 0, 1)
  inverse,
  /// clamp(train_acc * ratio, 0, 1)
  direct,
};

double estimate_accuracy(double ratio, double train_acc, AccuracyMode mode = AccuracyMode::inverse);

double mae(std::span<const double> estimates, std::span<const double> truths);

struct EstimatorReport {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double est_l1 = 0.0;
  double est_l1_log = 0.0;
  double est_l2 = 0.0;
  double est_l3 = 0.0;
  double est_acc_l1 = 0.0;
  double est_acc_l2 = 0.0;
  double est_acc_l3 = 0.0;
  /// Sensitivity quantities behind the estimates (ratios, mu/sigma, S_hat).
  std::map<std::string, double> components;
};

/// "epoch,train_loss,test_loss,train_acc,test_acc,est_l1,est_l1_log,est_l2,
/// est_l3,est_acc_l1,est_acc_l2,est_acc_l3"
const std::string& estimator_csv_header();
void write_estimator_csv_header(std::ostream& os);
void write_estimator_csv_row(std::ostream& os, const EstimatorReport& r);

struct EstimatorSummary {
  std::size_t epochs = 0;
  double mae_loss_baseline = 0.0;  // estimate = train_loss
  double mae_loss_l1 = 0.0;
  double mae_loss_l1_log = 0.0;
  double mae_loss_l2 = 0.0;
  double mae_loss_l3 = 0.0;
  double mae_acc_baseline = 0.0;   // estimate = train_acc
  double mae_acc_l1 = 0.0;
  double mae_acc_l2 = 0.0;
  double mae_acc_l3 = 0.0;
};

/// MAE over the reports with epoch >= 1.
EstimatorSummary summarize(std::span<const EstimatorReport> reports);
void write_summary_csv(std::ostream& os, const EstimatorSummary& s);

}  // namespace tansens
