#include "tansens/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <vector>

#include "tansens/bounds.hpp"
#include "tansens/error.hpp"

namespace tansens {
namespace {

double log_weight_product(const Params& p) {
  double s = 0.0;
  for (double w : p.layer_max_abs()) {
    if (!(w > 0.0)) throw DomainError("layer with all-zero weights: sensitivity ratio undefined");
    s += std::log(w);
  }
  return s;
}

void check_same_spec(const Params& a, const Params& b) {
  if (!(a.spec == b.spec)) throw ShapeError("parameter states come from different networks");
}

void check_loss(double train_loss) {
  if (!(train_loss >= 0.0) || !std::isfinite(train_loss)) {
    throw DomainError("training loss must be finite and nonnegative");
  }
}

}  // namespace

double l1_ratio(const Params& prev, const Params& cur) {
  check_same_spec(prev, cur);
  return std::exp(2.0 * (log_weight_product(prev) - log_weight_product(cur)));
}

double estimate_l1(const Params& prev, const Params& cur, double train_loss) {
  check_loss(train_loss);
  return l1_ratio(prev, cur) * train_loss;
}

double l1_log_ratio(const Params& prev, const Params& cur) {
  check_same_spec(prev, cur);
  const Eq1Result a = bound_eq1(prev);
  const Eq1Result b = bound_eq1(cur);
  if (!a.tight_defined || !b.tight_defined || !(a.log_tight > 0.0) || !(b.log_tight > 0.0)) {
    throw DomainError("log-ratio estimator needs both sensitivity bounds above 1");
  }
  return a.log_tight / b.log_tight;
}

double estimate_l1_log(const Params& prev, const Params& cur, double train_loss) {
  check_loss(train_loss);
  return l1_log_ratio(prev, cur) * train_loss;
}

double l2_ratio(std::size_t k, const ActiveNodeStats& train, const ActiveNodeStats& test) {
  if (!(train.sigma > 0.0) || !(test.sigma > 0.0)) {
    throw DomainError("active-node distribution with zero spread: psi* ratio undefined");
  }
  return std::exp(log_psi_star(k, test.mu, test.sigma) - log_psi_star(k, train.mu, train.sigma));
}

double estimate_l2(const Params& params, const ActiveNodeStats& train_stats,
                   const ActiveNodeStats& test_stats, double train_loss) {
  check_loss(train_loss);
  return l2_ratio(params.depth(), train_stats, test_stats) * train_loss;
}

double l3_ratio(double s_hat_train, double s_hat_test) {
  if (!(s_hat_train > 0.0)) throw DomainError("empirical sensitivity of the training set is zero");
  if (!(s_hat_test >= 0.0)) throw DomainError("empirical sensitivity must be nonnegative");
  return s_hat_test / s_hat_train;
}

double estimate_l3(const Params& params, const InputMatrix& X_train, const InputMatrix& X_test,
                   double train_loss, EmpiricalOptions options) {
  check_loss(train_loss);
  const double tr = empirical_tangent_sensitivity(params, X_train, options).value;
  const double te = empirical_tangent_sensitivity(params, X_test, options).value;
  return l3_ratio(tr, te) * train_loss;
}

double estimate_accuracy(double ratio, double train_acc, AccuracyMode mode) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw DomainError("accuracy ratio must be positive");
  if (!(train_acc >= 0.0 && train_acc <= 1.0)) throw DomainError("train accuracy outside [0, 1]");
  const double v = mode == AccuracyMode::inverse ? train_acc / ratio : train_acc * ratio;
  return std::clamp(v, 0.0, 1.0);
}

double mae(std::span<const double> estimates, std::span<const double> truths) {
  if (estimates.size() != truths.size()) throw ShapeError("mae: series lengths differ");
  if (estimates.empty()) throw ValidationError("mae: empty series");
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) s += std::abs(estimates[i] - truths[i]);
  return s / static_cast<double>(estimates.size());
}

const std::string& estimator_csv_header() {
  static const std::string h =
      "epoch,train_loss,test_loss,train_acc,test_acc,est_l1,est_l1_log,est_l2,est_l3,"
      "est_acc_l1,est_acc_l2,est_acc_l3";
  return h;
}

void write_estimator_csv_header(std::ostream& os) { os << estimator_csv_header() << '\n'; }

void write_estimator_csv_row(std::ostream& os, const EstimatorReport& r) {
  os << std::setprecision(17) << r.epoch << ',' << r.train_loss << ',' << r.test_loss << ','
     << r.train_acc << ',' << r.test_acc << ',' << r.est_l1 << ',' << r.est_l1_log << ','
     << r.est_l2 << ',' << r.est_l3 << ',' << r.est_acc_l1 << ',' << r.est_acc_l2 << ','
     << r.est_acc_l3 << '\n';
}

EstimatorSummary summarize(std::span<const EstimatorReport> reports) {
  std::vector<double> test_loss, test_acc, train_loss, train_acc, l1, l1_log, l2, l3, a1, a2, a3;
  for (const auto& r : reports) {
    if (r.epoch == 0) continue;
    test_loss.push_back(r.test_loss);
    test_acc.push_back(r.test_acc);
    train_loss.push_back(r.train_loss);
    train_acc.push_back(r.train_acc);
    l1.push_back(r.est_l1);
    l1_log.push_back(r.est_l1_log);
    l2.push_back(r.est_l2);
    l3.push_back(r.est_l3);
    a1.push_back(r.est_acc_l1);
    a2.push_back(r.est_acc_l2);
    a3.push_back(r.est_acc_l3);
  }
  EstimatorSummary s;
  s.epochs = test_loss.size();
  if (s.epochs == 0) return s;
  s.mae_loss_baseline = mae(train_loss, test_loss);
  s.mae_loss_l1 = mae(l1, test_loss);
  s.mae_loss_l1_log = mae(l1_log, test_loss);
  s.mae_loss_l2 = mae(l2, test_loss);
  s.mae_loss_l3 = mae(l3, test_loss);
  s.mae_acc_baseline = mae(train_acc, test_acc);
  s.mae_acc_l1 = mae(a1, test_acc);
  s.mae_acc_l2 = mae(a2, test_acc);
  s.mae_acc_l3 = mae(a3, test_acc);
  return s;
}

void write_summary_csv(std::ostream& os, const EstimatorSummary& s) {
  os << "estimator,mae_cross_entropy,mae_accuracy\n" << std::setprecision(17);
  os << "baseline," << s.mae_loss_baseline << ',' << s.mae_acc_baseline << '\n';
  os << "l1," << s.mae_loss_l1 << ',' << s.mae_acc_l1 << '\n';
  os << "l1_log," << s.mae_loss_l1_log << ',' << s.mae_acc_l1 << '\n';
  os << "l2," << s.mae_loss_l2 << ',' << s.mae_acc_l2 << '\n';
  os << "l3," << s.mae_loss_l3 << ',' << s.mae_acc_l3 << '\n';
}

}  // namespace tansens
