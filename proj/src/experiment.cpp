#include "tansens/experiment.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "tansens/error.hpp"

namespace tansens {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Estimators with undefined ratios (zero spread, bounds below 1) yield NaN
// rather than aborting the run.
template <typename Fn>
double or_nan(Fn&& fn) {
  try {
    return fn();
  } catch (const DomainError&) {
    return kNaN;
  }
}

double accuracy_or_nan(double ratio, double train_acc, AccuracyMode mode) {
  if (!std::isfinite(ratio) || !(ratio > 0.0)) return kNaN;
  return estimate_accuracy(ratio, train_acc, mode);
}

}  // namespace

void DatasetSource::validate() const {
  if (kind == "synthetic") {
    if (synthetic_dim == 0) throw ValidationError("dataset.synthetic_dim must be >= 1");
    if (synthetic_classes < 2) throw ValidationError("dataset.synthetic_classes must be >= 2");
    if (synthetic_train < synthetic_classes || synthetic_test < synthetic_classes) {
      throw ValidationError("dataset.synthetic_train/test must be >= synthetic_classes");
    }
    return;
  }
  if (kind != "cifar10" && kind != "mnist") {
    throw ValidationError("dataset.kind must be cifar10, mnist or synthetic (got '" + kind + "')");
  }
  if (dir.empty()) throw ValidationError("dataset.dir is required for " + kind);
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("dataset.dir: '" + dir.string() + "' is not a directory");
  }
}

DatasetPair load_datasets(const DatasetSource& source) {
  source.validate();
  DatasetPair data;
  if (source.kind == "cifar10") {
    data = load_cifar10(source.dir);
  } else if (source.kind == "mnist") {
    data = load_mnist(source.dir);
  } else {
    data.train = synthetic_gaussian(source.synthetic_dim, source.synthetic_classes,
                                    source.synthetic_train, source.seed, source.synthetic_scale);
    data.train.split = "train";
    // Same class means, independent noise.
    Dataset test = synthetic_gaussian(source.synthetic_dim, source.synthetic_classes,
                                      source.synthetic_train + source.synthetic_test, source.seed,
                                      source.synthetic_scale);
    data.test.name = test.name;
    data.test.split = "test";
    data.test.num_classes = test.num_classes;
    const auto tr = static_cast<Eigen::Index>(source.synthetic_train);
    const auto te = static_cast<Eigen::Index>(source.synthetic_test);
    data.test.inputs = test.inputs.bottomRows(te);
    data.test.labels.assign(test.labels.begin() + tr, test.labels.end());
  }
  if (source.train_size) data.train = subsample(data.train, source.train_size, source.seed);
  if (source.test_size) data.test = subsample(data.test, source.test_size, source.seed + 1);
  if (source.standardize) {
    const Standardizer s = fit_standardizer(data.train);
    apply_standardizer(s, data.train);
    apply_standardizer(s, data.test);
  }
  return data;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const DatasetPair& data,
                                const std::function<void(const EpochAnalysis&)>& on_epoch) {
  if (data.train.size() == 0 || data.test.size() == 0) {
    throw ValidationError("experiment needs nonempty train and test sets");
  }
  if (data.train.dim() != data.test.dim()) throw ShapeError("train and test dimensions differ");
  ExperimentResult result;
  NetworkSpec spec;
  spec.use_bias = config.use_bias;
  spec.layer_sizes.push_back(data.train.dim());
  spec.layer_sizes.insert(spec.layer_sizes.end(), config.hidden.begin(), config.hidden.end());
  spec.layer_sizes.push_back(std::max(data.train.num_classes, data.test.num_classes));
  spec.validate();
  result.spec = spec;

  const AnalysisOptions& an = config.analysis;
  InputMatrix sens_train = data.train.inputs;
  if (an.sens_sample && an.sens_sample < data.train.size()) {
    sens_train = subsample(data.train, an.sens_sample, config.train.seed).inputs;
  }

  auto hook = [&](const EpochState& st) {
    const bool need_stats = an.bounds || an.estimators || an.histograms;
    ActiveNodeStats tr_stats, te_stats;
    if (need_stats) {
      tr_stats = active_node_stats(st.params, data.train.inputs, an.histogram_bin_width);
      te_stats = active_node_stats(st.params, data.test.inputs, an.histogram_bin_width);
    }
    if (an.bounds) result.bounds.push_back(make_bound_report(st.params, tr_stats));

    EstimatorReport* report = nullptr;
    if (an.estimators && st.epoch > 0) {
      EstimatorReport r;
      r.epoch = st.epoch;
      r.train_loss = st.metrics.train.loss;
      r.test_loss = st.metrics.test.loss;
      r.train_acc = st.metrics.train.accuracy;
      r.test_acc = st.metrics.test.accuracy;

      const double ratio1 = or_nan([&] { return l1_ratio(st.previous, st.params); });
      const double ratio1_log = or_nan([&] { return l1_log_ratio(st.previous, st.params); });
      const double ratio2 =
          or_nan([&] { return l2_ratio(st.params.depth(), tr_stats, te_stats); });
      const EmpiricalSensitivity s_tr = empirical_tangent_sensitivity(st.params, sens_train);
      const EmpiricalSensitivity s_te = empirical_tangent_sensitivity(st.params, data.test.inputs);
      const double ratio3 = or_nan([&] { return l3_ratio(s_tr.value, s_te.value); });

      r.est_l1 = ratio1 * r.train_loss;
      r.est_l1_log = ratio1_log * r.train_loss;
      r.est_l2 = ratio2 * r.train_loss;
      r.est_l3 = ratio3 * r.train_loss;
      r.est_acc_l1 = accuracy_or_nan(ratio1_log, r.train_acc, an.accuracy_mode);
      r.est_acc_l2 = accuracy_or_nan(ratio2, r.train_acc, an.accuracy_mode);
      r.est_acc_l3 = accuracy_or_nan(ratio3, r.train_acc, an.accuracy_mode);
      r.components = {
          {"ratio_l1", ratio1},
          {"ratio_l1_log", ratio1_log},
          {"ratio_l2", ratio2},
          {"ratio_l3", ratio3},
          {"mu_train", tr_stats.mu},
          {"sigma_train", tr_stats.sigma},
          {"mu_test", te_stats.mu},
          {"sigma_test", te_stats.sigma},
          {"s_hat_train", s_tr.value},
          {"s_hat_test", s_te.value},
          {"regions_train", static_cast<double>(s_tr.patterns.size())},
          {"regions_test", static_cast<double>(s_te.patterns.size())},
      };
      result.reports.push_back(std::move(r));
      report = &result.reports.back();
    }
    result.metrics.push_back(st.metrics);
    if (on_epoch) {
      const EpochAnalysis ea{st.epoch,
                             st.params,
                             st.metrics,
                             report,
                             an.bounds ? &result.bounds.back() : nullptr,
                             need_stats ? &tr_stats : nullptr,
                             need_stats ? &te_stats : nullptr};
      on_epoch(ea);
    }
  };

  TrainResult tr = train(spec, data.train, data.test, config.train, {hook}, false);
  result.final_params = std::move(tr.checkpoints.back());
  result.summary = summarize(result.reports);
  return result;
}

}  // namespace tansens
