#pragma once

// Training run with per-epoch bound, statistics and estimator evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tansens/bounds.hpp"
#include "tansens/data_io.hpp"
#include "tansens/estimators.hpp"
#include "tansens/region_stats.hpp"
#include "tansens/trainer.hpp"

namespace tansens {

struct DatasetSource {
  /// "cifar10", "mnist" or "synthetic".
  std::string kind = "synthetic";
  std::filesystem::path dir;
  std::size_t synthetic_dim = 3072;
  std::size_t synthetic_classes = 10;
  std::size_t synthetic_train = 1000;
  std::size_t synthetic_test = 200;
  double synthetic_scale = 1.0;
  /// Stratified subsample sizes; 0 keeps the whole split.
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  /// Per-feature standardisation fitted on the training split.
  bool standardize = false;
  std::uint64_t seed = 0;

  void validate() const;
};

DatasetPair load_datasets(const DatasetSource& source);

struct AnalysisOptions {
  bool bounds = true;
  bool estimators = true;
  bool histograms = true;
  /// Training rows used for the empirical sensitivity; 0 uses all of them.
  std::size_t sens_sample = 0;
  AccuracyMode accuracy_mode = AccuracyMode::inverse;
  double histogram_bin_width = 0.0;
};

struct ExperimentConfig {
  std::vector<std::size_t> hidden{100, 100, 100, 100};
  bool use_bias = true;
  TrainConfig train;
  AnalysisOptions analysis;
};

struct EpochAnalysis {
  std::size_t epoch = 0;
  const Params& params;
  const EpochMetrics& metrics;
  /// Present for epochs >= 1 when estimators are enabled.
  const EstimatorReport* report = nullptr;
  const BoundReport* bounds = nullptr;
  const ActiveNodeStats* train_stats = nullptr;
  const ActiveNodeStats* test_stats = nullptr;
};

struct ExperimentResult {
  NetworkSpec spec;
  std::vector<EstimatorReport> reports;
  std::vector<BoundReport> bounds;
  std::vector<EpochMetrics> metrics;
  EstimatorSummary summary;
  Params final_params;
};

/// Trains per `config` and evaluates everything requested after every epoch.
/// `on_epoch` (optional) sees each epoch's results as they are produced.
ExperimentResult run_experiment(const ExperimentConfig& config, const DatasetPair& data,
                                const std::function<void(const EpochAnalysis&)>& on_epoch = {});

}  // namespace tansens
