#pragma once

// Command implementations behind the `tansens` executable. Every command
// writes its artifacts under an output directory together with
// manifest.json; run() maps errors to exit codes (0 ok, 1 invalid input,
// 2 runtime or numeric failure).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tansens/checkpoint.hpp"
#include "tansens/experiment.hpp"

namespace tansens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Environment variable holding the default dataset directory.
inline constexpr const char* kDataDirEnv = "TANSENS_DATA_DIR";

struct TrainCommand {
  ExperimentConfig experiment;
  DatasetSource data;
  std::filesystem::path output_dir;
  ParamsFormat checkpoint_format = ParamsFormat::binary;
};

/// Writes checkpoints/epoch_NNNN.{bin,json}, training.csv, metrics.csv,
/// bounds.json, histograms/epoch_NNNN.csv, summary.csv and manifest.json.
ExperimentResult cmd_train(const TrainCommand& cmd, std::ostream& log,
                           const std::string& command_name = "train");

struct AnalyzeCommand {
  std::filesystem::path checkpoint;
  DatasetSource data;
  std::filesystem::path output_dir;
  std::size_t sample_index = 0;
  std::size_t threads = 1;
  bool sensitivity = false;
  bool bounds = false;
  bool region_stats = false;
  bool margins = false;
  bool constancy = false;
  bool oracle_check = false;
  /// Negative disables the Hoeffding diagnostic.
  double hoeffding_epsilon = -1.0;
  std::size_t constancy_trials = 1000;
  double constancy_radius = 1e-3;
  std::uint64_t seed = 0;
};

void cmd_analyze(const AnalyzeCommand& cmd, std::ostream& log);

struct SweepCommand {
  /// mu, sigma, wmax, width or depth.
  std::string variable = "sigma";
  double from = 0.0;
  double to = 0.0;
  std::size_t steps = 1;
  bool log_spaced = false;

  std::size_t width = 1000;
  std::size_t depth = 5;
  std::size_t d_in = 3072;
  std::size_t d_out = 10;
  double w_max = 0.1;
  /// Fractions of the layer width used when mu / sigma are not given.
  double mu_fraction = 0.48;
  double sigma_fraction = 0.04;
  /// Absolute values; negative means "use the fraction".
  double mu = -1.0;
  double sigma = -1.0;

  void validate() const;
};

struct SweepRow {
  std::string variable;
  double value = 0.0;
  std::size_t depth = 0;
  std::size_t width = 0;
  double n_theta = 0.0;
  double d_in = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double w_max = 0.0;
  double eq2 = 0.0;
  double log10_eq2 = 0.0;
  double eq2_proof_variant = 0.0;
  double log10_eq2_proof_variant = 0.0;
};

std::vector<SweepRow> sweep_rows(const SweepCommand& cmd);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

/// Writes sweep_<variable>.csv and manifest.json under `output_dir`.
std::filesystem::path cmd_sweep(const SweepCommand& cmd, const std::filesystem::path& output_dir,
                                std::ostream& log);

/// The five preset sweeps (mu, sigma, wmax, width, depth).
std::vector<SweepCommand> fig2_presets();
std::vector<std::filesystem::path> cmd_reproduce_fig2(const std::filesystem::path& output_dir,
                                                      std::ostream& log);

/// Full argument parsing and dispatch; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tansens::cli
