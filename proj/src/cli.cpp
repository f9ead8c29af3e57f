#include "tansens/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "tansens/error.hpp"
#include "tansens/sensitivity.hpp"

namespace tansens::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kMaxMatrixEntries = 1e7;

std::string epoch_name(std::size_t epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(4) << std::setfill('0') << epoch;
  return os.str();
}

void prepare_output_dir(const fs::path& dir) {
  if (dir.empty()) throw ValidationError("output_dir is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ValidationError("output_dir: cannot create '" + dir.string() + "'");
  }
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream p(probe);
    if (!p) throw ValidationError("output_dir: '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

// Tracks the files a command produced, relative to its output directory.
class Artifacts {
 public:
  explicit Artifacts(fs::path root) : root_(std::move(root)) {}
  fs::path add(const fs::path& relative) {
    files_.push_back(relative.generic_string());
    return root_ / relative;
  }
  void write_manifest(const std::string& command, const json& parameters) const {
    std::vector<std::string> files = files_;
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    json m;
    m["tool"] = "tansens";
    m["command"] = command;
    m["parameters"] = parameters;
    m["files"] = files;
    std::ofstream os = open_out(root_ / "manifest.json");
    os << m.dump(2) << '\n';
  }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

json data_json(const DatasetSource& d) {
  json j;
  j["kind"] = d.kind;
  if (d.kind == "synthetic") {
    j["synthetic_dim"] = d.synthetic_dim;
    j["synthetic_classes"] = d.synthetic_classes;
    j["synthetic_train"] = d.synthetic_train;
    j["synthetic_test"] = d.synthetic_test;
    j["synthetic_scale"] = d.synthetic_scale;
  } else {
    j["dir"] = d.dir.string();
  }
  j["train_size"] = d.train_size;
  j["test_size"] = d.test_size;
  j["standardize"] = d.standardize;
  j["seed"] = d.seed;
  return j;
}

json train_json(const TrainCommand& cmd) {
  const auto& e = cmd.experiment;
  json j;
  j["hidden"] = e.hidden;
  j["use_bias"] = e.use_bias;
  j["batch_size"] = e.train.batch_size;
  j["learning_rate"] = e.train.learning_rate;
  j["weight_decay"] = e.train.weight_decay;
  j["epochs"] = e.train.epochs;
  j["seed"] = e.train.seed;
  j["shuffle"] = e.train.shuffle;
  j["optimizer"] = e.train.optimizer == Optimizer::adam ? "adam" : "sgd";
  j["analysis"] = {{"bounds", e.analysis.bounds},
                   {"estimators", e.analysis.estimators},
                   {"histograms", e.analysis.histograms},
                   {"sens_sample", e.analysis.sens_sample},
                   {"accuracy_mode",
                    e.analysis.accuracy_mode == AccuracyMode::inverse ? "inverse" : "direct"}};
  j["data"] = data_json(cmd.data);
  j["checkpoint_format"] = cmd.checkpoint_format == ParamsFormat::json ? "json" : "binary";
  return j;
}

void print_summary(std::ostream& os, const EstimatorSummary& s) {
  os << "MAE over " << s.epochs << " epochs (cross-entropy / accuracy)\n";
  os << std::scientific << std::setprecision(3);
  os << "  baseline (train value)   " << s.mae_loss_baseline << " / " << s.mae_acc_baseline << '\n';
  os << "  layer-wise norm          " << s.mae_loss_l1 << " / -\n";
  os << "  layer-wise log-norm      " << s.mae_loss_l1_log << " / " << s.mae_acc_l1 << '\n';
  os << "  maximal sensitivity      " << s.mae_loss_l2 << " / " << s.mae_acc_l2 << '\n';
  os << "  empirical sensitivity    " << s.mae_loss_l3 << " / " << s.mae_acc_l3 << '\n';
  os << std::defaultfloat;
}

}  // namespace

ExperimentResult cmd_train(const TrainCommand& cmd, std::ostream& log,
                           const std::string& command_name) {
  cmd.experiment.train.validate();
  for (std::size_t w : cmd.experiment.hidden) {
    if (w == 0) throw ValidationError("network.hidden: layer widths must be >= 1");
  }
  cmd.data.validate();
  prepare_output_dir(cmd.output_dir);

  const DatasetPair data = load_datasets(cmd.data);
  log << "data: " << data.train.name << " train " << data.train.size() << "x" << data.train.dim()
      << ", test " << data.test.size() << "x" << data.test.dim() << '\n';

  Artifacts art(cmd.output_dir);
  std::ofstream training = open_out(art.add("training.csv"));
  training << "epoch,train_loss,test_loss,train_acc,test_acc\n" << std::setprecision(17);
  std::ofstream metrics = open_out(art.add("metrics.csv"));
  write_estimator_csv_header(metrics);
  json bounds = json::array();
  const auto& an = cmd.experiment.analysis;
  const char* ext = cmd.checkpoint_format == ParamsFormat::json ? ".json" : ".bin";

  auto on_epoch = [&](const EpochAnalysis& e) {
    const fs::path ckpt = art.add(fs::path("checkpoints") / (epoch_name(e.epoch) + ext));
    fs::create_directories(ckpt.parent_path());
    save_params(ckpt, e.params, cmd.checkpoint_format);
    training << e.epoch << ',' << e.metrics.train.loss << ',' << e.metrics.test.loss << ','
             << e.metrics.train.accuracy << ',' << e.metrics.test.accuracy << '\n';
    if (e.epoch > 0) {
      EstimatorReport r;
      if (e.report) {
        r = *e.report;
      } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        r.epoch = e.epoch;
        r.train_loss = e.metrics.train.loss;
        r.test_loss = e.metrics.test.loss;
        r.train_acc = e.metrics.train.accuracy;
        r.test_acc = e.metrics.test.accuracy;
        r.est_l1 = r.est_l1_log = r.est_l2 = r.est_l3 = nan;
        r.est_acc_l1 = r.est_acc_l2 = r.est_acc_l3 = nan;
      }
      write_estimator_csv_row(metrics, r);
    }
    if (e.bounds) {
      json b = e.bounds->to_json();
      b["epoch"] = e.epoch;
      if (e.report) {
        for (const auto& [k, v] : e.report->components) b["estimator_components"][k] = finite_or_null(v);
      }
      bounds.push_back(std::move(b));
    }
    if (an.histograms && e.train_stats && e.test_stats) {
      std::ofstream h = open_out(art.add(fs::path("histograms") / (epoch_name(e.epoch) + ".csv")));
      write_active_histograms_csv(h, *e.train_stats, *e.test_stats, an.histogram_bin_width);
    }
    log << "epoch " << e.epoch << "  train loss " << e.metrics.train.loss << "  test loss "
        << e.metrics.test.loss << "  train acc " << e.metrics.train.accuracy << "  test acc "
        << e.metrics.test.accuracy << '\n';
  };

  ExperimentResult result = run_experiment(cmd.experiment, data, on_epoch);
  if (an.bounds) {
    std::ofstream b = open_out(art.add("bounds.json"));
    b << bounds.dump(2) << '\n';
  }
  if (an.estimators && result.summary.epochs > 0) {
    std::ofstream s = open_out(art.add("summary.csv"));
    write_summary_csv(s, result.summary);
    print_summary(log, result.summary);
  }
  training.close();
  metrics.close();
  json params = train_json(cmd);
  params["layer_sizes"] = result.spec.layer_sizes;
  art.write_manifest(command_name, params);
  return result;
}

void cmd_analyze(const AnalyzeCommand& cmd, std::ostream& log) {
  if (cmd.checkpoint.empty()) throw ValidationError("analyze.checkpoint is required");
  if (!fs::exists(cmd.checkpoint)) {
    throw ValidationError("analyze.checkpoint: '" + cmd.checkpoint.string() + "' does not exist");
  }
  cmd.data.validate();
  prepare_output_dir(cmd.output_dir);
  const Params params = load_params(cmd.checkpoint);
  params.check_consistent();
  const DatasetPair data = load_datasets(cmd.data);
  if (data.train.dim() != params.spec.input_dim()) {
    throw ValidationError("checkpoint expects " + std::to_string(params.spec.input_dim()) +
                          " inputs, dataset has " + std::to_string(data.train.dim()));
  }
  if (cmd.sample_index >= data.train.size()) {
    throw ValidationError("analyze.sample_index out of range");
  }
  const Vector x = sample_row(data.train.inputs, static_cast<Eigen::Index>(cmd.sample_index));
  Artifacts art(cmd.output_dir);
  log << "network " << to_string(params.spec) << '\n';

  const bool need_frob = cmd.sensitivity || cmd.hoeffding_epsilon >= 0.0;
  FrobeniusSummary frob;
  if (need_frob) frob = mean_frobenius_sq(params, data.train.inputs, cmd.threads);

  if (cmd.sensitivity) {
    const double entries =
        static_cast<double>(params.spec.weight_count()) * static_cast<double>(params.spec.input_dim());
    json j;
    j["sample_index"] = cmd.sample_index;
    j["sample_frobenius_sq"] = sensitivity_frobenius_sq(params, x);
    j["mean_frobenius_sq"] = frob.mean;
    j["max_frobenius_sq"] = frob.max;
    j["samples"] = frob.samples;
    if (entries <= kMaxMatrixEntries) {
      const SensitivityMatrix s = tangent_sample_sensitivity(params, x);
      std::ofstream c = open_out(art.add("sensitivity.csv"));
      write_sensitivity_csv(c, s);
      std::ofstream b = open_out(art.add("sensitivity.bin"));
      write_sensitivity_binary(b, s);
      j["boundary_point"] = s.boundary_point;
    } else {
      log << "sensitivity matrix has " << entries << " entries; only norms are written\n";
    }
    std::ofstream o = open_out(art.add("sensitivity.json"));
    o << j.dump(2) << '\n';
    log << "mean ||Sens||_F^2 " << frob.mean << ", max " << frob.max << '\n';
  }

  ActiveNodeStats tr_stats, te_stats;
  if (cmd.bounds || cmd.region_stats) {
    tr_stats = active_node_stats(params, data.train.inputs, 0.0, cmd.threads);
    te_stats = active_node_stats(params, data.test.inputs, 0.0, cmd.threads);
  }
  if (cmd.bounds) {
    json j = make_bound_report(params, tr_stats).to_json();
    j["max_region_count"] = max_region_count(params.spec).str();
    std::ofstream o = open_out(art.add("bounds.json"));
    o << j.dump(2) << '\n';
    log << "eq1 tight " << j["eq1_tight_value"] << ", eq1 " << j["eq1_value"] << ", eq2 "
        << j["eq2_value"] << '\n';
  }
  if (cmd.region_stats) {
    std::ofstream h = open_out(art.add("active_histograms.csv"));
    write_active_histograms_csv(h, tr_stats, te_stats);
    const EmpiricalSensitivity e_tr = empirical_tangent_sensitivity(params, data.train.inputs);
    const EmpiricalSensitivity e_te = empirical_tangent_sensitivity(params, data.test.inputs);
    std::ofstream p = open_out(art.add("patterns_train.csv"));
    write_patterns_csv(p, e_tr);
    json j;
    j["train"] = {{"mu", tr_stats.mu}, {"sigma", tr_stats.sigma},
                  {"regions", e_tr.patterns.size()}, {"empirical_sensitivity", e_tr.value}};
    j["test"] = {{"mu", te_stats.mu}, {"sigma", te_stats.sigma},
                 {"regions", e_te.patterns.size()}, {"empirical_sensitivity", e_te.value}};
    j["hidden_neurons"] = tr_stats.hidden_neurons;
    std::ofstream o = open_out(art.add("region_stats.json"));
    o << j.dump(2) << '\n';
    log << "regions: train " << e_tr.patterns.size() << ", test " << e_te.patterns.size() << '\n';
  }
  if (cmd.margins) {
    std::ofstream m = open_out(art.add("margins.csv"));
    write_margins_csv(m, params.spec, neuron_margins(params, data.train.inputs));
  }
  if (cmd.hoeffding_epsilon >= 0.0) {
    json j;
    j["epsilon"] = cmd.hoeffding_epsilon;
    j["samples"] = frob.samples;
    j["sens_max_f"] = frob.max;
    j["tail"] = frob.max > 0.0 ? json(hoeffding_tail(cmd.hoeffding_epsilon, frob.samples, frob.max))
                               : json();
    std::ofstream o = open_out(art.add("hoeffding.json"));
    o << j.dump(2) << '\n';
  }
  if (cmd.constancy) {
    const ConstancyReport r =
        region_constancy_check(params, x, cmd.constancy_trials, cmd.constancy_radius, cmd.seed);
    json j;
    j["trials"] = r.trials;
    j["in_region"] = r.in_region;
    j["fraction_in_region"] = r.fraction_in_region();
    j["violations"] = r.violations;
    j["max_abs_diff"] = r.max_abs_diff;
    j["inconclusive"] = r.inconclusive;
    j["passed"] = r.passed();
    std::ofstream o = open_out(art.add("constancy.json"));
    o << j.dump(2) << '\n';
    log << "constancy: " << r.in_region << "/" << r.trials << " in region, " << r.violations
        << " violations\n";
  }
  if (cmd.oracle_check) {
    const SensitivityMatrix a = tangent_sample_sensitivity(params, x);
    const SensitivityMatrix b = path_enumeration_sensitivity(params, x);
    const double diff = (a.entries - b.entries).cwiseAbs().maxCoeff();
    json j;
    j["paths"] = params.spec.path_count();
    j["max_abs_diff"] = diff;
    j["max_abs_entry"] = a.entries.cwiseAbs().maxCoeff();
    std::ofstream o = open_out(art.add("oracle_check.json"));
    o << j.dump(2) << '\n';
    log << "oracle check: max |layerwise - paths| = " << diff << '\n';
  }

  json p;
  p["checkpoint"] = cmd.checkpoint.string();
  p["data"] = data_json(cmd.data);
  p["sample_index"] = cmd.sample_index;
  p["flags"] = {{"sensitivity", cmd.sensitivity}, {"bounds", cmd.bounds},
                {"region_stats", cmd.region_stats}, {"margins", cmd.margins},
                {"constancy", cmd.constancy}, {"oracle_check", cmd.oracle_check},
                {"hoeffding_epsilon", cmd.hoeffding_epsilon}};
  art.write_manifest("analyze", p);
}

void SweepCommand::validate() const {
  static const std::vector<std::string> vars{"mu", "sigma", "wmax", "width", "depth"};
  if (std::find(vars.begin(), vars.end(), variable) == vars.end()) {
    throw ValidationError("sweep.variable must be one of mu, sigma, wmax, width, depth");
  }
  if (steps == 0) throw ValidationError("sweep.steps: empty range");
  if (!std::isfinite(from) || !std::isfinite(to)) throw ValidationError("sweep range must be finite");
  if (log_spaced && !(from > 0.0 && to > 0.0)) {
    throw ValidationError("sweep: log-spaced ranges need positive endpoints");
  }
  if ((variable == "width" || variable == "depth") && !(std::min(from, to) >= 1.0)) {
    throw ValidationError("sweep: width and depth values must be >= 1");
  }
  if ((variable == "sigma" || variable == "wmax") && !(std::min(from, to) > 0.0)) {
    throw ValidationError("sweep: sigma and wmax values must be > 0");
  }
  if (width == 0 || depth == 0 || d_in == 0 || d_out == 0) {
    throw ValidationError("sweep: width, depth, d_in and d_out must be >= 1");
  }
}

std::vector<SweepRow> sweep_rows(const SweepCommand& cmd) {
  cmd.validate();
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < cmd.steps; ++i) {
    const double t = cmd.steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(cmd.steps - 1);
    double v = cmd.log_spaced ? std::exp(std::log(cmd.from) + t * (std::log(cmd.to) - std::log(cmd.from)))
                              : cmd.from + t * (cmd.to - cmd.from);
    if (cmd.variable == "width" || cmd.variable == "depth") v = std::round(v);

    SweepRow r;
    r.variable = cmd.variable;
    r.value = v;
    r.width = cmd.variable == "width" ? static_cast<std::size_t>(v) : cmd.width;
    r.depth = cmd.variable == "depth" ? static_cast<std::size_t>(v) : cmd.depth;
    r.w_max = cmd.variable == "wmax" ? v : cmd.w_max;
    const double w = static_cast<double>(r.width);
    r.mu = cmd.variable == "mu" ? v : (cmd.mu >= 0.0 ? cmd.mu : cmd.mu_fraction * w);
    r.sigma = cmd.variable == "sigma" ? v : (cmd.sigma > 0.0 ? cmd.sigma : cmd.sigma_fraction * w);

    NetworkSpec spec;
    spec.use_bias = false;
    spec.layer_sizes.push_back(cmd.d_in);
    for (std::size_t h = 1; h < r.depth; ++h) spec.layer_sizes.push_back(r.width);
    spec.layer_sizes.push_back(cmd.d_out);

    Eq2Inputs in;
    in.n_theta = static_cast<double>(spec.weight_count());
    in.d_in = static_cast<double>(cmd.d_in);
    in.k = r.depth;
    in.mu = r.mu;
    in.sigma = r.sigma;
    in.layer_max.assign(r.depth, r.w_max);
    const Eq2Result e = bound_eq2(in);
    r.n_theta = in.n_theta;
    r.d_in = in.d_in;
    r.eq2 = e.value;
    r.log10_eq2 = e.log_value / std::log(10.0);
    r.eq2_proof_variant = e.proof_variant;
    r.log10_eq2_proof_variant = e.log_proof_variant / std::log(10.0);
    rows.push_back(r);
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "variable,value,depth,width,n_theta,d_in,mu,sigma,w_max,eq2,log10_eq2,eq2_proof_variant,"
        "log10_eq2_proof_variant\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.variable << ',' << r.value << ',' << r.depth << ',' << r.width << ',' << r.n_theta << ','
       << r.d_in << ',' << r.mu << ',' << r.sigma << ',' << r.w_max << ',' << r.eq2 << ','
       << r.log10_eq2 << ',' << r.eq2_proof_variant << ',' << r.log10_eq2_proof_variant << '\n';
  }
}

namespace {

json sweep_json(const SweepCommand& c) {
  return {{"variable", c.variable}, {"from", c.from},   {"to", c.to},
          {"steps", c.steps},       {"log", c.log_spaced}, {"width", c.width},
          {"depth", c.depth},       {"d_in", c.d_in},   {"d_out", c.d_out},
          {"w_max", c.w_max},       {"mu_fraction", c.mu_fraction},
          {"sigma_fraction", c.sigma_fraction}, {"mu", c.mu}, {"sigma", c.sigma}};
}

fs::path write_sweep(const SweepCommand& cmd, Artifacts& art) {
  const auto rows = sweep_rows(cmd);
  const fs::path rel = "sweep_" + cmd.variable + ".csv";
  std::ofstream os = open_out(art.add(rel));
  write_sweep_csv(os, rows);
  return rel;
}

}  // namespace

fs::path cmd_sweep(const SweepCommand& cmd, const fs::path& output_dir, std::ostream& log) {
  cmd.validate();
  prepare_output_dir(output_dir);
  Artifacts art(output_dir);
  const fs::path rel = write_sweep(cmd, art);
  art.write_manifest("sweep", sweep_json(cmd));
  log << "wrote " << (output_dir / rel).string() << '\n';
  return output_dir / rel;
}

std::vector<SweepCommand> fig2_presets() {
  SweepCommand base;  // width 1000, depth 5, w_max 0.1, mu = 0.48 N, sigma = 0.04 N
  std::vector<SweepCommand> out;
  SweepCommand mu = base;
  mu.variable = "mu";
  mu.from = 50.0;
  mu.to = 950.0;
  mu.steps = 19;
  out.push_back(mu);
  SweepCommand sigma = base;
  sigma.variable = "sigma";
  sigma.from = 10.0;
  sigma.to = 200.0;
  sigma.steps = 20;
  out.push_back(sigma);
  SweepCommand wmax = base;
  wmax.variable = "wmax";
  wmax.from = 0.01;
  wmax.to = 1.0;
  wmax.steps = 21;
  wmax.log_spaced = true;
  out.push_back(wmax);
  SweepCommand width = base;
  width.variable = "width";
  width.from = 100.0;
  width.to = 2000.0;
  width.steps = 20;
  out.push_back(width);
  SweepCommand depth = base;
  depth.variable = "depth";
  depth.from = 2.0;
  depth.to = 40.0;
  depth.steps = 39;
  out.push_back(depth);
  return out;
}

std::vector<fs::path> cmd_reproduce_fig2(const fs::path& output_dir, std::ostream& log) {
  prepare_output_dir(output_dir);
  Artifacts art(output_dir);
  std::vector<fs::path> files;
  json presets = json::array();
  for (const auto& p : fig2_presets()) {
    files.push_back(output_dir / write_sweep(p, art));
    presets.push_back(sweep_json(p));
    log << "wrote " << files.back().string() << '\n';
  }
  art.write_manifest("reproduce-fig2", {{"presets", presets}});
  return files;
}

namespace {

void add_data_options(CLI::App* app, DatasetSource& d) {
  app->add_option("--dataset", d.kind, "cifar10, mnist or synthetic")
      ->check(CLI::IsMember({"cifar10", "mnist", "synthetic"}));
  app->add_option("--data-dir", d.dir, "Dataset directory")->envname(kDataDirEnv);
  app->add_option("--synthetic-dim", d.synthetic_dim, "Synthetic input dimension");
  app->add_option("--synthetic-classes", d.synthetic_classes, "Synthetic class count");
  app->add_option("--synthetic-train", d.synthetic_train, "Synthetic training samples");
  app->add_option("--synthetic-test", d.synthetic_test, "Synthetic test samples");
  app->add_option("--synthetic-scale", d.synthetic_scale, "Std of the synthetic class means");
  app->add_option("--train-size", d.train_size, "Stratified training subsample (0 = all)");
  app->add_option("--test-size", d.test_size, "Stratified test subsample (0 = all)");
  app->add_flag("--standardize", d.standardize, "Standardize features with training statistics");
  app->add_option("--data-seed", d.seed, "Seed for synthetic data and subsampling");
}

struct TrainFlags {
  std::string optimizer = "sgd";
  std::string accuracy_mode = "inverse";
  std::string checkpoint_format = "binary";
  bool no_bias = false;
  bool no_shuffle = false;
  bool no_bounds = false;
  bool no_estimators = false;
  bool no_histograms = false;
};

void add_train_options(CLI::App* app, TrainCommand& t, TrainFlags& f) {
  auto& e = t.experiment;
  app->add_option("--hidden", e.hidden, "Hidden layer widths")->delimiter(',');
  app->add_flag("--no-bias", f.no_bias, "Biasless network");
  app->add_option("--batch-size", e.train.batch_size, "Minibatch size");
  app->add_option("--lr", e.train.learning_rate, "Learning rate");
  app->add_option("--weight-decay", e.train.weight_decay, "L2 weight decay");
  app->add_option("--epochs", e.train.epochs, "Training epochs");
  app->add_option("--seed", e.train.seed, "Initialisation and shuffling seed");
  app->add_flag("--no-shuffle", f.no_shuffle, "Keep the sample order fixed");
  app->add_option("--optimizer", f.optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}));
  app->add_flag("--no-bounds", f.no_bounds, "Skip per-epoch bound reports");
  app->add_flag("--no-estimators", f.no_estimators, "Skip the test-loss estimators");
  app->add_flag("--no-histograms", f.no_histograms, "Skip active-neuron histograms");
  app->add_option("--sens-sample", e.analysis.sens_sample,
                  "Training rows used for the empirical sensitivity (0 = all)");
  app->add_option("--accuracy-mode", f.accuracy_mode, "inverse or direct")
      ->check(CLI::IsMember({"inverse", "direct"}));
  app->add_option("--bin-width", e.analysis.histogram_bin_width, "Histogram bin width (0 = auto)");
  app->add_option("--checkpoint-format", f.checkpoint_format, "binary or json")
      ->check(CLI::IsMember({"binary", "json"}));
  app->add_option("-o,--output-dir", t.output_dir, "Output directory")->required();
  add_data_options(app, t.data);
}

void apply_train_flags(TrainCommand& t, const TrainFlags& f) {
  auto& e = t.experiment;
  e.use_bias = !f.no_bias;
  e.train.shuffle = !f.no_shuffle;
  e.train.optimizer = f.optimizer == "adam" ? Optimizer::adam : Optimizer::sgd;
  e.analysis.bounds = !f.no_bounds;
  e.analysis.estimators = !f.no_estimators;
  e.analysis.histograms = !f.no_histograms;
  e.analysis.accuracy_mode = f.accuracy_mode == "direct" ? AccuracyMode::direct : AccuracyMode::inverse;
  t.checkpoint_format = f.checkpoint_format == "json" ? ParamsFormat::json : ParamsFormat::binary;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tangent sensitivity of ReLU networks: training, analysis and bound sweeps",
               "tansens"};
  app.set_config("--config", "", "Read options from a TOML/INI file (flags win)");
  app.require_subcommand(1);

  TrainCommand train_cmd;
  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "Train a network and track bounds and estimators");
  add_train_options(train, train_cmd, train_flags);

  TrainCommand cifar_cmd;
  TrainFlags cifar_flags;
  cifar_cmd.data.kind = "cifar10";
  cifar_cmd.data.train_size = 10000;
  cifar_cmd.data.test_size = 2000;
  cifar_cmd.experiment.train.epochs = 20;
  auto* cifar = app.add_subcommand(
      "reproduce-cifar", "Desk-scale CIFAR-10 run: 4x100 MLP, SGD 0.05 / 0.0005 / 64");
  add_train_options(cifar, cifar_cmd, cifar_flags);

  AnalyzeCommand an;
  auto* analyze = app.add_subcommand("analyze", "Sensitivity, bounds and region statistics of a checkpoint");
  analyze->add_option("checkpoint", an.checkpoint, "Parameter file")->required();
  analyze->add_option("-o,--output-dir", an.output_dir, "Output directory")->required();
  analyze->add_option("--sample-index", an.sample_index, "Training row used for per-sample outputs");
  analyze->add_option("--threads", an.threads, "Worker threads");
  analyze->add_flag("--sensitivity", an.sensitivity, "Sensitivity matrix and norms");
  analyze->add_flag("--bounds", an.bounds, "Bound report");
  analyze->add_flag("--region-stats", an.region_stats, "Active-neuron and region statistics");
  analyze->add_flag("--margins", an.margins, "Per-neuron margins");
  analyze->add_flag("--constancy", an.constancy, "Region constancy check");
  analyze->add_flag("--oracle-check", an.oracle_check, "Compare with path enumeration");
  analyze->add_option("--hoeffding", an.hoeffding_epsilon, "Hoeffding tail at this epsilon");
  analyze->add_option("--trials", an.constancy_trials, "Constancy perturbations");
  analyze->add_option("--radius", an.constancy_radius, "Constancy perturbation half-width");
  analyze->add_option("--seed", an.seed, "Constancy seed");
  add_data_options(analyze, an.data);

  SweepCommand sw;
  fs::path sweep_dir;
  auto* sweep = app.add_subcommand("sweep", "Normal-approximation bound along one variable");
  sweep->add_option("--variable", sw.variable, "mu, sigma, wmax, width or depth")->required();
  sweep->add_option("--from", sw.from, "First value")->required();
  sweep->add_option("--to", sw.to, "Last value")->required();
  sweep->add_option("--steps", sw.steps, "Number of points");
  sweep->add_flag("--log", sw.log_spaced, "Geometric spacing");
  sweep->add_option("--width", sw.width, "Hidden layer width");
  sweep->add_option("--depth", sw.depth, "Number of weight layers k");
  sweep->add_option("--d-in", sw.d_in, "Input dimension");
  sweep->add_option("--d-out", sw.d_out, "Output dimension");
  sweep->add_option("--wmax", sw.w_max, "Per-layer maximal absolute weight");
  sweep->add_option("--mu", sw.mu, "Mean active-neuron count (default: fraction of width)");
  sweep->add_option("--sigma", sw.sigma, "Std of the active-neuron count");
  sweep->add_option("--mu-fraction", sw.mu_fraction, "mu as a fraction of width");
  sweep->add_option("--sigma-fraction", sw.sigma_fraction, "sigma as a fraction of width");
  sweep->add_option("-o,--output-dir", sweep_dir, "Output directory")->required();

  fs::path fig2_dir;
  auto* fig2 = app.add_subcommand("reproduce-fig2", "The five preset bound sweeps");
  fig2->add_option("-o,--output-dir", fig2_dir, "Output directory")->required();

  auto* urls = app.add_subcommand("data-urls", "Print where the datasets are published");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (*train) {
    apply_train_flags(train_cmd, train_flags);
    cmd_train(train_cmd, out);
  } else if (*cifar) {
    apply_train_flags(cifar_cmd, cifar_flags);
    cmd_train(cifar_cmd, out, "reproduce-cifar");
  } else if (*analyze) {
    cmd_analyze(an, out);
  } else if (*sweep) {
    cmd_sweep(sw, sweep_dir, out);
  } else if (*fig2) {
    cmd_reproduce_fig2(fig2_dir, out);
  } else if (*urls) {
    for (const auto& [name, url] : dataset_urls()) out << name << ' ' << url << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const PathLimitError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace tansens::cli
