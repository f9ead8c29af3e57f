#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tansens/cli.hpp"

using namespace tansens;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("tansens_cli_" + std::to_string(counter++) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& s) const { return path_ / s; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "tansens");
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::vector<std::string> small_train(const fs::path& out) {
  return {"train",           "--hidden",          "6,5",  "--epochs",         "2",
          "--synthetic-dim", "4",                 "--synthetic-classes",  "3",
          "--synthetic-train", "90",              "--synthetic-test",     "30",
          "--batch-size",    "16",                "-o",   out.string()};
}

}  // namespace

TEST(Cli, HelpUrlsAndParseErrors) {
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
  const CliRun urls = run({"data-urls"});
  EXPECT_EQ(urls.code, cli::kExitOk);
  EXPECT_NE(urls.out.find("cifar-10-binary.tar.gz"), std::string::npos);
  EXPECT_EQ(run({}).code, cli::kExitValidation);
  EXPECT_EQ(run({"train"}).code, cli::kExitValidation);
  EXPECT_EQ(run({"train", "-o", "x", "--optimizer", "lbfgs"}).code, cli::kExitValidation);
  EXPECT_EQ(run({"bogus"}).code, cli::kExitValidation);
}

TEST(Cli, TrainWritesArtifacts) {
  TempDir dir;
  const CliRun r = run(small_train(dir / "run"));
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path o = dir / "run";
  for (const char* f : {"training.csv", "metrics.csv", "bounds.json", "summary.csv", "manifest.json",
                        "checkpoints/epoch_0000.bin", "checkpoints/epoch_0002.bin", "histograms/epoch_0001.csv"}) {
    EXPECT_TRUE(fs::exists(o / f)) << f;
  }
  EXPECT_EQ(first_line(o / "metrics.csv"),
            "epoch,train_loss,test_loss,train_acc,test_acc,est_l1,est_l1_log,est_l2,est_l3,"
            "est_acc_l1,est_acc_l2,est_acc_l3");
  EXPECT_EQ(first_line(o / "training.csv"), "epoch,train_loss,test_loss,train_acc,test_acc");
  EXPECT_EQ(first_line(o / "summary.csv"), "estimator,mae_cross_entropy,mae_accuracy");
  EXPECT_EQ(first_line(o / "histograms/epoch_0000.csv"),
            "scope,bin_lo,bin_hi,train_count,test_count,train_fraction,test_fraction");
  EXPECT_EQ(line_count(o / "metrics.csv"), 3u);
  EXPECT_EQ(line_count(o / "training.csv"), 4u);
  const auto bounds = nlohmann::json::parse(slurp(o / "bounds.json"));
  ASSERT_EQ(bounds.size(), 3u);
  EXPECT_TRUE(bounds[1].contains("eq1_tight_value"));
  EXPECT_TRUE(bounds[1]["components"].contains("w_max_i"));
  const auto manifest = nlohmann::json::parse(slurp(o / "manifest.json"));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["parameters"]["hidden"], (std::vector<int>{6, 5}));
  for (const auto& f : manifest["files"]) EXPECT_TRUE(fs::exists(o / f.get<std::string>())) << f;
}

TEST(Cli, RerunsAreByteIdentical) {
  TempDir dir;
  ASSERT_EQ(run(small_train(dir / "a")).code, 0);
  ASSERT_EQ(run(small_train(dir / "b")).code, 0);
  for (const char* f : {"training.csv", "metrics.csv", "bounds.json", "summary.csv",
                        "checkpoints/epoch_0002.bin", "histograms/epoch_0002.csv"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(Cli, ZeroEpochsGiveHeaderOnlyMetrics) {
  TempDir dir;
  auto args = small_train(dir / "z");
  args[4] = "0";
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(line_count(dir / "z" / "metrics.csv"), 1u);
  EXPECT_TRUE(fs::exists(dir / "z" / "checkpoints/epoch_0000.bin"));
  EXPECT_FALSE(fs::exists(dir / "z" / "checkpoints/epoch_0001.bin"));
}

TEST(Cli, ValidationErrorsNameTheField) {
  TempDir dir;
  auto args = small_train(dir / "v");
  args[14] = "0";
  const CliRun r = run(args);
  EXPECT_EQ(r.code, cli::kExitValidation);
  EXPECT_NE(r.err.find("train.batch_size"), std::string::npos) << r.err;
}

TEST(Cli, MissingDatasetFilesAreInputErrors) {
  TempDir dir;
  fs::create_directories(dir / "empty");
  ::setenv(cli::kDataDirEnv, (dir / "empty").c_str(), 1);
  const CliRun r = run({"train", "--dataset", "cifar10", "-o", (dir / "c").string()});
  ::unsetenv(cli::kDataDirEnv);
  EXPECT_EQ(r.code, cli::kExitValidation);
  EXPECT_NE(r.err.find("data_batch_1.bin"), std::string::npos) << r.err;
}

TEST(Cli, ConfigFileWithFlagOverride) {
  TempDir dir;
  std::ofstream(dir / "run.ini") << "[train]\nepochs = 1\nhidden = 3,3\nsynthetic-dim = 4\n"
                                    "synthetic-classes = 2\nsynthetic-train = 40\nsynthetic-test = 20\n";
  ASSERT_EQ(run({"--config", (dir / "run.ini").string(), "train", "-o", (dir / "a").string()}).code, 0);
  EXPECT_EQ(line_count(dir / "a" / "training.csv"), 3u);
  ASSERT_EQ(run({"--config", (dir / "run.ini").string(), "train", "--epochs", "2", "-o", (dir / "b").string()}).code,
            0);
  EXPECT_EQ(line_count(dir / "b" / "training.csv"), 4u);
  const auto m = nlohmann::json::parse(slurp(dir / "b" / "manifest.json"));
  EXPECT_EQ(m["parameters"]["layer_sizes"], (std::vector<int>{4, 3, 3, 2}));
}

TEST(Cli, AnalyzeCheckpoint) {
  TempDir dir;
  ASSERT_EQ(run(small_train(dir / "run")).code, 0);
  const std::string ckpt = (dir / "run" / "checkpoints/epoch_0002.bin").string();
  const CliRun r = run({"analyze", ckpt, "-o", (dir / "an").string(), "--sensitivity", "--bounds",
                     "--region-stats", "--margins", "--constancy", "--oracle-check", "--hoeffding", "0.5",
                     "--trials", "50", "--synthetic-dim", "4", "--synthetic-classes", "3",
                     "--synthetic-train", "90", "--synthetic-test", "30"});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path a = dir / "an";
  const auto oracle = nlohmann::json::parse(slurp(a / "oracle_check.json"));
  EXPECT_LE(oracle["max_abs_diff"].get<double>(), 1e-12 * std::max(1.0, oracle["max_abs_entry"].get<double>()));
  const auto bounds = nlohmann::json::parse(slurp(a / "bounds.json"));
  EXPECT_EQ(bounds["max_region_count"], "1");
  EXPECT_TRUE(bounds["components"].contains("psi"));
  const auto sens = nlohmann::json::parse(slurp(a / "sensitivity.json"));
  EXPECT_LE(sens["max_frobenius_sq"].get<double>(), bounds["eq1_tight_value"].get<double>());
  const auto c = nlohmann::json::parse(slurp(a / "constancy.json"));
  EXPECT_EQ(c["violations"], 0);
  EXPECT_EQ(first_line(a / "sensitivity.csv"), "param,x0,x1,x2,x3");
  EXPECT_EQ(first_line(a / "margins.csv"), "neuron,layer,index,rho,rho_hat");
  EXPECT_EQ(first_line(a / "patterns_train.csv"), "pattern,multiplicity,log_prob,region_frobenius_sq");
  EXPECT_TRUE(fs::exists(a / "hoeffding.json"));
  EXPECT_TRUE(fs::exists(a / "region_stats.json"));
  EXPECT_TRUE(fs::exists(a / "sensitivity.bin"));

  EXPECT_EQ(run({"analyze", ckpt, "-o", (dir / "x").string(), "--bounds", "--synthetic-dim", "5"}).code,
            cli::kExitValidation);
  EXPECT_EQ(run({"analyze", (dir / "nope.bin").string(), "-o", (dir / "x").string()}).code,
            cli::kExitValidation);
}

TEST(Cli, SweepOutputs) {
  TempDir dir;
  ASSERT_EQ(run({"sweep", "--variable", "sigma", "--from", "5", "--to", "5", "-o", (dir / "one").string()}).code, 0);
  const fs::path one = dir / "one" / "sweep_sigma.csv";
  EXPECT_EQ(first_line(one),
            "variable,value,depth,width,n_theta,d_in,mu,sigma,w_max,eq2,log10_eq2,eq2_proof_variant,"
            "log10_eq2_proof_variant");
  EXPECT_EQ(line_count(one), 2u);

  cli::SweepCommand c;
  c.variable = "sigma";
  c.from = 1;
  c.to = 100;
  c.steps = 30;
  const auto rows = cli::sweep_rows(c);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GT(rows[i].log10_eq2, rows[i - 1].log10_eq2);
  EXPECT_EQ(rows[0].n_theta, 3072.0 * 1000 + 3 * 1000.0 * 1000 + 1000.0 * 10);

  EXPECT_EQ(run({"sweep", "--variable", "sigma", "--from", "1", "--to", "2", "--steps", "0", "-o",
                 (dir / "e").string()})
                .code,
            cli::kExitValidation);
  EXPECT_EQ(run({"sweep", "--variable", "nope", "--from", "1", "--to", "2", "-o", (dir / "e").string()}).code,
            cli::kExitValidation);
}

TEST(Cli, PresetSweepsWriteFiveCsvs) {
  TempDir dir;
  ASSERT_EQ(run({"reproduce-fig2", "-o", dir.path().string()}).code, 0);
  for (const char* v : {"mu", "sigma", "wmax", "width", "depth"}) {
    EXPECT_TRUE(fs::exists(dir / (std::string("sweep_") + v + ".csv"))) << v;
  }
}
