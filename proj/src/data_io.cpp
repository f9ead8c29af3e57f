#include "tansens/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "tansens/binary_io.hpp"
#include "tansens/error.hpp"

namespace tansens {
namespace {

namespace fs = std::filesystem;

std::vector<unsigned char> read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<unsigned char> bytes(size);
  if (size && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("read failed: " + file.string());
  }
  return bytes;
}

Dataset concat(std::vector<Dataset> parts, const std::string& name, const std::string& split) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.inputs.rows();
  Dataset out;
  out.name = name;
  out.split = split;
  out.inputs.resize(rows, parts.front().inputs.cols());
  Eigen::Index at = 0;
  for (auto& p : parts) {
    out.inputs.middleRows(at, p.inputs.rows()) = p.inputs;
    at += p.inputs.rows();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

void check_labels(const Dataset& ds, const fs::path& file) {
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] >= ds.num_classes) {
      throw FormatError(file.string() + ": label " + std::to_string(ds.labels[i]) +
                        " out of range at record " + std::to_string(i));
    }
  }
}

}  // namespace

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> c(num_classes, 0);
  for (auto l : labels) {
    if (l < num_classes) ++c[l];
  }
  return c;
}

Dataset read_cifar10_batch(const fs::path& file) {
  const auto bytes = read_file(file);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    const std::size_t complete = bytes.size() / kCifarRecord;
    throw IoError(file.string() + ": truncated record at offset " +
                  std::to_string(complete * kCifarRecord) + " (file size " +
                  std::to_string(bytes.size()) + ", record size " + std::to_string(kCifarRecord) +
                  ")");
  }
  const std::size_t n = bytes.size() / kCifarRecord;
  Dataset ds;
  ds.name = "cifar10";
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kCifarDim));
  ds.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecord;
    ds.labels[r] = rec[0];
    for (std::size_t j = 0; j < kCifarDim; ++j) {
      ds.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          static_cast<float>(rec[1 + j]) / 255.0f;
    }
  }
  check_labels(ds, file);
  return ds;
}

DatasetPair load_cifar10(const fs::path& dir) {
  fs::path root = dir;
  if (!fs::exists(root / "test_batch.bin") && fs::exists(root / "cifar-10-batches-bin")) {
    root /= "cifar-10-batches-bin";
  }
  std::vector<Dataset> parts;
  for (int i = 1; i <= 5; ++i) {
    parts.push_back(read_cifar10_batch(root / ("data_batch_" + std::to_string(i) + ".bin")));
  }
  DatasetPair out;
  out.train = concat(std::move(parts), "cifar10", "train");
  out.test = read_cifar10_batch(root / "test_batch.bin");
  out.test.split = "test";
  return out;
}

Dataset read_mnist(const fs::path& images, const fs::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  if (img.size() < 16) throw IoError(images.string() + ": truncated header at offset 0");
  if (lab.size() < 8) throw IoError(labels.string() + ": truncated header at offset 0");
  if (binio::read_be_u32(img.data()) != 2051) {
    throw FormatError(images.string() + ": bad IDX magic, expected 2051");
  }
  if (binio::read_be_u32(lab.data()) != 2049) {
    throw FormatError(labels.string() + ": bad IDX magic, expected 2049");
  }
  const std::size_t n = binio::read_be_u32(img.data() + 4);
  const std::size_t rows = binio::read_be_u32(img.data() + 8);
  const std::size_t cols = binio::read_be_u32(img.data() + 12);
  const std::size_t n_labels = binio::read_be_u32(lab.data() + 4);
  if (n != n_labels) {
    throw FormatError("image/label count mismatch: " + std::to_string(n) + " vs " +
                      std::to_string(n_labels));
  }
  const std::size_t dim = rows * cols;
  if (img.size() < 16 + n * dim) {
    throw IoError(images.string() + ": truncated at offset " + std::to_string(img.size()) +
                  ", expected " + std::to_string(16 + n * dim) + " bytes");
  }
  if (lab.size() < 8 + n) {
    throw IoError(labels.string() + ": truncated at offset " + std::to_string(lab.size()) +
                  ", expected " + std::to_string(8 + n) + " bytes");
  }
  Dataset ds;
  ds.name = "mnist";
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < dim; ++j) {
      ds.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          static_cast<float>(img[16 + r * dim + j]) / 255.0f;
    }
  }
  ds.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  check_labels(ds, labels);
  return ds;
}

DatasetPair load_mnist(const fs::path& dir) {
  DatasetPair out;
  out.train = read_mnist(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  out.train.split = "train";
  out.test = read_mnist(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  out.test.split = "test";
  return out;
}

Matrix synthetic_gaussian_means(std::size_t d_in, std::size_t classes, std::uint64_t seed,
                                double mean_scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(d_in));
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    for (Eigen::Index j = 0; j < means.cols(); ++j) means(c, j) = mean_scale * normal(rng);
  }
  return means;
}

Dataset synthetic_gaussian(std::size_t d_in, std::size_t classes, std::size_t n,
                           std::uint64_t seed, double mean_scale) {
  if (d_in == 0 || classes == 0) throw ValidationError("synthetic data needs d_in, classes >= 1");
  if (classes > 256) throw ValidationError("at most 256 classes are supported");
  if (n < classes) throw ValidationError("synthetic data needs n >= classes");
  const Matrix means = synthetic_gaussian_means(d_in, classes, seed, mean_scale);
  // Separate stream for the noise so the means do not depend on n.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = classes;
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d_in));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i % classes);
    ds.labels[i] = static_cast<std::uint8_t>(c);
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d_in); ++j) {
      ds.inputs(static_cast<Eigen::Index>(i), j) = static_cast<float>(means(c, j) + normal(rng));
    }
  }
  return ds;
}

Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.size()) {
    throw ValidationError("subsample of " + std::to_string(n) + " from " +
                          std::to_string(ds.size()) + " samples");
  }
  const std::size_t classes = ds.num_classes;
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

  std::vector<std::size_t> quota(classes, n / classes);
  std::size_t remainder = n % classes;
  for (std::size_t c = 0; c < classes && remainder; ++c, --remainder) ++quota[c];
  // Classes too small for their quota hand the excess to the next classes.
  std::size_t deficit = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (quota[c] > by_class[c].size()) {
      deficit += quota[c] - by_class[c].size();
      quota[c] = by_class[c].size();
    }
  }
  for (std::size_t c = 0; c < classes && deficit; ++c) {
    const std::size_t extra = std::min(deficit, by_class[c].size() - quota[c]);
    quota[c] += extra;
    deficit -= extra;
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& idx = by_class[c];
    for (std::size_t i = 0; i < quota[c]; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(chosen.begin(), chosen.end());

  Dataset out;
  out.name = ds.name;
  out.split = ds.split;
  out.num_classes = ds.num_classes;
  out.inputs.resize(static_cast<Eigen::Index>(n), ds.inputs.cols());
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = ds.inputs.row(static_cast<Eigen::Index>(chosen[i]));
    out.labels[i] = ds.labels[chosen[i]];
  }
  return out;
}

Standardizer fit_standardizer(const Dataset& ds) {
  if (ds.size() == 0) throw ValidationError("cannot standardize an empty dataset");
  const Matrix X = ds.inputs.cast<double>();
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  s.scale = ((X.rowwise() - s.mean.transpose()).array().square().colwise().sum() /
             static_cast<double>(X.rows()))
                .sqrt()
                .transpose();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale[j] > 0.0)) s.scale[j] = 1.0;
  }
  return s;
}

void apply_standardizer(const Standardizer& s, Dataset& ds) {
  if (s.mean.size() != ds.inputs.cols()) throw ShapeError("standardizer dimension mismatch");
  for (Eigen::Index r = 0; r < ds.inputs.rows(); ++r) {
    for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) {
      ds.inputs(r, j) = static_cast<float>((ds.inputs(r, j) - s.mean[j]) / s.scale[j]);
    }
  }
}

std::vector<std::pair<std::string, std::string>> dataset_urls() {
  return {
      {"cifar10", "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"},
      {"mnist-train-images", "https://storage.googleapis.com/cvdf-datasets/mnist/train-images-idx3-ubyte.gz"},
      {"mnist-train-labels", "https://storage.googleapis.com/cvdf-datasets/mnist/train-labels-idx1-ubyte.gz"},
      {"mnist-test-images", "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-images-idx3-ubyte.gz"},
      {"mnist-test-labels", "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-labels-idx1-ubyte.gz"},
  };
}

}  // namespace tansens
