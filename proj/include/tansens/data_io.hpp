#pragma once

// Dataset loaders (CIFAR-10 binary batches, MNIST IDX) and synthetic data.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tansens/network.hpp"

namespace tansens {

struct Dataset {
  InputMatrix inputs;
  std::vector<std::uint8_t> labels;
  std::string name;
  std::string split;
  std::size_t num_classes = 10;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }
  std::vector<std::size_t> class_counts() const;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

inline constexpr std::size_t kCifarDim = 3072;
inline constexpr std::size_t kCifarRecord = kCifarDim + 1;
inline constexpr std::size_t kMnistDim = 784;

/// Parses CIFAR-10 binary records (1 label byte + 3072 pixel bytes) from one
/// file; pixels are divided by 255.
Dataset read_cifar10_batch(const std::filesystem::path& file);

/// data_batch_1..5.bin as train, test_batch.bin as test. `dir` may also be
/// the parent of a cifar-10-batches-bin directory.
DatasetPair load_cifar10(const std::filesystem::path& dir);

Dataset read_mnist(const std::filesystem::path& images, const std::filesystem::path& labels);

/// train-images-idx3-ubyte / train-labels-idx1-ubyte and the t10k pair.
DatasetPair load_mnist(const std::filesystem::path& dir);

/// Class-conditional unit-covariance Gaussians. Class means are drawn once
/// from N(0, mean_scale^2 I); sample i belongs to class i % classes.
Dataset synthetic_gaussian(std::size_t d_in, std::size_t classes, std::size_t n,
                           std::uint64_t seed, double mean_scale = 1.0);

/// The class means synthetic_gaussian uses for a seed, classes x d_in.
Matrix synthetic_gaussian_means(std::size_t d_in, std::size_t classes, std::uint64_t seed,
                                double mean_scale = 1.0);

/// Deterministic stratified subsample: n / classes samples per class, the
/// remainder spread over the lowest class indices. Sample order follows the
/// source dataset.
Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed);

struct Standardizer {
  Vector mean;
  Vector scale;
};

/// Per-feature mean and standard deviation (features with zero spread keep
/// scale 1).
Standardizer fit_standardizer(const Dataset& ds);
void apply_standardizer(const Standardizer& s, Dataset& ds);

/// Where the original archives are published.
std::vector<std::pair<std::string, std::string>> dataset_urls();

}  // namespace tansens
