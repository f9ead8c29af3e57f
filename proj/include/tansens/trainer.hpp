#pragma once

// Cross-entropy training of ReLU MLPs with minibatch SGD (L2 weight decay
// added to the gradient) or Adam.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tansens/data_io.hpp"
#include "tansens/network.hpp"

namespace tansens {

enum class Optimizer { sgd, adam };

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double weight_decay = 0.0005;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  bool shuffle = true;
  Optimizer optimizer = Optimizer::sgd;

  void validate() const;
};

/// Weights and biases of layer i drawn from U(-sqrt(1/N_{i-1}), sqrt(1/N_{i-1}));
/// biases stay zero for biasless specs.
Params init_params(const NetworkSpec& spec, std::uint64_t seed);

/// -log softmax(output)[label].
double cross_entropy(const Vector& output, std::size_t label);

struct Gradient {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  /// Mean cross-entropy of the batch.
  double loss = 0.0;
};

/// Mean loss gradient over the given rows of X (no weight decay).
Gradient batch_gradient(const Params& params, const InputMatrix& X,
                        std::span<const std::uint8_t> labels, std::span<const std::size_t> rows);

/// Mean cross-entropy over the given rows.
double batch_loss(const Params& params, const InputMatrix& X, std::span<const std::uint8_t> labels,
                  std::span<const std::size_t> rows);

/// theta <- theta - lr * (grad + weight_decay * theta). NumericError when the
/// gradient has non-finite entries.
void sgd_step(Params& params, const Gradient& grad, const TrainConfig& cfg);

class AdamState {
 public:
  explicit AdamState(const Params& shape);
  void step(Params& params, const Gradient& grad, const TrainConfig& cfg);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  std::vector<Matrix> mw_, vw_;
  std::vector<Vector> mb_, vb_;
  std::size_t t_ = 0;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const Params& params, const Dataset& ds);

struct EpochMetrics {
  std::size_t epoch = 0;
  Evaluation train;
  Evaluation test;
};

struct EpochState {
  std::size_t epoch = 0;
  const Params& params;
  /// Parameters at the end of the previous epoch; equals params at epoch 0.
  const Params& previous;
  const EpochMetrics& metrics;
};

using EpochHook = std::function<void(const EpochState&)>;

struct TrainResult {
  /// Index e holds the parameters after epoch e (0 = initialisation). Without
  /// keep_checkpoints only the final parameters are kept.
  std::vector<Params> checkpoints;
  std::vector<EpochMetrics> metrics;
};

/// Per-epoch shuffling uses Fisher-Yates with a generator seeded from
/// (seed, epoch). Hooks run after initialisation and after every epoch.
TrainResult train(const NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg, const std::vector<EpochHook>& hooks = {},
                  bool keep_checkpoints = true);

/// Row order used in a given epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch,
                                     bool shuffle);

}  // namespace tansens
