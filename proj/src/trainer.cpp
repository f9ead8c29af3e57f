#include "tansens/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tansens/error.hpp"

namespace tansens {
namespace {

constexpr Eigen::Index kEvalBlock = 1024;

Matrix gather_rows(const InputMatrix& X, std::span<const std::size_t> rows) {
  Matrix A(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    A.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r])).cast<double>();
  }
  return A;
}

void check_batch(const Params& params, const InputMatrix& X, std::span<const std::uint8_t> labels,
                 std::span<const std::size_t> rows) {
  if (rows.empty()) throw ValidationError("empty batch");
  if (static_cast<std::size_t>(X.cols()) != params.spec.input_dim()) {
    throw ShapeError("dataset has " + std::to_string(X.cols()) + " columns, network expects " +
                     std::to_string(params.spec.input_dim()));
  }
  for (std::size_t r : rows) {
    if (r >= labels.size() || r >= static_cast<std::size_t>(X.rows())) {
      throw ShapeError("batch row " + std::to_string(r) + " out of range");
    }
    if (labels[r] >= params.spec.output_dim()) {
      throw ValidationError("label " + std::to_string(labels[r]) + " exceeds output width");
    }
  }
}

// Row-wise log-softmax in place; returns nothing, logits become log-probs.
void log_softmax_rows(Matrix& Z) {
  for (Eigen::Index r = 0; r < Z.rows(); ++r) {
    const double m = Z.row(r).maxCoeff();
    const double lse = m + std::log((Z.row(r).array() - m).exp().sum());
    Z.row(r).array() -= lse;
  }
}

struct BatchForward {
  std::vector<Matrix> activations;  // a_0 .. a_{k-1}
  std::vector<Matrix> preactivations;  // hidden layers
  Matrix logits;
};

BatchForward batch_forward(const Params& p, Matrix a0) {
  BatchForward f;
  f.activations.push_back(std::move(a0));
  const std::size_t k = p.depth();
  for (std::size_t i = 0; i + 1 < k; ++i) {
    Matrix h = f.activations.back() * p.weights[i];
    h.rowwise() += p.biases[i].transpose();
    f.activations.push_back(h.cwiseMax(0.0));
    f.preactivations.push_back(std::move(h));
  }
  f.logits = f.activations.back() * p.weights[k - 1];
  f.logits.rowwise() += p.biases[k - 1].transpose();
  return f;
}

bool all_finite(const Gradient& g) {
  for (const auto& w : g.weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : g.biases) {
    if (!b.allFinite()) return false;
  }
  return std::isfinite(g.loss);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train.learning_rate must be finite and >= 0");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ValidationError("train.weight_decay must be finite and >= 0");
  }
}

Params init_params(const NetworkSpec& spec, std::uint64_t seed) {
  Params p = Params::zeros(spec);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < p.depth(); ++i) {
    const double a = std::sqrt(1.0 / static_cast<double>(spec.layer_sizes[i]));
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index r = 0; r < p.weights[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < p.weights[i].cols(); ++c) p.weights[i](r, c) = u(rng);
    }
    if (spec.use_bias) {
      for (Eigen::Index c = 0; c < p.biases[i].size(); ++c) p.biases[i][c] = u(rng);
    }
  }
  return p;
}

double cross_entropy(const Vector& output, std::size_t label) {
  if (label >= static_cast<std::size_t>(output.size())) {
    throw ValidationError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(output.size()) + " outputs");
  }
  const double m = output.maxCoeff();
  const double lse = m + std::log((output.array() - m).exp().sum());
  return lse - output[static_cast<Eigen::Index>(label)];
}

Gradient batch_gradient(const Params& params, const InputMatrix& X,
                        std::span<const std::uint8_t> labels, std::span<const std::size_t> rows) {
  check_batch(params, X, labels, rows);
  const auto m = static_cast<Eigen::Index>(rows.size());
  BatchForward f = batch_forward(params, gather_rows(X, rows));
  Matrix logp = f.logits;
  log_softmax_rows(logp);

  Gradient g;
  double loss = 0.0;
  Matrix delta = logp.array().exp().matrix();
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto y = static_cast<Eigen::Index>(labels[rows[static_cast<std::size_t>(r)]]);
    loss -= logp(r, y);
    delta(r, y) -= 1.0;
  }
  delta /= static_cast<double>(m);
  g.loss = loss / static_cast<double>(m);

  const std::size_t k = params.depth();
  g.weights.resize(k);
  g.biases.resize(k);
  for (std::size_t i = k; i-- > 0;) {
    g.weights[i] = f.activations[i].transpose() * delta;
    g.biases[i] = params.spec.use_bias ? Vector(delta.colwise().sum().transpose())
                                       : Vector::Zero(delta.cols());
    if (i == 0) break;
    Matrix back = delta * params.weights[i].transpose();
    const Matrix& h = f.preactivations[i - 1];
    delta = (h.array() > 0.0).select(back, 0.0);
  }
  return g;
}

double batch_loss(const Params& params, const InputMatrix& X, std::span<const std::uint8_t> labels,
                  std::span<const std::size_t> rows) {
  check_batch(params, X, labels, rows);
  BatchForward f = batch_forward(params, gather_rows(X, rows));
  log_softmax_rows(f.logits);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    loss -= f.logits(static_cast<Eigen::Index>(r), labels[rows[r]]);
  }
  return loss / static_cast<double>(rows.size());
}

void sgd_step(Params& params, const Gradient& grad, const TrainConfig& cfg) {
  if (!all_finite(grad)) throw NumericError("non-finite gradient (loss " + std::to_string(grad.loss) + ")");
  const double lr = cfg.learning_rate;
  const double wd = cfg.weight_decay;
  for (std::size_t i = 0; i < params.depth(); ++i) {
    params.weights[i] -= lr * (grad.weights[i] + wd * params.weights[i]);
    if (params.spec.use_bias) params.biases[i] -= lr * (grad.biases[i] + wd * params.biases[i]);
  }
}

AdamState::AdamState(const Params& shape) {
  for (std::size_t i = 0; i < shape.depth(); ++i) {
    mw_.push_back(Matrix::Zero(shape.weights[i].rows(), shape.weights[i].cols()));
    vw_.push_back(mw_.back());
    mb_.push_back(Vector::Zero(shape.biases[i].size()));
    vb_.push_back(mb_.back());
  }
}

void AdamState::step(Params& params, const Gradient& grad, const TrainConfig& cfg) {
  if (!all_finite(grad)) throw NumericError("non-finite gradient (loss " + std::to_string(grad.loss) + ")");
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  const double lr = cfg.learning_rate;
  const double wd = cfg.weight_decay;
  for (std::size_t i = 0; i < params.depth(); ++i) {
    const Matrix gw = grad.weights[i] + wd * params.weights[i];
    mw_[i] = kBeta1 * mw_[i] + (1.0 - kBeta1) * gw;
    vw_[i] = kBeta2 * vw_[i] + (1.0 - kBeta2) * gw.cwiseProduct(gw);
    params.weights[i].array() -=
        lr * (mw_[i].array() / c1) / ((vw_[i].array() / c2).sqrt() + kEps);
    if (params.spec.use_bias) {
      const Vector gb = grad.biases[i] + wd * params.biases[i];
      mb_[i] = kBeta1 * mb_[i] + (1.0 - kBeta1) * gb;
      vb_[i] = kBeta2 * vb_[i] + (1.0 - kBeta2) * gb.cwiseProduct(gb);
      params.biases[i].array() -=
          lr * (mb_[i].array() / c1) / ((vb_[i].array() / c2).sqrt() + kEps);
    }
  }
}

Evaluation evaluate(const Params& params, const Dataset& ds) {
  if (ds.size() == 0) throw ValidationError("cannot evaluate on an empty dataset");
  const auto n = static_cast<Eigen::Index>(ds.size());
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (Eigen::Index begin = 0; begin < n; begin += kEvalBlock) {
    const Eigen::Index count = std::min(kEvalBlock, n - begin);
    rows.resize(static_cast<std::size_t>(count));
    std::iota(rows.begin(), rows.end(), static_cast<std::size_t>(begin));
    check_batch(params, ds.inputs, ds.labels, rows);
    BatchForward f = batch_forward(params, gather_rows(ds.inputs, rows));
    for (Eigen::Index r = 0; r < count; ++r) {
      Eigen::Index arg = 0;
      f.logits.row(r).maxCoeff(&arg);
      if (static_cast<std::size_t>(arg) == ds.labels[rows[static_cast<std::size_t>(r)]]) ++correct;
    }
    log_softmax_rows(f.logits);
    for (Eigen::Index r = 0; r < count; ++r) {
      loss -= f.logits(r, ds.labels[rows[static_cast<std::size_t>(r)]]);
    }
  }
  return {loss / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch,
                                     bool shuffle) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!shuffle || n < 2) return order;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  return order;
}

TrainResult train(const NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg, const std::vector<EpochHook>& hooks,
                  bool keep_checkpoints) {
  cfg.validate();
  spec.validate();
  if (train_set.size() == 0 || test_set.size() == 0) {
    throw ValidationError("training needs nonempty train and test sets");
  }
  TrainResult result;
  Params params = init_params(spec, cfg.seed);
  Params previous = params;
  AdamState adam(params);

  auto finish_epoch = [&](std::size_t epoch) {
    EpochMetrics m{epoch, evaluate(params, train_set), evaluate(params, test_set)};
    result.metrics.push_back(m);
    if (keep_checkpoints) result.checkpoints.push_back(params);
    const EpochState state{epoch, params, previous, result.metrics.back()};
    for (const auto& hook : hooks) hook(state);
  };
  finish_epoch(0);

  const std::size_t n = train_set.size();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    previous = params;
    const auto order = epoch_order(n, cfg.seed, epoch, cfg.shuffle);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::span<const std::size_t> rows(order.data() + start,
                                              std::min(cfg.batch_size, n - start));
      const Gradient g = batch_gradient(params, train_set.inputs, train_set.labels, rows);
      if (cfg.optimizer == Optimizer::adam) {
        adam.step(params, g, cfg);
      } else {
        sgd_step(params, g, cfg);
      }
    }
    finish_epoch(epoch);
  }
  if (!keep_checkpoints) result.checkpoints.push_back(params);
  return result;
}

}  // namespace tansens
