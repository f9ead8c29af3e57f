#include "tansens/region_stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <unordered_map>

#include "tansens/error.hpp"
#include "tansens/parallel.hpp"
#include "tansens/sensitivity.hpp"

namespace tansens {
namespace {

constexpr Eigen::Index kRowBlock = 1024;
constexpr double kFullCompareLimit = 4e6;

void check_dataset(const Params& params, const InputMatrix& X, const char* who) {
  if (X.rows() == 0) throw ValidationError(std::string(who) + ": empty dataset");
  if (static_cast<std::size_t>(X.cols()) != params.spec.input_dim()) {
    throw ShapeError(std::string(who) + ": dataset has " + std::to_string(X.cols()) +
                     " columns, network expects " + std::to_string(params.spec.input_dim()));
  }
}

// Quantile with linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Integer-valued counts get integer bin widths of at least one.
double count_bin_width(std::span<const double> values, double requested) {
  if (requested > 0.0) return requested;
  return std::max(1.0, std::ceil(freedman_diaconis_width(values)));
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double log_sum_exp(const double* v, Eigen::Index n, Eigen::Index stride) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, v[i * stride]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += std::exp(v[i * stride] - m);
  return m + std::log(s);
}

Matrix stack_hidden(const std::vector<Matrix>& preacts, Eigen::Index rows) {
  Eigen::Index width = 0;
  for (const auto& h : preacts) width += h.cols();
  Matrix H(rows, width);
  Eigen::Index at = 0;
  for (const auto& h : preacts) {
    H.middleCols(at, h.cols()) = h;
    at += h.cols();
  }
  return H;
}

}  // namespace

std::size_t Histogram::total() const {
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  return n;
}

double freedman_diaconis_width(std::span<const double> values) {
  if (values.size() < 2) return 1.0;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  if (!(iqr > 0.0)) return 1.0;
  return 2.0 * iqr / std::cbrt(static_cast<double>(sorted.size()));
}

Histogram make_histogram(std::span<const double> values, double origin, double bin_width,
                         std::size_t bins) {
  if (!(bin_width > 0.0)) throw DomainError("histogram bin width must be positive");
  Histogram h;
  h.origin = origin;
  h.bin_width = bin_width;
  h.counts.assign(bins, 0);
  for (double v : values) {
    const double pos = std::floor((v - origin) / bin_width);
    if (pos < 0.0 || pos >= static_cast<double>(bins)) continue;
    ++h.counts[static_cast<std::size_t>(pos)];
  }
  return h;
}

Histogram make_histogram(std::span<const double> values, double bin_width) {
  if (values.empty()) return Histogram{};
  if (!(bin_width > 0.0)) bin_width = freedman_diaconis_width(values);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double origin = std::floor(*lo);
  const auto bins = static_cast<std::size_t>(std::floor((*hi - origin) / bin_width)) + 1;
  return make_histogram(values, origin, bin_width, bins);
}

std::vector<double> ActiveNodeStats::count_values() const {
  return {counts.begin(), counts.end()};
}

std::vector<double> ActiveNodeStats::layer_count_values(std::size_t layer) const {
  std::vector<double> out;
  out.reserve(per_layer_counts.size());
  for (const auto& c : per_layer_counts) out.push_back(static_cast<double>(c.at(layer)));
  return out;
}

ActiveNodeStats active_node_stats(const Params& params, const InputMatrix& X, double bin_width,
                                  std::size_t threads) {
  check_dataset(params, X, "active_node_stats");
  const Eigen::Index n = X.rows();
  const std::size_t layers = params.spec.hidden_layers();
  ActiveNodeStats s;
  s.hidden_neurons = params.spec.hidden_neurons();
  s.counts.assign(static_cast<std::size_t>(n), 0);
  s.per_layer_counts.assign(static_cast<std::size_t>(n), std::vector<std::size_t>(layers, 0));

  const auto blocks = static_cast<std::size_t>((n + kRowBlock - 1) / kRowBlock);
  parallel_for(blocks, threads, [&](std::size_t b) {
    const Eigen::Index begin = static_cast<Eigen::Index>(b) * kRowBlock;
    const Eigen::Index count = std::min(kRowBlock, n - begin);
    const auto preacts = batch_hidden_preactivations(params, X, begin, count);
    for (Eigen::Index r = 0; r < count; ++r) {
      const auto row = static_cast<std::size_t>(begin + r);
      std::size_t total = 0;
      for (std::size_t l = 0; l < layers; ++l) {
        const auto active = static_cast<std::size_t>((preacts[l].row(r).array() > 0.0).count());
        s.per_layer_counts[row][l] = active;
        total += active;
      }
      s.counts[row] = total;
    }
  });

  double sum = 0.0;
  for (std::size_t c : s.counts) sum += static_cast<double>(c);
  s.mu = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t c : s.counts) ss += (static_cast<double>(c) - s.mu) * (static_cast<double>(c) - s.mu);
  s.sigma = std::sqrt(ss / static_cast<double>(n));
  const auto values = s.count_values();
  s.histogram = make_histogram(values, count_bin_width(values, bin_width));
  return s;
}

void write_active_histograms_csv(std::ostream& os, const ActiveNodeStats& train,
                                 const ActiveNodeStats& test, double bin_width) {
  if (train.per_layer_counts.empty() || test.per_layer_counts.empty()) {
    throw ValidationError("histogram overlay needs nonempty train and test statistics");
  }
  const std::size_t layers = train.per_layer_counts.front().size();
  if (test.per_layer_counts.front().size() != layers) {
    throw ShapeError("train and test statistics come from different networks");
  }
  os << "scope,bin_lo,bin_hi,train_count,test_count,train_fraction,test_fraction\n";
  os << std::setprecision(17);

  auto emit = [&](const std::string& scope, const std::vector<double>& a,
                  const std::vector<double>& b) {
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    const double width = count_bin_width(pooled, bin_width);
    const auto [lo, hi] = std::minmax_element(pooled.begin(), pooled.end());
    const double origin = std::floor(*lo);
    const auto bins = static_cast<std::size_t>(std::floor((*hi - origin) / width)) + 1;
    const Histogram ha = make_histogram(a, origin, width, bins);
    const Histogram hb = make_histogram(b, origin, width, bins);
    for (std::size_t i = 0; i < bins; ++i) {
      os << scope << ',' << ha.lower(i) << ',' << ha.upper(i) << ',' << ha.counts[i] << ','
         << hb.counts[i] << ','
         << static_cast<double>(ha.counts[i]) / static_cast<double>(a.size()) << ','
         << static_cast<double>(hb.counts[i]) / static_cast<double>(b.size()) << '\n';
    }
  };

  emit("total", train.count_values(), test.count_values());
  for (std::size_t l = 0; l < layers; ++l) {
    emit("layer" + std::to_string(l + 1), train.layer_count_values(l),
         test.layer_count_values(l));
  }
}

double log_sigmoid(double z) { return -softplus(-z); }

RegionProbability pattern_log_probability(const Params& params, const Vector& x,
                                          const ActivationPattern& pattern) {
  const ForwardTrace t = forward(params, x);
  if (pattern.signs.size() != params.spec.hidden_neurons()) {
    throw ShapeError("pattern has " + std::to_string(pattern.signs.size()) +
                     " signs, network has " + std::to_string(params.spec.hidden_neurons()) +
                     " hidden neurons");
  }
  RegionProbability r;
  r.pattern = pattern;
  std::size_t l = 0;
  for (const auto& h : t.preactivations) {
    for (Eigen::Index j = 0; j < h.size(); ++j, ++l) {
      r.log_prob += log_sigmoid(pattern.signs[l] > 0 ? h[j] : -h[j]);
    }
  }
  return r;
}

EmpiricalSensitivity empirical_tangent_sensitivity(const Params& params, const InputMatrix& X,
                                                   EmpiricalOptions options) {
  check_dataset(params, X, "empirical_tangent_sensitivity");
  const Eigen::Index n = X.rows();
  EmpiricalSensitivity e;

  const auto preacts = batch_hidden_preactivations(params, X, 0, n);
  const FrobeniusEngine engine(params);
  std::unordered_map<std::string, std::size_t> index;
  for (Eigen::Index r = 0; r < n; ++r) {
    const ForwardTrace t = trace_from_preactivations(preacts, r);
    auto [it, inserted] = index.try_emplace(t.pattern.bitstring(), e.patterns.size());
    if (inserted) {
      e.patterns.push_back(t.pattern);
      e.region_sensitivity.push_back(engine(t));
      e.multiplicity.push_back(1);
    } else {
      ++e.multiplicity[it->second];
    }
  }

  const std::size_t m = e.patterns.size();
  e.log_prob.assign(m, 0.0);
  const Eigen::Index hidden = static_cast<Eigen::Index>(params.spec.hidden_neurons());
  if (hidden == 0) {
    // No gates: a single region of probability one.
    e.log_prob[0] = 0.0;
    e.value = e.region_sensitivity[0];
    return e;
  }

  // log p(A | x) = C(x) + sum_{l active in A} h_l(x), C(x) = -sum_l softplus(h_l(x)).
  const Matrix H = stack_hidden(preacts, n);
  Vector C(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double c = 0.0;
    for (Eigen::Index j = 0; j < hidden; ++j) c -= softplus(H(r, j));
    C[r] = c;
  }
  const double log_n = std::log(static_cast<double>(n));
  const std::size_t block = std::max<std::size_t>(1, options.block);
  for (std::size_t start = 0; start < m; start += block) {
    const std::size_t cols = std::min(block, m - start);
    Matrix P = Matrix::Zero(hidden, static_cast<Eigen::Index>(cols));
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& signs = e.patterns[start + c].signs;
      for (Eigen::Index j = 0; j < hidden; ++j) {
        if (signs[static_cast<std::size_t>(j)] > 0) P(j, static_cast<Eigen::Index>(c)) = 1.0;
      }
    }
    Matrix L = H * P;
    L.colwise() += C;
    for (std::size_t c = 0; c < cols; ++c) {
      e.log_prob[start + c] = log_sum_exp(L.col(static_cast<Eigen::Index>(c)).data(), n, 1) - log_n;
    }
  }

  if (options.normalize) {
    const double lse = log_sum_exp(e.log_prob.data(), static_cast<Eigen::Index>(m), 1);
    for (double& lp : e.log_prob) lp -= lse;
  }
  double value = 0.0;
  for (std::size_t i = 0; i < m; ++i) value += std::exp(e.log_prob[i]) * e.region_sensitivity[i];
  e.value = value;
  return e;
}

void write_patterns_csv(std::ostream& os, const EmpiricalSensitivity& e) {
  os << "pattern,multiplicity,log_prob,region_frobenius_sq\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < e.patterns.size(); ++i) {
    os << e.patterns[i].bitstring() << ',' << e.multiplicity[i] << ',' << e.log_prob[i] << ','
       << e.region_sensitivity[i] << '\n';
  }
}

ConstancyReport region_constancy_check(const Params& params, const Vector& x, std::size_t trials,
                                       double radius, std::uint64_t seed, double tol) {
  if (!(radius > 0.0)) throw DomainError("constancy check needs radius > 0");
  const ForwardTrace base = forward(params, x);
  const double rows = static_cast<double>(params.spec.weight_count());
  const bool full = rows * static_cast<double>(x.size()) <= kFullCompareLimit;

  SensitivityMatrix ref;
  SensitivityFactors ref_factors;
  if (full) {
    ref = tangent_sample_sensitivity(params, x);
  } else {
    ref_factors = sensitivity_factors(params, x);
  }

  ConstancyReport report;
  report.trials = trials;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-radius, radius);
  Vector y(x.size());
  for (std::size_t t = 0; t < trials; ++t) {
    for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = x[i] + unit(rng);
    const ForwardTrace tr = forward(params, y);
    if (!(tr.pattern == base.pattern) || tr.on_boundary) continue;
    ++report.in_region;
    double diff = 0.0;
    if (full) {
      diff = (tangent_sample_sensitivity(params, y).entries - ref.entries).cwiseAbs().maxCoeff();
    } else {
      const SensitivityFactors f = sensitivity_factors(params, y);
      for (std::size_t q = 0; q < f.jac.size(); ++q) {
        diff = std::max(diff, (f.jac[q] - ref_factors.jac[q]).cwiseAbs().maxCoeff());
        diff = std::max(diff, (f.back[q] - ref_factors.back[q]).cwiseAbs().maxCoeff());
      }
    }
    report.max_abs_diff = std::max(report.max_abs_diff, diff);
    if (diff > tol) ++report.violations;
  }
  report.inconclusive = report.in_region == 0;
  return report;
}

std::vector<NeuronMargin> neuron_margins(const Params& params, const InputMatrix& X) {
  check_dataset(params, X, "neuron_margins");
  const Eigen::Index n = X.rows();
  const auto hidden = params.spec.hidden_neurons();
  std::vector<NeuronMargin> out(hidden);
  std::vector<double> rho_hat_tie(hidden);
  for (auto& m : out) {
    m.rho = std::numeric_limits<double>::infinity();
    m.rho_hat = std::numeric_limits<double>::infinity();
  }
  std::fill(rho_hat_tie.begin(), rho_hat_tie.end(), std::numeric_limits<double>::infinity());

  for (Eigen::Index begin = 0; begin < n; begin += kRowBlock) {
    const Eigen::Index count = std::min(kRowBlock, n - begin);
    const auto preacts = batch_hidden_preactivations(params, X, begin, count);
    std::size_t l = 0;
    for (const auto& h : preacts) {
      for (Eigen::Index j = 0; j < h.cols(); ++j, ++l) {
        NeuronMargin& m = out[l];
        for (Eigen::Index r = 0; r < count; ++r) {
          const double a = std::abs(h(r, j));
          const double s = std::abs(0.5 * std::tanh(0.5 * h(r, j)));
          const auto sample = static_cast<std::size_t>(begin + r);
          if (a < m.rho) {
            m.rho = a;
            m.argmin_rho = sample;
          }
          // Ties of the saturated sigmoid are broken by |h| so both argmins agree.
          if (s < m.rho_hat || (s == m.rho_hat && a < rho_hat_tie[l])) {
            m.rho_hat = s;
            rho_hat_tie[l] = a;
            m.argmin_rho_hat = sample;
          }
        }
      }
    }
  }
  return out;
}

void write_margins_csv(std::ostream& os, const NetworkSpec& spec,
                       const std::vector<NeuronMargin>& margins) {
  os << "neuron,layer,index,rho,rho_hat\n";
  os << std::setprecision(17);
  std::size_t l = 0;
  for (std::size_t layer = 1; layer + 1 < spec.layer_sizes.size(); ++layer) {
    for (std::size_t j = 0; j < spec.layer_sizes[layer] && l < margins.size(); ++j, ++l) {
      os << l << ',' << layer << ',' << j << ',' << margins[l].rho << ',' << margins[l].rho_hat
         << '\n';
    }
  }
}

}  // namespace tansens
