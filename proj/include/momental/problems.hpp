#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "momental/error.hpp"
#include "momental/param.hpp"
#include "momental/rng.hpp"

namespace momental {

/// Passing this as batch_seed evaluates a stochastic problem on its whole
/// dataset.
inline constexpr std::uint64_t kFullBatch =
    std::numeric_limits<std::uint64_t>::max();

struct Optimum {
  ParamVector params;
  double loss = 0.0;
};

/// Objective with analytic gradient.
///
/// Implementations are immutable after construction and pure in
/// (params, batch_seed), so they can be shared across threads. For
/// stochastic problems batch_seed selects a minibatch; deterministic problems
/// ignore it.
class Problem {
public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual bool stochastic() const = 0;

  virtual double loss(const ParamVector &params,
                      std::uint64_t batch_seed) const = 0;
  virtual GradVector gradient(const ParamVector &params,
                              std::uint64_t batch_seed) const = 0;

  virtual std::optional<Optimum> optimum() const { return std::nullopt; }

  /// Starting point for an optimization run.
  virtual ParamVector initial_point(std::uint64_t seed) const = 0;

  /// Random point in a region where the objective is well behaved; used by
  /// gradient checks.
  virtual ParamVector probe_point(std::uint64_t seed) const {
    return initial_point(seed);
  }

  double full_loss(const ParamVector &params) const {
    return loss(params, kFullBatch);
  }

protected:
  void check_dim(const ParamVector &params) const {
    if (params.size() != dim())
      throw DimensionError(dim(), params.size());
  }
};

using ProblemPtr = std::shared_ptr<const Problem>;

// ---------------------------------------------------------------------------

/// f(theta) = 1/2 * sum_i lambda_i theta_i^2, lambda log-spaced in [1, cond].
class Quadratic final : public Problem {
public:
  Quadratic(std::size_t dim, double condition_number, std::uint64_t seed)
      : seed_(seed) {
    if (dim < 1)
      throw ConfigError("quadratic: dim must be >= 1");
    if (!(condition_number >= 1.0) || !std::isfinite(condition_number))
      throw ConfigError("quadratic: condition_number must be >= 1");
    curvature_.resize(dim);
    for (std::size_t i = 0; i < dim; ++i)
      curvature_[i] =
          dim == 1 ? 1.0
                   : std::pow(condition_number, static_cast<double>(i) /
                                                    static_cast<double>(dim - 1));
  }

  std::string name() const override { return "quadratic"; }
  std::size_t dim() const override { return curvature_.size(); }
  bool stochastic() const override { return false; }
  std::span<const double> curvature() const noexcept { return curvature_; }

  double loss(const ParamVector &p, std::uint64_t) const override {
    check_dim(p);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      sum += curvature_[i] * p[i] * p[i];
    return 0.5 * sum;
  }

  GradVector gradient(const ParamVector &p, std::uint64_t) const override {
    check_dim(p);
    GradVector g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
      g[i] = curvature_[i] * p[i];
    return g;
  }

  std::optional<Optimum> optimum() const override {
    return Optimum{ParamVector(std::vector<double>(dim(), 0.0)), 0.0};
  }

  /// Uniform in [-1, 1]^dim.
  ParamVector initial_point(std::uint64_t seed) const override {
    CounterRng rng(mix64(seed_) + seed, 0x51);
    std::vector<double> x(dim());
    for (auto &xi : x)
      xi = rng.uniform(-1.0, 1.0);
    return ParamVector(std::move(x));
  }

private:
  std::vector<double> curvature_;
  std::uint64_t seed_;
};

/// Chained Rosenbrock: sum_{i<n-1} 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2.
class Rosenbrock final : public Problem {
public:
  explicit Rosenbrock(std::size_t dim) : dim_(dim) {
    if (dim < 2)
      throw ConfigError("rosenbrock: dim must be >= 2");
  }

  std::string name() const override { return "rosenbrock"; }
  std::size_t dim() const override { return dim_; }
  bool stochastic() const override { return false; }

  double loss(const ParamVector &p, std::uint64_t) const override {
    check_dim(p);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < dim_; ++i) {
      const double a = p[i + 1] - p[i] * p[i];
      const double b = 1.0 - p[i];
      sum += 100.0 * a * a + b * b;
    }
    return sum;
  }

  GradVector gradient(const ParamVector &p, std::uint64_t) const override {
    check_dim(p);
    GradVector g(dim_, 0.0);
    for (std::size_t i = 0; i + 1 < dim_; ++i) {
      const double a = p[i + 1] - p[i] * p[i];
      g[i] += -400.0 * p[i] * a - 2.0 * (1.0 - p[i]);
      g[i + 1] += 200.0 * a;
    }
    return g;
  }

  std::optional<Optimum> optimum() const override {
    return Optimum{ParamVector(std::vector<double>(dim_, 1.0)), 0.0};
  }

  /// The classic (-1.2, 1, -1.2, 1, ...) start, jittered by +-0.1.
  ParamVector initial_point(std::uint64_t seed) const override {
    CounterRng rng(seed, 0x52);
    std::vector<double> x(dim_);
    for (std::size_t i = 0; i < dim_; ++i)
      x[i] = (i % 2 == 0 ? -1.2 : 1.0) + rng.uniform(-0.1, 0.1);
    return ParamVector(std::move(x));
  }

  ParamVector probe_point(std::uint64_t seed) const override {
    CounterRng rng(seed, 0x152);
    std::vector<double> x(dim_);
    for (auto &xi : x)
      xi = rng.uniform(-2.0, 2.0);
    return ParamVector(std::move(x));
  }

private:
  std::size_t dim_;
};

// ---------------------------------------------------------------------------

namespace detail {

/// log(1 + exp(a)) without overflow.
inline double softplus(double a) {
  return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

inline double sigmoid(double a) {
  if (a >= 0.0)
    return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

/// Member indices of minibatch `batch_seed` under an epoch-wise shuffle.
inline std::vector<std::size_t> minibatch(std::size_t n, std::size_t batch_size,
                                          std::uint64_t data_seed,
                                          std::uint64_t batch_seed) {
  if (batch_seed == kFullBatch || batch_size >= n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i)
      all[i] = i;
    return all;
  }
  const std::uint64_t per_epoch = (n + batch_size - 1) / batch_size;
  const std::uint64_t epoch = batch_seed / per_epoch;
  const std::size_t k = static_cast<std::size_t>(batch_seed % per_epoch);
  const auto perm = shuffled_indices(n, data_seed, epoch);
  const std::size_t lo = k * batch_size;
  const std::size_t hi = std::min(n, lo + batch_size);
  return {perm.begin() + static_cast<std::ptrdiff_t>(lo),
          perm.begin() + static_cast<std::ptrdiff_t>(hi)};
}

} // namespace detail

struct LogRegOptions {
  std::size_t batch_size = 32;
  /// Fraction of labels flipped after generation.
  double label_noise = 0.05;
  /// Minimum |w* . x| enforced on every sample before flipping.
  double margin = 0.5;
};

/// Binary logistic regression (no bias term) on a synthetic dataset.
///
/// Generator, all streams keyed by the data seed:
///   w* ~ N(0, I), normalized to unit length;
///   x_i ~ N(0, I); if |w*.x_i| < margin, x_i is shifted along w* so that
///   |w*.x_i| = margin (sign kept, zero counts as positive);
///   y_i = sign(w*.x_i), then flipped with probability label_noise.
/// A dataset with a single label class is regenerated with seed + 1, up to
/// 10 retries.
class LogisticRegression final : public Problem {
public:
  LogisticRegression(std::size_t n_samples, std::size_t dim,
                     std::uint64_t seed, LogRegOptions opts = {})
      : n_(n_samples), dim_(dim), opts_(opts) {
    if (dim < 1)
      throw ConfigError("logreg: dim must be >= 1");
    if (n_samples < dim)
      throw ConfigError("logreg: n_samples must be >= dim");
    if (opts.batch_size < 1)
      throw ConfigError("logreg: batch_size must be >= 1");
    if (!(opts.label_noise >= 0.0 && opts.label_noise < 0.5))
      throw ConfigError("logreg: label_noise must lie in [0, 0.5)");
    for (int attempt = 0; attempt <= 10; ++attempt) {
      data_seed_ = seed + static_cast<std::uint64_t>(attempt);
      generate();
      const auto positives = std::count(labels_.begin(), labels_.end(), 1.0);
      if (positives != 0 && static_cast<std::size_t>(positives) != n_)
        return;
    }
    throw ConfigError("logreg: dataset has a single label class after 10 "
                      "retries");
  }

  std::string name() const override { return "logreg"; }
  std::size_t dim() const override { return dim_; }
  bool stochastic() const override { return true; }

  std::uint64_t data_seed() const noexcept { return data_seed_; }
  std::span<const double> separator() const noexcept { return separator_; }
  std::span<const double> labels() const noexcept { return labels_; }
  std::span<const double> sample(std::size_t i) const {
    return std::span<const double>(features_).subspan(i * dim_, dim_);
  }
  /// Indices whose labels were not flipped.
  std::vector<std::size_t> clean_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_; ++i)
      if (!flipped_[i])
        out.push_back(i);
    return out;
  }

  double loss_on(const ParamVector &p,
                 std::span<const std::size_t> rows) const {
    check_dim(p);
    double sum = 0.0;
    for (std::size_t r : rows)
      sum += detail::softplus(-labels_[r] * margin_of(p, r));
    return sum / static_cast<double>(rows.size());
  }

  double loss(const ParamVector &p, std::uint64_t batch_seed) const override {
    const auto rows = batch(batch_seed);
    return loss_on(p, rows);
  }

  GradVector gradient(const ParamVector &p,
                      std::uint64_t batch_seed) const override {
    check_dim(p);
    const auto rows = batch(batch_seed);
    GradVector g(dim_, 0.0);
    for (std::size_t r : rows) {
      const double y = labels_[r];
      const double coef = -y * detail::sigmoid(-y * margin_of(p, r));
      const auto x = sample(r);
      for (std::size_t j = 0; j < dim_; ++j)
        g[j] += coef * x[j];
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (auto &gj : g)
      gj *= inv;
    return g;
  }

  ParamVector initial_point(std::uint64_t) const override {
    return ParamVector(std::vector<double>(dim_, 0.0));
  }

  ParamVector probe_point(std::uint64_t seed) const override {
    CounterRng rng(seed, 0x153);
    std::vector<double> w(dim_);
    for (auto &wi : w)
      wi = rng.normal();
    return ParamVector(std::move(w));
  }

private:
  std::vector<std::size_t> batch(std::uint64_t batch_seed) const {
    return detail::minibatch(n_, opts_.batch_size, data_seed_, batch_seed);
  }

  double margin_of(const ParamVector &p, std::size_t r) const {
    const auto x = sample(r);
    double z = 0.0;
    for (std::size_t j = 0; j < dim_; ++j)
      z += p[j] * x[j];
    return z;
  }

  void generate() {
    CounterRng w_rng(data_seed_, 0x10);
    CounterRng x_rng(data_seed_, 0x11);
    CounterRng flip_rng(data_seed_, 0x12);

    separator_.assign(dim_, 0.0);
    double norm = 0.0;
    for (auto &w : separator_) {
      w = w_rng.normal();
      norm += w * w;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      separator_[0] = 1.0;
      norm = 1.0;
    }
    for (auto &w : separator_)
      w /= norm;

    features_.assign(n_ * dim_, 0.0);
    labels_.assign(n_, 0.0);
    flipped_.assign(n_, false);
    for (std::size_t i = 0; i < n_; ++i) {
      double *x = features_.data() + i * dim_;
      double z = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) {
        x[j] = x_rng.normal();
        z += separator_[j] * x[j];
      }
      const double sign = z >= 0.0 ? 1.0 : -1.0;
      if (std::abs(z) < opts_.margin) {
        const double shift = sign * opts_.margin - z;
        for (std::size_t j = 0; j < dim_; ++j)
          x[j] += shift * separator_[j];
      }
      labels_[i] = sign;
      if (flip_rng.uniform() < opts_.label_noise) {
        labels_[i] = -sign;
        flipped_[i] = true;
      }
    }
  }

  std::size_t n_;
  std::size_t dim_;
  LogRegOptions opts_;
  std::uint64_t data_seed_ = 0;
  std::vector<double> separator_;
  std::vector<double> features_; // row-major n x dim
  std::vector<double> labels_;   // +-1
  std::vector<bool> flipped_;
};

// ---------------------------------------------------------------------------

struct MlpOptions {
  std::size_t batch_size = 32;
  /// Angular jitter of the spiral arms.
  double noise = 0.2;
};

/// Fully connected tanh network with a softmax cross-entropy head on the
/// two-class spiral.
///
/// layer_sizes runs from input to output and must start and end with 2.
/// Parameters are stored layer by layer as W_l (row-major, out x in) then
/// b_l. Spiral sample i of class c, with r = i / (n_c - 1):
///   angle = 4c + 4r + noise * N(0, 1),  x = (r sin angle, r cos angle).
class SpiralMlp final : public Problem {
public:
  static constexpr std::size_t kMaxParams = 50'000;

  SpiralMlp(std::vector<std::size_t> layer_sizes, std::size_t n_samples,
            std::uint64_t seed, MlpOptions opts = {})
      : sizes_(std::move(layer_sizes)), n_(n_samples), seed_(seed),
        opts_(opts) {
    if (sizes_.size() < 2)
      throw ConfigError("mlp: need at least an input and an output layer");
    if (sizes_.front() != 2 || sizes_.back() != 2)
      throw ConfigError("mlp: spiral data needs 2 inputs and 2 outputs");
    if (std::any_of(sizes_.begin(), sizes_.end(),
                    [](std::size_t s) { return s == 0; }))
      throw ConfigError("mlp: layer sizes must be positive");
    if (n_ < 2)
      throw ConfigError("mlp: need at least 2 samples");
    if (opts_.batch_size < 1)
      throw ConfigError("mlp: batch_size must be >= 1");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      if (in * out > kMaxParams || offset > kMaxParams)
        throw ConfigError("mlp: network exceeds 50000 parameters");
      manifest_.push_back({"W" + std::to_string(l), offset, in * out});
      offset += in * out;
      manifest_.push_back({"b" + std::to_string(l), offset, out});
      offset += out;
    }
    if (offset > kMaxParams)
      throw ConfigError("mlp: network exceeds 50000 parameters");
    n_params_ = offset;
    generate();
  }

  std::string name() const override { return "mlp"; }
  std::size_t dim() const override { return n_params_; }
  bool stochastic() const override { return true; }
  const std::vector<ShapeEntry> &manifest() const noexcept { return manifest_; }
  std::size_t n_samples() const noexcept { return n_; }

  double loss(const ParamVector &p, std::uint64_t batch_seed) const override {
    check_dim(p);
    const auto rows = batch(batch_seed);
    Workspace ws(sizes_);
    double sum = 0.0;
    for (std::size_t r : rows)
      sum += forward(p, r, ws);
    return sum / static_cast<double>(rows.size());
  }

  GradVector gradient(const ParamVector &p,
                      std::uint64_t batch_seed) const override {
    check_dim(p);
    const auto rows = batch(batch_seed);
    Workspace ws(sizes_);
    GradVector g(n_params_, 0.0);
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t r : rows) {
      forward(p, r, ws);
      backward(p, r, inv, ws, g);
    }
    return g;
  }

  /// W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  ParamVector initial_point(std::uint64_t seed) const override {
    return init(seed, 1.0);
  }

  ParamVector probe_point(std::uint64_t seed) const override {
    return init(seed ^ 0x9999, 2.0);
  }

private:
  struct Workspace {
    std::vector<std::vector<double>> act; // act[0] = input, act[L] = logits
    std::vector<std::vector<double>> delta;
    explicit Workspace(const std::vector<std::size_t> &sizes) {
      for (std::size_t s : sizes) {
        act.emplace_back(s, 0.0);
        delta.emplace_back(s, 0.0);
      }
    }
  };

  ParamVector init(std::uint64_t seed, double scale) const {
    CounterRng rng(seed, 0x20);
    std::vector<double> x(n_params_);
    std::size_t pos = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double bound =
          scale / std::sqrt(static_cast<double>(sizes_[l]));
      const std::size_t count = sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
      for (std::size_t k = 0; k < count; ++k)
        x[pos++] = rng.uniform(-bound, bound);
    }
    return ParamVector(std::move(x), manifest_);
  }

  std::vector<std::size_t> batch(std::uint64_t batch_seed) const {
    return detail::minibatch(n_, opts_.batch_size, seed_, batch_seed);
  }

  /// Fills ws.act and returns the cross-entropy of sample r.
  double forward(const ParamVector &p, std::size_t r, Workspace &ws) const {
    ws.act[0][0] = inputs_[2 * r];
    ws.act[0][1] = inputs_[2 * r + 1];
    const std::size_t layers = sizes_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const std::size_t w_off = manifest_[2 * l].offset;
      const std::size_t b_off = manifest_[2 * l + 1].offset;
      for (std::size_t o = 0; o < out; ++o) {
        double z = p[b_off + o];
        for (std::size_t i = 0; i < in; ++i)
          z += p[w_off + o * in + i] * ws.act[l][i];
        ws.act[l + 1][o] = (l + 1 == layers) ? z : std::tanh(z);
      }
    }
    const auto &logits = ws.act[layers];
    const double mx = std::max(logits[0], logits[1]);
    const double lse =
        mx + std::log(std::exp(logits[0] - mx) + std::exp(logits[1] - mx));
    return lse - logits[classes_[r]];
  }

  void backward(const ParamVector &p, std::size_t r, double scale,
                Workspace &ws, GradVector &g) const {
    const std::size_t layers = sizes_.size() - 1;
    auto &logits = ws.act[layers];
    const double mx = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
    ws.delta[layers][0] = scale * (e0 / (e0 + e1) - (classes_[r] == 0));
    ws.delta[layers][1] = scale * (e1 / (e0 + e1) - (classes_[r] == 1));
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      const std::size_t w_off = manifest_[2 * l].offset;
      const std::size_t b_off = manifest_[2 * l + 1].offset;
      for (std::size_t o = 0; o < out; ++o) {
        const double d = ws.delta[l + 1][o];
        g[b_off + o] += d;
        for (std::size_t i = 0; i < in; ++i)
          g[w_off + o * in + i] += d * ws.act[l][i];
      }
      if (l == 0)
        break;
      for (std::size_t i = 0; i < in; ++i) {
        double back = 0.0;
        for (std::size_t o = 0; o < out; ++o)
          back += p[w_off + o * in + i] * ws.delta[l + 1][o];
        const double a = ws.act[l][i];
        ws.delta[l][i] = back * (1.0 - a * a);
      }
    }
  }

  void generate() {
    CounterRng rng(seed_, 0x21);
    inputs_.assign(2 * n_, 0.0);
    classes_.assign(n_, 0);
    const std::size_t n0 = (n_ + 1) / 2;
    std::size_t row = 0;
    for (int c = 0; c < 2; ++c) {
      const std::size_t nc = c == 0 ? n0 : n_ - n0;
      for (std::size_t i = 0; i < nc; ++i, ++row) {
        const double radius =
            nc > 1 ? static_cast<double>(i) / static_cast<double>(nc - 1)
                   : 0.0;
        const double angle =
            4.0 * c + 4.0 * radius + opts_.noise * rng.normal();
        inputs_[2 * row] = radius * std::sin(angle);
        inputs_[2 * row + 1] = radius * std::cos(angle);
        classes_[row] = c;
      }
    }
  }

  std::vector<std::size_t> sizes_;
  std::size_t n_;
  std::uint64_t seed_;
  MlpOptions opts_;
  std::vector<ShapeEntry> manifest_;
  std::size_t n_params_ = 0;
  std::vector<double> inputs_; // row-major n x 2
  std::vector<int> classes_;
};

// ---------------------------------------------------------------------------

inline ProblemPtr quadratic_problem(std::size_t dim, double condition_number,
                                    std::uint64_t seed) {
  return std::make_shared<const Quadratic>(dim, condition_number, seed);
}

inline ProblemPtr rosenbrock_problem(std::size_t dim) {
  return std::make_shared<const Rosenbrock>(dim);
}

inline ProblemPtr logreg_problem(std::size_t n_samples, std::size_t dim,
                                 std::uint64_t seed, LogRegOptions opts = {}) {
  return std::make_shared<const LogisticRegression>(n_samples, dim, seed,
                                                    opts);
}

inline ProblemPtr mlp_problem(std::vector<std::size_t> layer_sizes,
                              std::size_t n_samples, std::uint64_t seed,
                              MlpOptions opts = {}) {
  return std::make_shared<const SpiralMlp>(std::move(layer_sizes), n_samples,
                                           seed, opts);
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
inline GradVector finite_diff_grad(const Problem &problem,
                                   const ParamVector &params,
                                   std::uint64_t batch_seed, double h) {
  if (!(h > 0.0))
    throw ConfigError("finite_diff_grad: step must be positive");
  if (params.size() != problem.dim())
    throw DimensionError(problem.dim(), params.size());
  GradVector g(params.size());
  ParamVector probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double x = params[i];
    probe[i] = x + h;
    const double up = problem.loss(probe, batch_seed);
    probe[i] = x - h;
    const double down = problem.loss(probe, batch_seed);
    probe[i] = x;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("non-finite objective at finite-difference probe", i);
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(1, |a_i|).
inline double gradient_relative_error(std::span<const double> analytic,
                                      std::span<const double> numeric) {
  if (analytic.size() != numeric.size())
    throw DimensionError(analytic.size(), numeric.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) /
                                std::max(1.0, std::abs(analytic[i])));
  return worst;
}

} // namespace momental
