#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "momental/error.hpp"
#include "momental/param.hpp"
#include "momental/schedule.hpp"

namespace momental {

/// Scalar hyperparameters shared by all optimizers.
///
/// Defaults are the usual Adam settings (beta1 = 0.9, beta2 = 0.999,
/// eps = 1e-8) with beta3 = 0.999. For SGDM, beta1 is the momentum factor
/// and beta2, beta3, epsilon are ignored.
struct HyperConfig {
  double base_alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double beta3 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  Schedule schedule = Schedule::constant();

  /// Transformer translation settings: beta2 = 0.98, eps = 1e-9.
  static HyperConfig transformer() {
    HyperConfig cfg;
    cfg.beta2 = 0.98;
    cfg.epsilon = 1e-9;
    return cfg;
  }

  void validate() const {
    auto in_unit = [](double b) { return b >= 0.0 && b < 1.0; };
    if (!(base_alpha > 0.0) || !std::isfinite(base_alpha))
      throw ConfigError("alpha must be a finite positive number");
    if (!in_unit(beta1))
      throw ConfigError("beta1 must lie in [0, 1)");
    if (!in_unit(beta2))
      throw ConfigError("beta2 must lie in [0, 1)");
    // beta3 = 1 would freeze s at zero and stall training for good.
    if (!in_unit(beta3))
      throw ConfigError("beta3 must lie in [0, 1)");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw ConfigError("epsilon must be a finite positive number");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
      throw ConfigError("weight_decay must be finite and non-negative");
    schedule.validate();
  }
};

/// Per-coordinate optimizer buffers.
///
/// m is the first moment (or the momentum buffer for SGDM), v the second
/// moment, s the moving average of adaptive learning rates. All start at
/// zero; t counts completed steps.
struct OptimizerState {
  Step t = 0;
  std::vector<double> m;
  std::vector<double> v;
  std::vector<double> s;

  OptimizerState() = default;
  explicit OptimizerState(std::size_t n) : m(n, 0.0), v(n, 0.0), s(n, 0.0) {}

  std::size_t size() const noexcept { return m.size(); }

  bool operator==(const OptimizerState &) const = default;
};

struct StepOutput {
  ParamVector new_params;
  /// Rate actually applied per coordinate: eta for Adam, min(eta, s) for
  /// AdaMod, alpha_t for SGDM. Weight decay is not included.
  std::vector<double> effective_lr;
  /// Unbounded rate alpha_t / (sqrt(v_hat) + eps); alpha_t for SGDM.
  std::vector<double> adaptive_lr;
  /// Adaptive displacement subtracted from the parameters before weight
  /// decay (effective_lr * m_hat, or alpha_t * m for SGDM).
  std::vector<double> update;
  /// Scheduled alpha_t used for this step.
  double loss_scale_alpha = 0.0;
};

enum class OptimizerKind { sgdm, adam, adamod };

inline std::string_view to_string(OptimizerKind k) noexcept {
  switch (k) {
  case OptimizerKind::sgdm:
    return "sgdm";
  case OptimizerKind::adam:
    return "adam";
  case OptimizerKind::adamod:
    return "adamod";
  }
  return "?";
}

inline std::optional<OptimizerKind> parse_optimizer(std::string_view name) {
  if (name == "sgdm")
    return OptimizerKind::sgdm;
  if (name == "adam")
    return OptimizerKind::adam;
  if (name == "adamod")
    return OptimizerKind::adamod;
  return std::nullopt;
}

namespace detail {

inline void check_step_inputs(const ParamVector &params,
                              std::span<const double> grad,
                              const OptimizerState &state) {
  if (grad.size() != params.size())
    throw DimensionError(params.size(), grad.size());
  if (state.m.size() != params.size() || state.v.size() != params.size() ||
      state.s.size() != params.size())
    throw DimensionError(params.size(), state.m.size());
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw NumericError("non-finite gradient", i);
  if (state.t == std::numeric_limits<Step>::max())
    throw StateError("step counter overflow");
}

/// Shared Adam/AdaMod path. `bound(i, eta)` returns the rate to apply for
/// coordinate i; Adam passes eta through.
template <typename Bound>
StepOutput adaptive_step(const ParamVector &params,
                         std::span<const double> grad, OptimizerState &state,
                         const HyperConfig &cfg, Bound &&bound) {
  check_step_inputs(params, grad, state);
  const Step t = ++state.t;
  const double alpha = cfg.schedule.alpha(cfg.base_alpha, t);
  const double td = static_cast<double>(t);
  const double bias1 = 1.0 - std::pow(cfg.beta1, td);
  const double bias2 = 1.0 - std::pow(cfg.beta2, td);
  const double decay = alpha * cfg.weight_decay;

  const std::size_t n = params.size();
  StepOutput out;
  out.loss_scale_alpha = alpha;
  out.effective_lr.resize(n);
  out.adaptive_lr.resize(n);
  out.update.resize(n);
  std::vector<double> theta(n);

  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * (g * g);
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    const double eta = alpha / (std::sqrt(v_hat) + cfg.epsilon);
    const double rate = bound(i, eta);
    const double step = rate * m_hat;
    out.adaptive_lr[i] = eta;
    out.effective_lr[i] = rate;
    out.update[i] = step;
    theta[i] = params[i] - step - decay * params[i];
  }
  out.new_params = params.with_values(std::move(theta));
  return out;
}

} // namespace detail

/// One Adam update. Mutates `state` (moments and step counter).
inline StepOutput adam_step(const ParamVector &params,
                            std::span<const double> grad,
                            OptimizerState &state, const HyperConfig &cfg) {
  return detail::adaptive_step(params, grad, state, cfg,
                               [](std::size_t, double eta) { return eta; });
}

/// One AdaMod update: Adam's rate eta is smoothed into
/// s <- beta3 * s + (1 - beta3) * eta (s starts at zero and is not bias
/// corrected) and the applied rate is min(eta, s).
inline StepOutput adamod_step(const ParamVector &params,
                              std::span<const double> grad,
                              OptimizerState &state, const HyperConfig &cfg) {
  const double beta3 = cfg.beta3;
  auto &s = state.s;
  return detail::adaptive_step(
      params, grad, state, cfg, [&s, beta3](std::size_t i, double eta) {
        s[i] = beta3 * s[i] + (1.0 - beta3) * eta;
        return std::min(eta, s[i]);
      });
}

/// Heavy-ball SGD: m <- beta1 * m + g, theta <- theta - alpha_t * m.
inline StepOutput sgdm_step(const ParamVector &params,
                            std::span<const double> grad,
                            OptimizerState &state, const HyperConfig &cfg) {
  detail::check_step_inputs(params, grad, state);
  const Step t = ++state.t;
  const double alpha = cfg.schedule.alpha(cfg.base_alpha, t);
  const double decay = alpha * cfg.weight_decay;
  const std::size_t n = params.size();

  StepOutput out;
  out.loss_scale_alpha = alpha;
  out.effective_lr.assign(n, alpha);
  out.adaptive_lr.assign(n, alpha);
  out.update.resize(n);
  std::vector<double> theta(n);
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + grad[i];
    const double step = alpha * state.m[i];
    out.update[i] = step;
    theta[i] = params[i] - step - decay * params[i];
  }
  out.new_params = params.with_values(std::move(theta));
  return out;
}

inline StepOutput optimizer_step(OptimizerKind kind, const ParamVector &params,
                                 std::span<const double> grad,
                                 OptimizerState &state,
                                 const HyperConfig &cfg) {
  switch (kind) {
  case OptimizerKind::sgdm:
    return sgdm_step(params, grad, state, cfg);
  case OptimizerKind::adam:
    return adam_step(params, grad, state, cfg);
  case OptimizerKind::adamod:
    return adamod_step(params, grad, state, cfg);
  }
  throw ConfigError("unknown optimizer");
}

/// Reference for the learning-rate moving average: evaluates the unrolled
/// sum s_n = sum_k (1 - beta3) * beta3^(n-k) * eta_k directly from s_0 = 0.
/// Meant for cross-checking adamod_step, not for production use.
inline std::vector<double>
ema_expansion_oracle(std::span<const std::vector<double>> eta_history,
                     double beta3) {
  if (eta_history.empty())
    throw Error("ema_expansion_oracle: empty history");
  const std::size_t n = eta_history.size();
  const std::size_t dim = eta_history.front().size();
  std::vector<double> s(dim, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (eta_history[k].size() != dim)
      throw DimensionError(dim, eta_history[k].size());
    const double weight =
        (1.0 - beta3) * std::pow(beta3, static_cast<double>(n - 1 - k));
    for (std::size_t i = 0; i < dim; ++i)
      s[i] += weight * eta_history[k][i];
  }
  return s;
}

} // namespace momental
