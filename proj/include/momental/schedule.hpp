#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "momental/error.hpp"
#include "momental/format.hpp"

namespace momental {

using Step = std::uint64_t;

class Schedule;

namespace schedule {

struct Constant {};

/// alpha0 -> alpha_w linearly over the first `steps` updates, then `then`.
struct LinearWarmup {
  double alpha0 = 0.0;
  double alpha_w = 0.0;
  Step steps = 1;
  std::shared_ptr<const Schedule> then;
};

/// base * factor^(number of milestones <= t).
struct StepDecay {
  std::vector<Step> milestones;
  double factor = 0.1;
};

} // namespace schedule

/// Step-size schedule alpha_t. A value type; nested schedules are shared
/// immutably.
class Schedule {
public:
  using Variant =
      std::variant<schedule::Constant, schedule::LinearWarmup,
                   schedule::StepDecay>;

  Schedule() = default;
  Schedule(Variant v) : v_(std::move(v)) {}

  static Schedule constant() { return Schedule{schedule::Constant{}}; }

  static Schedule step_decay(std::vector<Step> milestones, double factor) {
    return Schedule{schedule::StepDecay{std::move(milestones), factor}};
  }

  static Schedule linear_warmup(double alpha0, double alpha_w, Step steps,
                                Schedule then = constant()) {
    return Schedule{schedule::LinearWarmup{
        alpha0, alpha_w, steps,
        std::make_shared<const Schedule>(std::move(then))}};
  }

  const Variant &variant() const noexcept { return v_; }

  void validate() const {
    std::visit(
        [](const auto &s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, schedule::LinearWarmup>) {
            if (!(s.alpha0 >= 0.0 && s.alpha0 <= s.alpha_w) ||
                !std::isfinite(s.alpha_w))
              throw ConfigError("warmup requires 0 <= alpha0 <= alpha_w");
            if (s.steps < 1)
              throw ConfigError("warmup requires at least one step");
            if (!s.then)
              throw ConfigError("warmup requires a follow-up schedule");
            s.then->validate();
          } else if constexpr (std::is_same_v<T, schedule::StepDecay>) {
            if (!(s.factor > 0.0 && s.factor <= 1.0))
              throw ConfigError("step decay factor must lie in (0, 1]");
            for (std::size_t i = 1; i < s.milestones.size(); ++i)
              if (s.milestones[i] <= s.milestones[i - 1])
                throw ConfigError(
                    "step decay milestones must be strictly increasing");
          }
        },
        v_);
  }

  /// alpha_t for step t >= 1.
  ///
  /// After warmup the nested schedule runs on the re-based counter t - T_w
  /// with alpha_w as its base value, so warmup hands off continuously.
  double alpha(double base_alpha, Step t) const {
    return std::visit(
        [&](const auto &s) -> double {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, schedule::Constant>) {
            return base_alpha;
          } else if constexpr (std::is_same_v<T, schedule::LinearWarmup>) {
            if (t < s.steps)
              return s.alpha0 + ((s.alpha_w - s.alpha0) /
                                 static_cast<double>(s.steps)) *
                                    static_cast<double>(t);
            return s.then->alpha(s.alpha_w, t - s.steps);
          } else {
            double alpha = base_alpha;
            for (Step m : s.milestones) {
              if (m > t)
                break;
              alpha *= s.factor;
            }
            return alpha;
          }
        },
        v_);
  }

  /// Canonical text form, e.g. "warmup(0,0.001,4000,step_decay(150;225,0.1))".
  std::string describe() const {
    return std::visit(
        [](const auto &s) -> std::string {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, schedule::Constant>) {
            return "constant";
          } else if constexpr (std::is_same_v<T, schedule::LinearWarmup>) {
            return "warmup(" + format_double(s.alpha0) + "," +
                   format_double(s.alpha_w) + "," + std::to_string(s.steps) +
                   "," + (s.then ? s.then->describe() : "?") + ")";
          } else {
            std::string out = "step_decay(";
            for (std::size_t i = 0; i < s.milestones.size(); ++i)
              out += (i ? ";" : "") + std::to_string(s.milestones[i]);
            return out + "," + format_double(s.factor) + ")";
          }
        },
        v_);
  }

private:
  Variant v_{schedule::Constant{}};
};

inline double scheduled_alpha(const Schedule &schedule, double base_alpha,
                              Step t) {
  return schedule.alpha(base_alpha, t);
}

} // namespace momental
