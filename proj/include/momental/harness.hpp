#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include "momental/error.hpp"
#include "momental/format.hpp"
#include "momental/optimizer.hpp"
#include "momental/problems.hpp"
#include "momental/telemetry.hpp"

namespace momental {

struct ProblemSpec {
  std::string name = "quadratic";
  std::size_t dim = 10;
  double condition_number = 100.0;
  std::size_t n_samples = 512;
  std::vector<std::size_t> layer_sizes{2, 16, 16, 2};
  std::size_t batch_size = 32;
  double label_noise = 0.05;
  double spiral_noise = 0.2;

  /// Default parameters for a named problem.
  static ProblemSpec defaults(std::string_view name) {
    ProblemSpec p;
    p.name = std::string(name);
    if (name == "rosenbrock")
      p.dim = 2;
    else if (name == "mlp")
      p.n_samples = 256;
    else if (name != "quadratic" && name != "logreg")
      throw ConfigError("unknown problem '" + std::string(name) + "'");
    return p;
  }

  ProblemPtr build(std::uint64_t seed) const {
    if (name == "quadratic")
      return quadratic_problem(dim, condition_number, seed);
    if (name == "rosenbrock")
      return rosenbrock_problem(dim);
    if (name == "logreg")
      return logreg_problem(n_samples, dim, seed,
                            LogRegOptions{batch_size, label_noise});
    if (name == "mlp")
      return mlp_problem(layer_sizes, n_samples, seed,
                         MlpOptions{batch_size, spiral_noise});
    throw ConfigError("unknown problem '" + name + "'");
  }

  /// Name plus the parameters that matter for it; excludes the seed.
  std::string describe() const {
    if (name == "quadratic")
      return "quadratic(dim=" + std::to_string(dim) +
             ",condition_number=" + format_double(condition_number) + ")";
    if (name == "rosenbrock")
      return "rosenbrock(dim=" + std::to_string(dim) + ")";
    if (name == "logreg")
      return "logreg(n_samples=" + std::to_string(n_samples) +
             ",dim=" + std::to_string(dim) +
             ",batch_size=" + std::to_string(batch_size) +
             ",label_noise=" + format_double(label_noise) + ")";
    std::string layers;
    for (std::size_t i = 0; i < layer_sizes.size(); ++i)
      layers += (i ? ";" : "") + std::to_string(layer_sizes[i]);
    return "mlp(layer_sizes=" + layers +
           ",n_samples=" + std::to_string(n_samples) +
           ",batch_size=" + std::to_string(batch_size) +
           ",spiral_noise=" + format_double(spiral_noise) + ")";
  }
};

/// One optimizer on one problem over a list of seeds.
struct ExperimentSpec {
  ProblemSpec problem;
  OptimizerKind optimizer = OptimizerKind::adamod;
  HyperConfig hyper;
  // Warmup/decay settings as written in the config; `hyper.schedule` is
  // rebuilt from them by rebuild_schedule().
  Step warmup_steps = 0;
  double warmup_init = 0.0;
  std::vector<Step> decay_milestones;
  double decay_factor = 0.1;

  Step steps = 1000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  Step histogram_window = 100;
  std::optional<std::filesystem::path> out_dir;

  void rebuild_schedule() {
    Schedule base = decay_milestones.empty()
                        ? Schedule::constant()
                        : Schedule::step_decay(decay_milestones, decay_factor);
    hyper.schedule = warmup_steps > 0
                         ? Schedule::linear_warmup(warmup_init,
                                                   hyper.base_alpha,
                                                   warmup_steps, base)
                         : base;
  }

  void validate() const {
    if (steps < 1)
      throw ConfigError("steps must be >= 1");
    if (seeds.empty())
      throw ConfigError("seeds must not be empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() !=
        seeds.size())
      throw ConfigError("seeds must be distinct");
    if (histogram_window < 1)
      throw ConfigError("histogram_window must be >= 1");
    hyper.validate();
    problem.build(seeds.front());
  }

  RunConfig run_config(std::uint64_t seed) const {
    return RunConfig{problem.describe(), optimizer, hyper, seed};
  }
};

// ---------------------------------------------------------------------------
// Config files
//
// One `key = value` pair per line. `#` starts a comment that runs to the end
// of the line; blank lines are ignored. Lists are comma-separated. Keys may
// appear at most once; unknown keys are an error.

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos)
      break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

inline double parse_real(std::string_view key, std::string_view text) {
  double x = 0.0;
  const auto *end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, x);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ConfigError("'" + std::string(key) + "': not a number: '" +
                      std::string(text) + "'");
  return x;
}

inline std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  std::uint64_t x = 0;
  const auto *end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, x);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ConfigError("'" + std::string(key) +
                      "': not a non-negative integer: '" + std::string(text) +
                      "'");
  return x;
}

template <typename T>
std::vector<T> parse_uint_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  for (auto item : split_list(text))
    out.push_back(static_cast<T>(parse_uint(key, item)));
  return out;
}

template <typename T> std::string join(const std::vector<T> &xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i)
    out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

} // namespace detail

using ConfigMap = std::map<std::string, std::string, std::less<>>;

inline ConfigMap parse_key_values(std::string_view text) {
  ConfigMap kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{}
                                        : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(line_no) +
                        ": empty key or value");
    if (!kv.emplace(std::string(key), std::string(value)).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" +
                        std::string(key) + "'");
  }
  return kv;
}

/// Builds and validates an ExperimentSpec from config text.
inline ExperimentSpec parse_experiment(std::string_view text) {
  auto kv = parse_key_values(text);
  ExperimentSpec spec;

  auto take = [&](std::string_view key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end())
      return std::nullopt;
    auto v = std::move(it->second);
    kv.erase(it);
    return v;
  };
  auto real = [&](std::string_view key, double &dst) {
    if (auto v = take(key))
      dst = detail::parse_real(key, *v);
  };
  auto count = [&](std::string_view key, auto &dst) {
    if (auto v = take(key))
      dst = static_cast<std::remove_reference_t<decltype(dst)>>(
          detail::parse_uint(key, *v));
  };

  if (auto v = take("problem"))
    spec.problem = ProblemSpec::defaults(*v);
  count("dim", spec.problem.dim);
  real("condition_number", spec.problem.condition_number);
  count("n_samples", spec.problem.n_samples);
  if (auto v = take("layer_sizes"))
    spec.problem.layer_sizes =
        detail::parse_uint_list<std::size_t>("layer_sizes", *v);
  count("batch_size", spec.problem.batch_size);
  real("label_noise", spec.problem.label_noise);
  real("spiral_noise", spec.problem.spiral_noise);

  if (auto v = take("optimizer")) {
    const auto kind = parse_optimizer(*v);
    if (!kind)
      throw ConfigError("unknown optimizer '" + *v +
                        "' (expected sgdm, adam or adamod)");
    spec.optimizer = *kind;
  }
  real("alpha", spec.hyper.base_alpha);
  real("beta1", spec.hyper.beta1);
  real("beta2", spec.hyper.beta2);
  real("beta3", spec.hyper.beta3);
  real("epsilon", spec.hyper.epsilon);
  real("weight_decay", spec.hyper.weight_decay);
  count("warmup_steps", spec.warmup_steps);
  real("warmup_init", spec.warmup_init);
  if (auto v = take("decay_milestones"))
    spec.decay_milestones = detail::parse_uint_list<Step>("decay_milestones", *v);
  real("decay_factor", spec.decay_factor);

  count("steps", spec.steps);
  if (auto v = take("seeds"))
    spec.seeds = detail::parse_uint_list<std::uint64_t>("seeds", *v);
  count("histogram_window", spec.histogram_window);
  if (auto v = take("out_dir"))
    spec.out_dir = *v;

  if (!kv.empty())
    throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  spec.rebuild_schedule();
  spec.validate();
  return spec;
}

inline ExperimentSpec load_experiment(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot read config", path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment(buf.str());
}

/// Resolved config in the same grammar parse_experiment() accepts. The
/// output directory is left out so that artifacts do not depend on where
/// they were written.
inline std::string render_experiment(const ExperimentSpec &spec) {
  const auto &p = spec.problem;
  std::ostringstream os;
  os << "problem = " << p.name << '\n';
  if (p.name == "mlp")
    os << "layer_sizes = " << detail::join(p.layer_sizes) << '\n';
  else
    os << "dim = " << p.dim << '\n';
  if (p.name == "quadratic")
    os << "condition_number = " << format_double(p.condition_number) << '\n';
  if (p.name == "logreg" || p.name == "mlp")
    os << "n_samples = " << p.n_samples << '\n'
       << "batch_size = " << p.batch_size << '\n';
  if (p.name == "logreg")
    os << "label_noise = " << format_double(p.label_noise) << '\n';
  if (p.name == "mlp")
    os << "spiral_noise = " << format_double(p.spiral_noise) << '\n';
  const auto &h = spec.hyper;
  os << "optimizer = " << to_string(spec.optimizer) << '\n'
     << "alpha = " << format_double(h.base_alpha) << '\n'
     << "beta1 = " << format_double(h.beta1) << '\n'
     << "beta2 = " << format_double(h.beta2) << '\n'
     << "beta3 = " << format_double(h.beta3) << '\n'
     << "epsilon = " << format_double(h.epsilon) << '\n'
     << "weight_decay = " << format_double(h.weight_decay) << '\n';
  if (spec.warmup_steps > 0)
    os << "warmup_steps = " << spec.warmup_steps << '\n'
       << "warmup_init = " << format_double(spec.warmup_init) << '\n';
  if (!spec.decay_milestones.empty())
    os << "decay_milestones = " << detail::join(spec.decay_milestones) << '\n'
       << "decay_factor = " << format_double(spec.decay_factor) << '\n';
  os << "steps = " << spec.steps << '\n'
     << "seeds = " << detail::join(spec.seeds) << '\n'
     << "histogram_window = " << spec.histogram_window << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Running

/// Called after every successful step with the new parameters, the step
/// output, the optimizer state after the update and the recorded loss.
using StepObserver =
    std::function<void(Step, const ParamVector &, const StepOutput &,
                       const OptimizerState &, double)>;

/// Runs one seed. The gradient at step t is taken on minibatch t - 1; the
/// recorded loss is the full-dataset loss at the updated parameters. A
/// non-finite gradient, loss or parameter ends the run with diverged set.
inline RunRecord run_single(const ExperimentSpec &spec, std::uint64_t seed,
                            const StepObserver &observer = {}) {
  const auto problem = spec.problem.build(seed);
  ParamVector params = problem->initial_point(seed);
  OptimizerState state(params.size());

  RunRecord rec;
  rec.config = spec.run_config(seed);
  rec.histogram_window = spec.histogram_window;

  for (Step t = 1; t <= spec.steps; ++t) {
    StepOutput out;
    try {
      const auto grad = problem->gradient(params, t - 1);
      out = optimizer_step(spec.optimizer, params, grad, state, spec.hyper);
    } catch (const NumericError &) {
      rec.mark_diverged();
      break;
    }
    params = std::move(out.new_params);
    const double loss = problem->full_loss(params);
    record_step(rec, t, loss, out.effective_lr);
    if (observer)
      observer(t, params, out, state, loss);
    if (!std::isfinite(loss) || !params.all_finite()) {
      rec.mark_diverged();
      break;
    }
  }
  return rec;
}

/// Runs every seed of `spec`, up to `parallel` at a time. Output order
/// follows spec.seeds and is independent of `parallel`.
inline std::vector<RunRecord> run_experiment(const ExperimentSpec &spec,
                                             unsigned parallel = 1) {
  spec.validate();
  std::vector<RunRecord> records(spec.seeds.size());
  const unsigned workers =
      std::max(1u, std::min<unsigned>(parallel,
                                      static_cast<unsigned>(spec.seeds.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < spec.seeds.size(); ++i)
      records[i] = run_single(spec, spec.seeds[i]);
    return records;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < spec.seeds.size(); i = next++) {
          try {
            records[i] = run_single(spec, spec.seeds[i]);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure)
              failure = std::current_exception();
          }
        }
      });
  }
  if (failure)
    std::rethrow_exception(failure);
  return records;
}

inline std::vector<SeedAggregate>
experiment_aggregates(std::span<const RunRecord> records) {
  return {aggregate_seeds(records, Metric::final_loss),
          aggregate_seeds(records, Metric::best_loss)};
}

inline void ensure_directory(const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory", dir.string());
}

/// Writes per-seed step and histogram CSVs, aggregate.csv and manifest.txt
/// into `dir`.
inline void write_experiment(const ExperimentSpec &spec,
                             std::span<const RunRecord> records,
                             const std::filesystem::path &dir) {
  ensure_directory(dir);
  for (const auto &rec : records) {
    const auto stem = "seed_" + std::to_string(rec.config.seed);
    export_steps_csv(rec, dir / (stem + "_steps.csv"));
    export_histogram_csv(rec, dir / (stem + "_histogram.csv"));
  }
  const auto aggregates = experiment_aggregates(records);
  export_aggregate_csv(aggregates, dir / "aggregate.csv");
  write_file(dir / "manifest.txt", [&](std::ostream &os) {
    os << render_experiment(spec);
    for (const auto &rec : records)
      os << "# seed " << rec.config.seed
         << ": steps_run=" << rec.terminal.steps_run
         << " final_loss=" << format_double(rec.terminal.final_loss)
         << " diverged=" << (rec.terminal.diverged ? "true" : "false")
         << '\n';
  });
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { alpha, beta3 };

inline std::optional<SweepAxis> parse_axis(std::string_view name) {
  if (name == "alpha")
    return SweepAxis::alpha;
  if (name == "beta3")
    return SweepAxis::beta3;
  return std::nullopt;
}

inline std::string_view to_string(SweepAxis a) noexcept {
  return a == SweepAxis::alpha ? "alpha" : "beta3";
}

struct SweepPoint {
  double value = 0.0;
  ExperimentSpec spec;
  std::vector<RunRecord> records;
  SeedAggregate final_loss;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::alpha;
  std::vector<SweepPoint> points;
  /// max - min of the per-value median final loss.
  double spread = 0.0;

  std::vector<SeedAggregate> rows() const {
    std::vector<SeedAggregate> out;
    for (const auto &p : points)
      out.push_back(p.final_loss);
    return out;
  }
};

inline ExperimentSpec with_axis_value(ExperimentSpec spec, SweepAxis axis,
                                      double value) {
  if (axis == SweepAxis::alpha)
    spec.hyper.base_alpha = value;
  else
    spec.hyper.beta3 = value;
  spec.rebuild_schedule();
  return spec;
}

/// Runs `base` once per value of `axis` and summarizes median final loss.
/// All values are validated before anything runs.
inline SweepResult run_sweep(const ExperimentSpec &base, SweepAxis axis,
                             std::span<const double> values,
                             unsigned parallel = 1) {
  if (values.empty())
    throw ConfigError("sweep needs at least one value");
  SweepResult result;
  result.axis = axis;
  for (double v : values) {
    SweepPoint point;
    point.value = v;
    point.spec = with_axis_value(base, axis, v);
    point.spec.validate();
    result.points.push_back(std::move(point));
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto &point : result.points) {
    point.records = run_experiment(point.spec, parallel);
    point.final_loss = aggregate_seeds(point.records, Metric::final_loss);
    point.final_loss.metric_name = "final_loss@" + std::string(to_string(axis)) +
                                   "=" + format_double(point.value);
    lo = std::min(lo, point.final_loss.median);
    hi = std::max(hi, point.final_loss.median);
  }
  result.spread = hi - lo;
  return result;
}

/// One subdirectory per value (`<axis>_<value>/`) with the experiment
/// artifacts, plus sweep.csv and manifest.txt at the top level.
inline void write_sweep(const ExperimentSpec &base, const SweepResult &result,
                        const std::filesystem::path &dir) {
  ensure_directory(dir);
  const std::string axis(to_string(result.axis));
  for (const auto &point : result.points)
    write_experiment(point.spec, point.records,
                     dir / (axis + "_" + format_double(point.value)));
  export_aggregate_csv(result.rows(), dir / "sweep.csv");
  write_file(dir / "manifest.txt", [&](std::ostream &os) {
    os << render_experiment(base);
    os << "# sweep_axis = " << axis << '\n' << "# sweep_values = ";
    for (std::size_t i = 0; i < result.points.size(); ++i)
      os << (i ? "," : "") << format_double(result.points[i].value);
    os << '\n'
       << "# sweep_spread = " << format_double(result.spread) << '\n';
  });
}

} // namespace momental
