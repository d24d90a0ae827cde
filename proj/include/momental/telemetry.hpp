#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "momental/error.hpp"
#include "momental/format.hpp"
#include "momental/optimizer.hpp"

namespace momental {

/// Log10-binned histogram of learning rates over [1e-12, 1e6), ten bins per
/// decade. Values below the range (including zero) go to underflow; values
/// at or above 1e6 and NaN go to overflow.
class LrHistogram {
public:
  static constexpr int kBinsPerDecade = 10;
  static constexpr int kLowDecade = -12;
  static constexpr int kHighDecade = 6;
  static constexpr std::size_t kBins =
      static_cast<std::size_t>((kHighDecade - kLowDecade) * kBinsPerDecade);

  static const std::array<double, kBins + 1> &edges() {
    static const auto table = [] {
      std::array<double, kBins + 1> e{};
      for (std::size_t k = 0; k <= kBins; ++k)
        e[k] = std::pow(10.0, static_cast<double>(
                                  static_cast<int>(k) +
                                  kLowDecade * kBinsPerDecade) /
                                  kBinsPerDecade);
      return e;
    }();
    return table;
  }

  /// Bin index of `x`, or -1 for underflow and kBins for overflow.
  static std::ptrdiff_t bin_of(double x) {
    const auto &e = edges();
    if (std::isnan(x) || x >= e.back())
      return static_cast<std::ptrdiff_t>(kBins);
    if (!(x >= e.front()))
      return -1;
    return std::upper_bound(e.begin(), e.end(), x) - e.begin() - 1;
  }

  void add(double x) {
    const auto b = bin_of(x);
    if (b < 0)
      ++underflow_;
    else if (b == static_cast<std::ptrdiff_t>(kBins))
      ++overflow_;
    else
      ++counts_[static_cast<std::size_t>(b)];
    ++observed_;
  }

  void add(std::span<const double> xs) {
    for (double x : xs)
      add(x);
  }

  const std::array<std::uint64_t, kBins> &counts() const noexcept {
    return counts_;
  }
  std::uint64_t underflow() const noexcept { return underflow_; }
  std::uint64_t overflow() const noexcept { return overflow_; }
  std::uint64_t observed() const noexcept { return observed_; }

  /// Binned mass plus under/overflow equals the number of values added.
  bool conserved() const noexcept {
    const auto binned =
        std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
    return binned + underflow_ + overflow_ == observed_;
  }

private:
  std::array<std::uint64_t, kBins> counts_{};
  std::uint64_t underflow_ = 0;
  std::uint64_t overflow_ = 0;
  std::uint64_t observed_ = 0;
};

/// Everything that identifies a run. Two runs are comparable for
/// aggregation when they differ only in `seed`.
struct RunConfig {
  std::string problem; // problem name plus its parameters, seed excluded
  OptimizerKind optimizer = OptimizerKind::adamod;
  HyperConfig hyper;
  std::uint64_t seed = 0;

  std::string canonical() const {
    return "problem=" + problem + ";optimizer=" +
           std::string(to_string(optimizer)) +
           ";alpha=" + format_double(hyper.base_alpha) +
           ";beta1=" + format_double(hyper.beta1) +
           ";beta2=" + format_double(hyper.beta2) +
           ";beta3=" + format_double(hyper.beta3) +
           ";epsilon=" + format_double(hyper.epsilon) +
           ";weight_decay=" + format_double(hyper.weight_decay) +
           ";schedule=" + hyper.schedule.describe();
  }
};

struct StepSummary {
  Step t = 0;
  double loss = 0.0;
  double max_lr = 0.0;
  double min_lr = 0.0;
  double mean_lr = 0.0;
};

struct HistogramWindow {
  Step start = 1;
  LrHistogram histogram;
};

struct Terminal {
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double best_loss = std::numeric_limits<double>::infinity();
  Step steps_run = 0;
  bool diverged = false;
};

struct RunRecord {
  RunConfig config;
  Step histogram_window = 100;
  std::vector<StepSummary> per_step;
  std::vector<HistogramWindow> histograms;
  Terminal terminal;

  void mark_diverged() noexcept { terminal.diverged = true; }
};

/// Appends the summary for step t and folds `effective_lr` into the
/// histogram window containing t. Windows are [1, W], [W+1, 2W], ...
inline RunRecord &record_step(RunRecord &rec, Step t, double loss,
                              std::span<const double> effective_lr) {
  if (t == 0)
    throw SequencingError("steps are numbered from 1");
  if (!rec.per_step.empty() && t <= rec.per_step.back().t)
    throw SequencingError("step " + std::to_string(t) +
                          " recorded after step " +
                          std::to_string(rec.per_step.back().t));
  if (rec.histogram_window == 0)
    throw ConfigError("histogram window must be >= 1");

  StepSummary row{t, loss, 0.0, 0.0, 0.0};
  if (effective_lr.empty()) {
    row.max_lr = row.min_lr = row.mean_lr =
        std::numeric_limits<double>::quiet_NaN();
  } else {
    const auto [lo, hi] =
        std::minmax_element(effective_lr.begin(), effective_lr.end());
    row.min_lr = *lo;
    row.max_lr = *hi;
    row.mean_lr = std::accumulate(effective_lr.begin(), effective_lr.end(),
                                  0.0) /
                  static_cast<double>(effective_lr.size());
  }
  rec.per_step.push_back(row);

  const Step start = ((t - 1) / rec.histogram_window) * rec.histogram_window + 1;
  if (rec.histograms.empty() || rec.histograms.back().start != start)
    rec.histograms.push_back({start, {}});
  rec.histograms.back().histogram.add(effective_lr);

  auto &term = rec.terminal;
  term.final_loss = loss;
  term.steps_run = rec.per_step.size();
  if (std::isfinite(loss))
    term.best_loss = std::min(term.best_loss, loss);
  else
    term.diverged = true;
  return rec;
}

// ---------------------------------------------------------------------------

struct SeedAggregate {
  std::string metric_name;
  double median = 0.0;
  double mean = 0.0;
  double std = 0.0; // population (divisor n)
  std::size_t n_seeds = 0;
};

enum class Metric { final_loss, best_loss, steps_run };

inline std::string_view to_string(Metric m) noexcept {
  switch (m) {
  case Metric::final_loss:
    return "final_loss";
  case Metric::best_loss:
    return "best_loss";
  case Metric::steps_run:
    return "steps_run";
  }
  return "?";
}

/// Terminal metric of a run. A NaN loss (diverged run) reads as +inf.
inline double metric_value(const RunRecord &rec, Metric m) {
  double x = 0.0;
  switch (m) {
  case Metric::final_loss:
    x = rec.terminal.final_loss;
    break;
  case Metric::best_loss:
    x = rec.terminal.best_loss;
    break;
  case Metric::steps_run:
    x = static_cast<double>(rec.terminal.steps_run);
    break;
  }
  return std::isnan(x) ? std::numeric_limits<double>::infinity() : x;
}

/// Median, mean and population std of a sample. Works on a sorted copy so
/// the result does not depend on input order.
inline SeedAggregate summarize(std::string name, std::vector<double> values) {
  if (values.empty())
    throw AggregationError("cannot aggregate an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  SeedAggregate out;
  out.metric_name = std::move(name);
  out.n_seeds = n;
  out.median = n % 2 == 1 ? values[n / 2]
                          : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(n);
  if (!std::isfinite(out.mean)) {
    out.std = std::numeric_limits<double>::infinity();
    return out;
  }
  double ss = 0.0;
  for (double x : values)
    ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(n));
  return out;
}

inline SeedAggregate aggregate_seeds(std::span<const RunRecord> records,
                                     Metric metric) {
  if (records.empty())
    throw AggregationError("no records to aggregate");
  const std::string key = records.front().config.canonical();
  std::vector<double> values;
  values.reserve(records.size());
  for (const auto &rec : records) {
    if (rec.config.canonical() != key)
      throw AggregationError("records differ in more than their seed: " +
                             key + " vs " + rec.config.canonical());
    values.push_back(metric_value(rec, metric));
  }
  return summarize(std::string(to_string(metric)), std::move(values));
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_steps_csv(std::ostream &os, const RunRecord &rec) {
  os << "t,loss,max_lr,min_lr,mean_lr\n";
  for (const auto &r : rec.per_step)
    os << r.t << ',' << format_double(r.loss) << ','
       << format_double(r.max_lr) << ',' << format_double(r.min_lr) << ','
       << format_double(r.mean_lr) << '\n';
}

/// One row per nonzero bin; underflow and overflow appear as rows with a
/// -inf lower or +inf upper bound.
inline void write_histogram_csv(std::ostream &os, const RunRecord &rec) {
  os << "t_window_start,bin_lo,bin_hi,count\n";
  const auto &edges = LrHistogram::edges();
  for (const auto &w : rec.histograms) {
    const auto &h = w.histogram;
    if (h.underflow() > 0)
      os << w.start << ",-inf," << format_double(edges.front()) << ','
         << h.underflow() << '\n';
    for (std::size_t b = 0; b < LrHistogram::kBins; ++b)
      if (h.counts()[b] > 0)
        os << w.start << ',' << format_double(edges[b]) << ','
           << format_double(edges[b + 1]) << ',' << h.counts()[b] << '\n';
    if (h.overflow() > 0)
      os << w.start << ',' << format_double(edges.back()) << ",+inf,"
         << h.overflow() << '\n';
  }
}

inline void write_aggregate_csv(std::ostream &os,
                                std::span<const SeedAggregate> rows) {
  os << "metric,median,mean,std,n_seeds\n";
  for (const auto &a : rows)
    os << a.metric_name << ',' << format_double(a.median) << ','
       << format_double(a.mean) << ',' << format_double(a.std) << ','
       << a.n_seeds << '\n';
}

/// Writes through `writer` into `path`, raising IoError on failure.
inline void write_file(const std::filesystem::path &path,
                       const std::function<void(std::ostream &)> &writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot open for writing", path.string());
  writer(out);
  out.flush();
  if (!out)
    throw IoError("write failed", path.string());
}

inline void export_steps_csv(const RunRecord &rec,
                             const std::filesystem::path &path) {
  write_file(path, [&](std::ostream &os) { write_steps_csv(os, rec); });
}

inline void export_histogram_csv(const RunRecord &rec,
                                 const std::filesystem::path &path) {
  write_file(path, [&](std::ostream &os) { write_histogram_csv(os, rec); });
}

inline void export_aggregate_csv(std::span<const SeedAggregate> rows,
                                 const std::filesystem::path &path) {
  write_file(path, [&](std::ostream &os) { write_aggregate_csv(os, rows); });
}

} // namespace momental
