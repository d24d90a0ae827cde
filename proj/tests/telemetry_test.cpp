#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "momental/rng.hpp"
#include "momental/telemetry.hpp"

namespace momental {
namespace {

RunRecord record_with_final_loss(double loss, std::uint64_t seed = 1) {
  RunRecord rec;
  rec.config.problem = "quadratic(dim=1,condition_number=1)";
  rec.config.seed = seed;
  const std::vector<double> lr{1e-3};
  record_step(rec, 1, loss, lr);
  return rec;
}

TEST(LrHistogram, EdgesCoverRangeTenPerDecade) {
  const auto &e = LrHistogram::edges();
  EXPECT_EQ(e.size(), 181u);
  EXPECT_EQ(e.front(), 1e-12);
  EXPECT_EQ(e.back(), 1e6);
  EXPECT_EQ(e[120], 1.0);
  EXPECT_TRUE(std::is_sorted(e.begin(), e.end()));
  EXPECT_EQ(std::adjacent_find(e.begin(), e.end()), e.end());
}

TEST(RecordStep, UniformRatesLandInOneBin) {
  RunRecord rec;
  const std::vector<double> lr(50, 0.001);
  record_step(rec, 1, 0.5, lr);
  const auto &h = rec.histograms.at(0).histogram;
  const auto b = LrHistogram::bin_of(0.001);
  EXPECT_EQ(h.counts()[static_cast<std::size_t>(b)], 50u);
  EXPECT_LE(LrHistogram::edges()[b], 0.001);
  EXPECT_GT(LrHistogram::edges()[b + 1], 0.001);
  EXPECT_EQ(h.underflow() + h.overflow(), 0u);
  EXPECT_TRUE(h.conserved());
  EXPECT_EQ(rec.per_step[0].max_lr, 0.001);
  EXPECT_EQ(rec.per_step[0].min_lr, 0.001);
}

TEST(RecordStep, OverflowAndUnderflow) {
  RunRecord rec;
  const std::vector<double> lr{1e7, 1e-3, 0.0, 1e-13};
  record_step(rec, 1, 0.5, lr);
  const auto &h = rec.histograms[0].histogram;
  EXPECT_EQ(h.overflow(), 1u);
  EXPECT_EQ(h.underflow(), 2u);
  EXPECT_EQ(h.observed(), 4u);
  EXPECT_TRUE(h.conserved());
}

TEST(RecordStep, DistinctDecadesDistinctBins) {
  RunRecord rec;
  const std::vector<double> lr{1e-4, 1e-2};
  record_step(rec, 1, 0.5, lr);
  const auto &c = rec.histograms[0].histogram.counts();
  EXPECT_EQ(std::count(c.begin(), c.end(), 1u), 2);
  EXPECT_EQ(LrHistogram::bin_of(1e-2) - LrHistogram::bin_of(1e-4), 20);
}

TEST(RecordStep, WindowsAndSummaries) {
  RunRecord rec;
  rec.histogram_window = 100;
  const std::vector<double> lr{1e-3, 3e-3};
  for (Step t = 1; t <= 250; ++t)
    record_step(rec, t, 1.0 / t, lr);
  ASSERT_EQ(rec.histograms.size(), 3u);
  EXPECT_EQ(rec.histograms[0].start, 1u);
  EXPECT_EQ(rec.histograms[1].start, 101u);
  EXPECT_EQ(rec.histograms[2].start, 201u);
  EXPECT_EQ(rec.histograms[0].histogram.observed(), 200u);
  EXPECT_EQ(rec.histograms[2].histogram.observed(), 100u);
  EXPECT_DOUBLE_EQ(rec.per_step[3].mean_lr, 2e-3);
  EXPECT_EQ(rec.terminal.steps_run, 250u);
  EXPECT_EQ(rec.terminal.final_loss, 1.0 / 250);
  EXPECT_EQ(rec.terminal.best_loss, 1.0 / 250);
  EXPECT_FALSE(rec.terminal.diverged);
}

TEST(RecordStep, OutOfOrderIsRejected) {
  RunRecord rec;
  const std::vector<double> lr{1e-3};
  record_step(rec, 5, 1.0, lr);
  EXPECT_THROW(record_step(rec, 5, 1.0, lr), SequencingError);
  EXPECT_THROW(record_step(rec, 3, 1.0, lr), SequencingError);
  EXPECT_NO_THROW(record_step(rec, 9, 1.0, lr));
}

TEST(RecordStep, NonFiniteLossMarksDivergence) {
  RunRecord rec;
  const std::vector<double> lr{1e-3};
  record_step(rec, 1, 2.0, lr);
  record_step(rec, 2, std::numeric_limits<double>::infinity(), lr);
  EXPECT_TRUE(rec.terminal.diverged);
  EXPECT_EQ(rec.terminal.best_loss, 2.0);
}

TEST(AggregateSeeds, Examples) {
  const std::vector<RunRecord> single{record_with_final_loss(0.5)};
  const auto a = aggregate_seeds(single, Metric::final_loss);
  EXPECT_EQ(a.median, 0.5);
  EXPECT_EQ(a.mean, 0.5);
  EXPECT_EQ(a.std, 0.0);
  EXPECT_EQ(a.n_seeds, 1u);

  const std::vector<RunRecord> three{record_with_final_loss(1, 1),
                                     record_with_final_loss(2, 2),
                                     record_with_final_loss(3, 3)};
  const auto b = aggregate_seeds(three, Metric::final_loss);
  EXPECT_EQ(b.median, 2.0);
  EXPECT_EQ(b.mean, 2.0);
  EXPECT_NEAR(b.std, std::sqrt(2.0 / 3.0), 1e-15);

  std::vector<RunRecord> four;
  for (std::uint64_t s = 1; s <= 4; ++s)
    four.push_back(record_with_final_loss(4, s));
  const auto c = aggregate_seeds(four, Metric::final_loss);
  EXPECT_EQ(c.median, 4.0);
  EXPECT_EQ(c.std, 0.0);
}

TEST(AggregateSeeds, EvenCountMedianAndEmptyInput) {
  std::vector<RunRecord> recs;
  for (double v : {4.0, 1.0, 3.0, 2.0})
    recs.push_back(record_with_final_loss(v, recs.size()));
  EXPECT_EQ(aggregate_seeds(recs, Metric::final_loss).median, 2.5);
  EXPECT_THROW(aggregate_seeds({}, Metric::final_loss), AggregationError);
}

TEST(AggregateSeeds, MismatchedConfigsAreRejected) {
  auto a = record_with_final_loss(1, 1);
  auto b = record_with_final_loss(2, 2);
  b.config.hyper.beta3 = 0.9;
  const std::vector<RunRecord> recs{a, b};
  EXPECT_THROW(aggregate_seeds(recs, Metric::final_loss), AggregationError);
}

TEST(AggregateSeeds, PermutationInvariant) {
  CounterRng rng(5, 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<RunRecord> recs;
    const auto n = 1 + rng.below(9);
    for (std::uint64_t s = 0; s < n; ++s)
      recs.push_back(record_with_final_loss(rng.uniform(0, 10), s));
    const auto before = aggregate_seeds(recs, Metric::final_loss);
    std::reverse(recs.begin(), recs.end());
    std::swap(recs.front(), recs[recs.size() / 2]);
    const auto after = aggregate_seeds(recs, Metric::final_loss);
    EXPECT_EQ(before.median, after.median);
    EXPECT_EQ(before.mean, after.mean);
    EXPECT_EQ(before.std, after.std);
    EXPECT_GE(before.std, 0.0);
  }
}

TEST(AggregateSeeds, DivergedRunsCountAsInfinite) {
  auto bad = record_with_final_loss(std::nan(""), 2);
  const std::vector<RunRecord> recs{record_with_final_loss(1, 1), bad,
                                    record_with_final_loss(2, 3)};
  const auto a = aggregate_seeds(recs, Metric::final_loss);
  EXPECT_EQ(a.median, 2.0);
  EXPECT_TRUE(std::isinf(a.mean));
}

TEST(Csv, EmptyStepsIsHeaderOnly) {
  std::ostringstream os;
  write_steps_csv(os, RunRecord{});
  EXPECT_EQ(os.str(), "t,loss,max_lr,min_lr,mean_lr\n");
}

TEST(Csv, OneStepRow) {
  RunRecord rec;
  const std::vector<double> lr{0.001, 0.003};
  record_step(rec, 1, 0.25, lr);
  std::ostringstream os;
  write_steps_csv(os, rec);
  EXPECT_EQ(os.str(), "t,loss,max_lr,min_lr,mean_lr\n"
                      "1,0.25,0.003,0.001,0.002\n");
}

TEST(Csv, HistogramRowsOnlyForNonzeroBins) {
  RunRecord rec;
  const std::vector<double> lr{1e-4, 1e-2, 1e7, 0.0};
  record_step(rec, 1, 0.5, lr);
  std::ostringstream os;
  write_histogram_csv(os, rec);
  const auto &e = LrHistogram::edges();
  const auto b4 = LrHistogram::bin_of(1e-4), b2 = LrHistogram::bin_of(1e-2);
  const std::string expected =
      "t_window_start,bin_lo,bin_hi,count\n"
      "1,-inf,1e-12,1\n"
      "1," + format_double(e[b4]) + "," + format_double(e[b4 + 1]) + ",1\n"
      "1," + format_double(e[b2]) + "," + format_double(e[b2 + 1]) + ",1\n"
      "1,1e+06,+inf,1\n";
  EXPECT_EQ(os.str(), expected);
}

TEST(Csv, AggregateSchema) {
  std::ostringstream os;
  const std::vector<SeedAggregate> rows{{"final_loss", 2, 2, 0.5, 3}};
  write_aggregate_csv(os, rows);
  EXPECT_EQ(os.str(), "metric,median,mean,std,n_seeds\n"
                      "final_loss,2,2,0.5,3\n");
}

TEST(Csv, ShortestRoundTripFormatting) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1e-12), "1e-12");
  EXPECT_EQ(format_double(1.0 / 3.0), "0.3333333333333333");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
}

TEST(Csv, ExportWritesFileAndReportsBadPath) {
  const auto dir = std::filesystem::temp_directory_path() / "momental_csv_test";
  std::filesystem::create_directories(dir);
  RunRecord rec;
  export_steps_csv(rec, dir / "steps.csv");
  std::ifstream in(dir / "steps.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,loss,max_lr,min_lr,mean_lr");
  try {
    export_steps_csv(rec, dir / "missing" / "steps.csv");
    FAIL() << "expected IoError";
  } catch (const IoError &e) {
    EXPECT_NE(e.path().find("missing"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

} // namespace
} // namespace momental
