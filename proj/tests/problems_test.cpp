#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "momental/optimizer.hpp"
#include "momental/problems.hpp"

namespace momental {
namespace {

constexpr double kLn2 = std::numbers::ln2;

TEST(Quadratic, Examples) {
  const Quadratic q1(1, 1.0, 0);
  EXPECT_EQ(q1.loss(ParamVector({2.0}), 0), 2.0);
  EXPECT_EQ(q1.gradient(ParamVector({2.0}), 0), GradVector{2.0});

  const Quadratic q2(2, 100.0, 0);
  EXPECT_EQ(q2.curvature()[0], 1.0);
  EXPECT_EQ(q2.curvature()[1], 100.0);
  EXPECT_EQ(q2.loss(ParamVector({1.0, 1.0}), 0), 50.5);

  const Quadratic q10(10, 100.0, 0);
  const ParamVector zero(std::vector<double>(10, 0.0));
  EXPECT_EQ(q10.loss(zero, 0), 0.0);
  EXPECT_EQ(q10.gradient(zero, 0), GradVector(10, 0.0));
  EXPECT_NEAR(q10.curvature()[5] / q10.curvature()[4],
              q10.curvature()[1] / q10.curvature()[0], 1e-12);
}

TEST(Quadratic, InvalidArguments) {
  EXPECT_THROW(Quadratic(0, 10.0, 0), ConfigError);
  EXPECT_THROW(Quadratic(3, 0.5, 0), ConfigError);
  EXPECT_THROW(Quadratic(3, 10.0, 0).loss(ParamVector({1.0}), 0),
               DimensionError);
}

TEST(Rosenbrock, Examples) {
  const Rosenbrock r(2);
  EXPECT_EQ(r.loss(ParamVector({0.0, 0.0}), 0), 1.0);
  EXPECT_EQ(r.gradient(ParamVector({0.0, 0.0}), 0), (GradVector{-2.0, 0.0}));
  EXPECT_EQ(r.loss(ParamVector({1.0, 2.0}), 0), 100.0);
  EXPECT_EQ(r.gradient(ParamVector({1.0, 2.0}), 0),
            (GradVector{-400.0, 200.0}));
  for (std::size_t dim : {2, 3, 7}) {
    const Rosenbrock rd(dim);
    const auto opt = rd.optimum();
    ASSERT_TRUE(opt);
    EXPECT_EQ(rd.loss(opt->params, 0), 0.0);
    EXPECT_EQ(rd.gradient(opt->params, 0), GradVector(dim, 0.0));
  }
  EXPECT_THROW(Rosenbrock(1), ConfigError);
}

TEST(FiniteDiff, Examples) {
  const Quadratic q(1, 1.0, 0);
  EXPECT_NEAR(finite_diff_grad(q, ParamVector({2.0}), 0, 1e-5)[0], 2.0, 1e-9);

  const Rosenbrock r(2);
  const auto g = finite_diff_grad(r, ParamVector({0.0, 0.0}), 0, 1e-5);
  EXPECT_NEAR(g[0], -2.0, 1e-8);
  EXPECT_NEAR(g[1], 0.0, 1e-8);

  // Rosenbrock's third derivative at (1, 1) leaves an h^2 f'''/6 ~ 4e-8 bias.
  for (const auto &fd : {finite_diff_grad(r, r.optimum()->params, 0, 1e-5),
                         finite_diff_grad(q, q.optimum()->params, 0, 1e-5)})
    for (double gi : fd)
      EXPECT_NEAR(gi, 0.0, 1e-7);

  EXPECT_THROW(finite_diff_grad(q, ParamVector({2.0}), 0, 0.0), ConfigError);
}

/// Objective that is NaN away from the origin.
class Cliff final : public Problem {
public:
  std::string name() const override { return "cliff"; }
  std::size_t dim() const override { return 2; }
  bool stochastic() const override { return false; }
  double loss(const ParamVector &p, std::uint64_t) const override {
    return p[1] > 0.5 ? std::nan("") : p[0] * p[0];
  }
  GradVector gradient(const ParamVector &p, std::uint64_t) const override {
    return {2 * p[0], 0.0};
  }
  ParamVector initial_point(std::uint64_t) const override {
    return ParamVector({0.0, 0.5});
  }
};

TEST(FiniteDiff, NonFiniteProbeNamesCoordinate) {
  const Cliff cliff;
  try {
    finite_diff_grad(cliff, ParamVector({0.0, 0.5}), 0, 1e-3);
    FAIL() << "expected NumericError";
  } catch (const NumericError &e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(LogReg, ZeroWeightsGiveLn2) {
  const LogisticRegression lr(200, 5, 3);
  const ParamVector zero(std::vector<double>(5, 0.0));
  EXPECT_NEAR(lr.full_loss(zero), kLn2, 1e-13);
  EXPECT_NEAR(lr.loss(zero, 17), kLn2, 1e-13);
}

TEST(LogReg, GradientAtZeroMatchesFormulaAndFiniteDifferences) {
  const LogisticRegression lr(200, 5, 3);
  const ParamVector zero(std::vector<double>(5, 0.0));
  // At w = 0 every sigmoid is 1/2: grad = -mean(y x) / 2.
  std::vector<double> expected(5, 0.0);
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      expected[j] += -0.5 * lr.labels()[i] * lr.sample(i)[j] / 200.0;
  const auto g = lr.gradient(zero, kFullBatch);
  const auto fd = finite_diff_grad(lr, zero, kFullBatch, 1e-5);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(g[j], expected[j], 1e-14);
    EXPECT_NEAR(g[j], fd[j], 1e-9);
  }
}

TEST(LogReg, ScaledSeparatorFitsCleanSubset) {
  const LogisticRegression lr(500, 8, 21);
  std::vector<double> w(lr.separator().begin(), lr.separator().end());
  for (auto &wi : w)
    wi *= 10.0;
  const auto clean = lr.clean_indices();
  EXPECT_LT(clean.size(), 500u); // some labels were flipped
  EXPECT_LT(lr.loss_on(ParamVector(w), clean), 0.01);
}

TEST(LogReg, MinibatchesCoverEpoch) {
  const LogisticRegression lr(100, 3, 5, LogRegOptions{32, 0.05, 0.5});
  const ParamVector w({0.3, -0.2, 0.1});
  // Four batches (32, 32, 32, 4) per epoch; their weighted mean is the full
  // loss.
  double sum = 0.0;
  for (std::uint64_t b = 0; b < 4; ++b)
    sum += lr.loss(w, b) * (b < 3 ? 32.0 : 4.0);
  EXPECT_NEAR(sum / 100.0, lr.full_loss(w), 1e-14);
  EXPECT_NE(lr.loss(w, 0), lr.loss(w, 4)); // next epoch reshuffles
  EXPECT_EQ(lr.loss(w, 9), lr.loss(w, 9));
}

TEST(LogReg, DegenerateDatasetIsRejected) {
  // One sample always has a single label class.
  EXPECT_THROW(LogisticRegression(1, 1, 0), ConfigError);
  EXPECT_THROW(LogisticRegression(3, 5, 0), ConfigError);
  const LogisticRegression ok(4, 1, 0);
  const auto positives =
      std::count(ok.labels().begin(), ok.labels().end(), 1.0);
  EXPECT_GT(positives, 0);
  EXPECT_LT(positives, 4);
}

TEST(Mlp, ZeroWeightsGiveLn2) {
  const SpiralMlp mlp({2, 16, 16, 2}, 100, 1);
  const ParamVector zero(std::vector<double>(mlp.dim(), 0.0), mlp.manifest());
  EXPECT_NEAR(mlp.full_loss(zero), kLn2, 1e-15);
  EXPECT_NEAR(mlp.loss(zero, 3), kLn2, 1e-15);
}

TEST(Mlp, LayoutAndLimits) {
  const SpiralMlp mlp({2, 16, 16, 2}, 100, 1);
  EXPECT_EQ(mlp.dim(), 2u * 16 + 16 + 16 * 16 + 16 + 16 * 2 + 2);
  EXPECT_EQ(mlp.manifest().size(), 6u);
  EXPECT_EQ(mlp.manifest().back().name, "b2");
  EXPECT_EQ(mlp.initial_point(4).manifest(), mlp.manifest());

  EXPECT_THROW(SpiralMlp({2, 300, 300, 2}, 100, 1), ConfigError);
  EXPECT_THROW(SpiralMlp({2}, 100, 1), ConfigError);
  EXPECT_THROW(SpiralMlp({3, 4, 2}, 100, 1), ConfigError);
  EXPECT_THROW(SpiralMlp({2, 0, 2}, 100, 1), ConfigError);
}

TEST(Mlp, InitIsScaledUniform) {
  const SpiralMlp mlp({2, 16, 2}, 50, 1);
  const auto p = mlp.initial_point(9);
  for (const auto &entry : mlp.manifest()) {
    const double bound = entry.name.back() == '0' ? 1 / std::sqrt(2.0)
                                                  : 1 / std::sqrt(16.0);
    for (std::size_t k = 0; k < entry.length; ++k)
      EXPECT_LE(std::abs(p[entry.offset + k]), bound);
  }
  EXPECT_EQ(p, mlp.initial_point(9));
  EXPECT_NE(p, mlp.initial_point(10));
}

TEST(Problems, AnalyticGradientsMatchFiniteDifferences) {
  const std::vector<ProblemPtr> problems{
      quadratic_problem(10, 100.0, 1), rosenbrock_problem(5),
      logreg_problem(256, 10, 1), mlp_problem({2, 16, 16, 2}, 128, 1)};
  for (const auto &p : problems) {
    for (std::uint64_t k = 0; k < 20; ++k) {
      const auto x = p->probe_point(k);
      const auto err = gradient_relative_error(
          p->gradient(x, k), finite_diff_grad(*p, x, k, 1e-5));
      EXPECT_LT(err, 1e-5) << p->name() << " point " << k;
    }
  }
}

TEST(Problems, PureGivenBatchSeed) {
  const std::vector<ProblemPtr> problems{
      quadratic_problem(4, 10.0, 1), rosenbrock_problem(3),
      logreg_problem(64, 4, 2), mlp_problem({2, 8, 2}, 64, 3)};
  for (const auto &p : problems) {
    const auto x = p->probe_point(5);
    EXPECT_EQ(p->loss(x, 2), p->loss(x, 2));
    EXPECT_EQ(p->gradient(x, 2), p->gradient(x, 2));
    if (!p->stochastic()) {
      EXPECT_EQ(p->loss(x, 2), p->loss(x, 3));
    }
    EXPECT_EQ(p->gradient(x, 0).size(), p->dim());
  }
  // Rebuilding from the same seed gives the same dataset.
  EXPECT_EQ(logreg_problem(64, 4, 2)->full_loss(ParamVector({1, 1, 1, 1})),
            logreg_problem(64, 4, 2)->full_loss(ParamVector({1, 1, 1, 1})));
}

TEST(Mlp, OneAdamStepUsuallyHelps) {
  // Over 100 seeds, one Adam step at alpha = 1e-3 lowers the loss of the
  // minibatch it was computed on in at least 95 of them.
  int improved = 0;
  HyperConfig cfg;
  cfg.base_alpha = 1e-3;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SpiralMlp mlp({2, 16, 16, 2}, 256, seed);
    const auto x = mlp.initial_point(seed);
    OptimizerState st(x.size());
    const auto out = adam_step(x, mlp.gradient(x, 0), st, cfg);
    improved += mlp.loss(out.new_params, 0) < mlp.loss(x, 0);
  }
  EXPECT_GE(improved, 95);
}

} // namespace
} // namespace momental
