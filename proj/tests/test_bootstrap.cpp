#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mboot/bootstrap.hpp"
#include "mboot/error.hpp"
#include "mboot/generators.hpp"
#include "mboot/optimizer.hpp"
#include "mboot/rng.hpp"

using namespace mboot;

namespace {

constexpr WeightLaw kLaws[] = {WeightLaw::rademacher_shifted, WeightLaw::gaussian, WeightLaw::exponential};

Model intercept_model(std::uint64_t seed, int n) {
  CounterRng rng(seed);
  std::normal_distribution<double> normal(0.5, 1.0);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = normal(rng);
  return Model(GaussianLinear{}, Dataset(y, Eigen::MatrixXd::Ones(n, 1)));
}

BootstrapSample sample_of(std::vector<double> stats) {
  BootstrapSample s;
  std::sort(stats.begin(), stats.end());
  s.stats = std::move(stats);
  return s;
}

}  // namespace

TEST(Rng, DeriveSeedIsPathSensitive) {
  EXPECT_NE(derive_seed(1, {0}), derive_seed(1, {1}));
  EXPECT_NE(derive_seed(1, {0, 1}), derive_seed(1, {1, 0}));
  EXPECT_NE(derive_seed(1, {0}), derive_seed(2, {0}));
  EXPECT_EQ(derive_seed(9, {3, 4}), derive_seed(9, {3, 4}));
}

TEST(Rng, UniformInUnitInterval) {
  CounterRng rng(42);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = rng.uniform();
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    sum += x;
  }
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / 100000.0, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / 100000.0));
}

TEST(SampleWeights, RademacherSupport) {
  const WeightVector u = sample_weights(WeightLaw::rademacher_shifted, 1000, 5);
  for (Eigen::Index i = 0; i < 1000; ++i) EXPECT_TRUE(u.values()(i) == 0.0 || u.values()(i) == 2.0);
  EXPECT_GT((u.values().array() == 0.0).count(), 400);
  EXPECT_GT((u.values().array() == 2.0).count(), 400);
}

TEST(SampleWeights, MomentsWithinCltBands) {
  const int n = 1000000;
  for (WeightLaw law : kLaws) {
    const Eigen::VectorXd u = sample_weights(law, n, 2024).values();
    const double mean = u.mean();
    const double var = (u.array() - mean).square().sum() / (n - 1);
    EXPECT_NEAR(mean, 1.0, 0.005) << to_string(law);
    EXPECT_NEAR(var, 1.0, 0.01) << to_string(law);
  }
}

TEST(SampleWeights, DeterministicGivenSeed) {
  for (WeightLaw law : kLaws) {
    EXPECT_EQ(sample_weights(law, 50, 3).values(), sample_weights(law, 50, 3).values());
    EXPECT_NE(sample_weights(law, 50, 3).values(), sample_weights(law, 50, 4).values());
  }
}

TEST(WeightLaw, NamesRoundTrip) {
  for (WeightLaw law : kLaws) EXPECT_EQ(parse_weight_law(to_string(law)), law);
  EXPECT_THROW(parse_weight_law("poisson"), std::invalid_argument);
}

TEST(DrawBootstrapSample, ForcedUnitWeightsGiveZero) {
  const Model m = intercept_model(1, 10);
  BootstrapOptions opts;
  opts.force_unit_weights = true;
  const BootstrapSample s = draw_bootstrap_sample(m, fit_mle(m).theta_hat, WeightLaw::rademacher_shifted, 1, 7, opts);
  ASSERT_EQ(s.stats.size(), 1u);
  EXPECT_EQ(s.stats[0], 0.0);
  EXPECT_EQ(s.resample_count, 0u);
}

TEST(DrawBootstrapSample, InterceptModelMatchesClosedForm) {
  // psi = 1: theta° = sum u y / sum u, so 2 LR° = (sum u r)^2 / sum u with r = y - ybar
  const int n = 30;
  const Model m = intercept_model(2, n);
  const Theta t = fit_mle(m).theta_hat;
  const Eigen::VectorXd r = m.data().y().array() - t(0);
  for (WeightLaw law : {WeightLaw::rademacher_shifted, WeightLaw::exponential}) {
    const std::size_t B = 500;
    const BootstrapSample s = draw_bootstrap_sample(m, t, law, B, 99);
    ASSERT_EQ(s.resample_count, 0u);
    std::vector<double> expected;
    for (std::size_t b = 0; b < B; ++b) {
      const Eigen::VectorXd u = sample_weights(law, n, derive_seed(99, {b})).values();
      expected.push_back(std::abs(u.dot(r)) / std::sqrt(u.sum()));
    }
    std::sort(expected.begin(), expected.end());
    for (std::size_t b = 0; b < B; ++b) EXPECT_NEAR(s.stats[b], expected[b], 1e-9);
  }
}

TEST(DrawBootstrapSample, SortedNonNegativeAndDeterministicAcrossThreads) {
  const TrueModelSpec spec = TrueModelSpec::logistic_bias(80, 0.3, 2);
  const Model m = spec.fit_model(spec.simulate(3));
  const Theta t = fit_mle(m).theta_hat;
  for (WeightLaw law : kLaws) {
    BootstrapOptions one, four;
    one.threads = 1;
    four.threads = 4;
    const BootstrapSample a = draw_bootstrap_sample(m, t, law, 300, 17, one);
    const BootstrapSample b = draw_bootstrap_sample(m, t, law, 300, 17, four);
    EXPECT_EQ(a.stats, b.stats);
    EXPECT_EQ(a.resample_count, b.resample_count);
    EXPECT_TRUE(std::is_sorted(a.stats.begin(), a.stats.end()));
    EXPECT_GE(a.stats.front(), 0.0);
  }
}

TEST(DrawBootstrapSample, PathologicalWhenEveryDrawDegenerates) {
  // two observations with Rademacher weights: {0,0} or a lone Bernoulli point
  // most of the time, which leaves no maximizer
  Eigen::MatrixXd psi(2, 1);
  psi << 1.0, 1.0;
  const Model m(BernoulliGlm{}, Dataset(Eigen::Vector2d(1.0, 0.0), psi));
  EXPECT_THROW(draw_bootstrap_sample(m, fit_mle(m).theta_hat, WeightLaw::rademacher_shifted, 50, 1),
               PathologicalSample);
}

TEST(DrawBootstrapSample, RejectsZeroDraws) {
  const Model m = intercept_model(1, 5);
  EXPECT_THROW(draw_bootstrap_sample(m, fit_mle(m).theta_hat, WeightLaw::gaussian, 0, 1), std::invalid_argument);
}

TEST(BootstrapQuantile, OrderStatisticConvention) {
  const BootstrapSample s = sample_of({4, 1, 3, 2});
  EXPECT_EQ(bootstrap_quantile(s, 0.25), 3.0);
  EXPECT_EQ(bootstrap_quantile(s, 0.5), 2.0);
  EXPECT_EQ(bootstrap_quantile(s, 0.99), 1.0);
  EXPECT_EQ(bootstrap_quantile(s, 0.01), 4.0);
  EXPECT_THROW(bootstrap_quantile(s, 0.0), std::invalid_argument);
  EXPECT_THROW(bootstrap_quantile(s, 1.0), std::invalid_argument);
}

TEST(BootstrapQuantile, SmallestValueMeetingTheTailBound) {
  // enumerate the defining inequality #{s > z} / B <= alpha over sample values
  std::mt19937_64 gen(1);
  std::exponential_distribution<double> expo;
  for (std::size_t B : {1u, 7u, 100u, 2000u}) {
    std::vector<double> v(B);
    for (auto& x : v) x = expo(gen);
    const BootstrapSample s = sample_of(v);
    for (double alpha : {0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.5, 0.9}) {
      double best = INFINITY;
      for (double z : s.stats) {
        const auto above = std::count_if(s.stats.begin(), s.stats.end(), [&](double x) { return x > z; });
        if (static_cast<double>(above) <= alpha * static_cast<double>(B) * (1 + 1e-12)) best = std::min(best, z);
      }
      EXPECT_EQ(bootstrap_quantile(s, alpha), best) << "B=" << B << " alpha=" << alpha;
    }
  }
}

TEST(BootstrapQuantile, MonotoneInAlphaAndConstantSample) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> normal;
  std::vector<double> v(333);
  for (auto& x : v) x = std::abs(normal(gen));
  const BootstrapSample s = sample_of(v);
  double prev = INFINITY;
  for (double alpha = 0.001; alpha < 1.0; alpha += 0.001) {
    const double q = bootstrap_quantile(s, alpha);
    EXPECT_LE(q, prev);
    prev = q;
  }
  const BootstrapSample c = sample_of(std::vector<double>(10, 2.5));
  for (double alpha : {0.01, 0.5, 0.99}) EXPECT_EQ(bootstrap_quantile(c, alpha), 2.5);
}

TEST(BootstrapQuantile, ConvergesWithB) {
  const Model m = intercept_model(5, 50);
  const Theta t = fit_mle(m).theta_hat;
  const double reference = bootstrap_quantile(draw_bootstrap_sample(m, t, WeightLaw::gaussian, 200000, 1), 0.1);
  double prev_err = INFINITY;
  for (std::size_t B : {100u, 1000u, 10000u}) {
    const double q = bootstrap_quantile(draw_bootstrap_sample(m, t, WeightLaw::gaussian, B, 1), 0.1);
    const double err = std::abs(q - reference);
    EXPECT_LT(err, prev_err) << "B=" << B;
    prev_err = err;
  }
}

TEST(SmoothIndicator, Boundaries) {
  for (double z : {0.5, 1.0, 5.0}) {
    for (double delta : {0.01, 0.1, 0.22}) {
      EXPECT_EQ(smooth_indicator(z, z, delta), 0.0);
      EXPECT_NEAR(smooth_indicator(std::sqrt(z * z + 2.0 * delta * z), z, delta), 1.0, 1e-12);
    }
  }
  EXPECT_THROW(smooth_indicator(1.0, 0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(smooth_indicator(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST(SmoothIndicator, LowerBoundsOnGrid) {
  // 1{x - z > delta} <= g_delta(x, z) <= 1{x > z}
  for (double z : {0.5, 1.0, 5.0}) {
    for (double delta : {0.01, 0.1, 0.22}) {
      for (int k = 0; k <= 10000; ++k) {
        const double x = 3.0 * z * k / 10000.0;
        const double g = smooth_indicator(x, z, delta);
        ASSERT_LE(x - z > delta ? 1.0 : 0.0, g) << x << " " << z << " " << delta;
        ASSERT_LE(g, x > z ? 1.0 : 0.0) << x << " " << z << " " << delta;
      }
    }
  }
}

TEST(SmoothIndicator, ShiftedUpperBoundOnGrid) {
  // 1{x > z} <= g_delta(x, z - delta) whenever z > delta
  for (double z : {0.5, 1.0, 5.0}) {
    for (double delta : {0.01, 0.1, 0.22}) {
      for (int k = 0; k <= 10000; ++k) {
        const double x = 3.0 * z * k / 10000.0;
        ASSERT_LE(x > z ? 1.0 : 0.0, smooth_indicator(x, z - delta, delta)) << x << " " << z << " " << delta;
      }
    }
  }
}

TEST(SmoothStep, ThreeTimesDifferentiable) {
  // One-sided stencils estimate g''' at knot -+ 1.5 h. A jump in g''' keeps
  // their gap bounded away from zero; a continuous g''' makes it shrink
  // linearly in h (g'''' is bounded by 840 near the knots).
  auto right = [](double t, double h) {
    return (-smooth_step(t) + 3 * smooth_step(t + h) - 3 * smooth_step(t + 2 * h) + smooth_step(t + 3 * h)) /
           (h * h * h);
  };
  auto left = [](double t, double h) {
    return (smooth_step(t) - 3 * smooth_step(t - h) + 3 * smooth_step(t - 2 * h) - smooth_step(t - 3 * h)) /
           (h * h * h);
  };
  for (double knot : {0.0, 1.0}) {
    const double coarse = std::abs(right(knot, 1e-3) - left(knot, 1e-3));
    const double fine = std::abs(right(knot, 1e-4) - left(knot, 1e-4));
    EXPECT_LT(fine, 840.0 * 2e-4);
    EXPECT_NEAR(fine / coarse, 0.1, 0.02) << "knot " << knot;
  }
  for (double t = 0.0; t <= 1.0; t += 0.01) {
    EXPECT_GE(smooth_step(t), 0.0);
    EXPECT_LE(smooth_step(t), 1.0);
    EXPECT_GE(smooth_step(t + 0.01), smooth_step(t));
  }
}

TEST(SmoothedQuantile, WithinDeltaOfPlainQuantile) {
  std::mt19937_64 gen(3);
  std::gamma_distribution<double> gamma(2.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(500);
    for (auto& x : v) x = gamma(gen);
    const BootstrapSample s = sample_of(v);
    for (double alpha : {0.01, 0.05, 0.1, 0.25}) {
      for (double delta : {0.01, 0.1, 0.22}) {
        const double plain = bootstrap_quantile(s, alpha);
        const double smooth = smoothed_bootstrap_quantile(s, alpha, delta);
        EXPECT_LE(smooth, plain + delta + 1e-8);
        EXPECT_GE(smooth, plain - delta - 1e-8);
        EXPECT_LE(mean_smooth_indicator(s.stats, smooth, delta), alpha);
      }
    }
  }
}

TEST(SmoothedQuantile, VanishingDelta) {
  std::mt19937_64 gen(4);
  std::exponential_distribution<double> expo;
  std::vector<double> v(1000);
  for (auto& x : v) x = expo(gen);
  const BootstrapSample s = sample_of(v);
  for (double alpha : {0.05, 0.1, 0.2}) {
    EXPECT_NEAR(smoothed_bootstrap_quantile(s, alpha, 1e-6), bootstrap_quantile(s, alpha), 1e-4);
  }
}

TEST(SmoothedQuantile, PointMass) {
  const BootstrapSample s = sample_of(std::vector<double>(20, 1.7));
  for (double delta : {0.01, 0.1, 0.22}) {
    const double q = smoothed_bootstrap_quantile(s, 0.5, delta);
    EXPECT_GE(q, 1.7 - delta);
    EXPECT_LE(q, 1.7 + delta);
  }
}

TEST(SmoothedQuantile, MeanIndicatorNonincreasingInZ) {
  std::mt19937_64 gen(5);
  std::exponential_distribution<double> expo;
  std::vector<double> v(300);
  for (auto& x : v) x = expo(gen);
  for (double delta : {0.01, 0.22}) {
    double prev = 1.0;
    for (double z = 0.001; z < 8.0; z += 0.001) {
      const double m = mean_smooth_indicator(v, z, delta);
      ASSERT_LE(m, prev + 1e-15);
      prev = m;
    }
  }
}

TEST(SmoothedQuantile, RejectsDeltaOutsideRange) {
  const BootstrapSample s = sample_of({1, 2, 3});
  EXPECT_THROW(smoothed_bootstrap_quantile(s, 0.1, 0.0), std::invalid_argument);
  EXPECT_THROW(smoothed_bootstrap_quantile(s, 0.1, 0.3), std::invalid_argument);
}
