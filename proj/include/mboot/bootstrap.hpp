#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mboot/error.hpp"
#include "mboot/model.hpp"
#include "mboot/optimizer.hpp"
#include "mboot/parallel.hpp"
#include "mboot/rng.hpp"

namespace mboot {

// Multiplier laws with mean 1 and variance 1.
enum class WeightLaw {
  rademacher_shifted,  // 2 * Bernoulli(1/2)
  gaussian,            // N(1, 1)
  exponential,         // Exp(1)
};

inline std::string_view to_string(WeightLaw law) {
  switch (law) {
    case WeightLaw::rademacher_shifted: return "rademacher_shifted";
    case WeightLaw::gaussian: return "gaussian";
    case WeightLaw::exponential: return "exponential";
  }
  return "unknown";
}

inline WeightLaw parse_weight_law(std::string_view name) {
  if (name == "rademacher_shifted") return WeightLaw::rademacher_shifted;
  if (name == "gaussian") return WeightLaw::gaussian;
  if (name == "exponential") return WeightLaw::exponential;
  throw std::invalid_argument("unknown weight law '" + std::string(name) +
                              "' (expected rademacher_shifted, gaussian or exponential)");
}

template <class Rng>
void fill_weights(WeightLaw law, Rng& rng, Eigen::VectorXd& out) {
  switch (law) {
    case WeightLaw::rademacher_shifted:
      for (auto& u : out) u = (rng() >> 63) ? 2.0 : 0.0;
      break;
    case WeightLaw::gaussian: {
      std::normal_distribution<double> normal(1.0, 1.0);
      for (auto& u : out) u = normal(rng);
      break;
    }
    case WeightLaw::exponential: {
      std::exponential_distribution<double> expo(1.0);
      for (auto& u : out) u = expo(rng);
      break;
    }
  }
}

inline WeightVector sample_weights(WeightLaw law, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_weights: n must be positive");
  CounterRng rng(seed);
  Eigen::VectorXd u(static_cast<Eigen::Index>(n));
  fill_weights(law, rng, u);
  return WeightVector(std::move(u));
}

// Conditional bootstrap law of sqrt(2 L°(theta°) - 2 L°(theta_tilde)).
struct BootstrapSample {
  std::vector<double> stats;  // ascending
  std::size_t resample_count = 0;
  std::uint64_t seed = 0;
  WeightLaw law = WeightLaw::rademacher_shifted;

  std::size_t size() const noexcept { return stats.size(); }
};

struct BootstrapOptions {
  std::size_t threads = 1;
  // Test hook: every draw uses u = 1.
  bool force_unit_weights = false;
};

// Draw b uses the stream derive_seed(seed, {b}); its k-th replacement after a
// degenerate draw uses derive_seed(seed, {b, k}).
inline BootstrapSample draw_bootstrap_sample(const Model& model, const Theta& theta_hat, WeightLaw law,
                                             std::size_t B, std::uint64_t seed,
                                             const BootstrapOptions& opts = {}) {
  if (B < 1) throw std::invalid_argument("draw_bootstrap_sample: B must be positive");
  const BootstrapLrEvaluator evaluate(model, theta_hat);
  const auto n = static_cast<Eigen::Index>(model.n());

  std::vector<double> stats(B);
  std::vector<std::size_t> retries(B, 0);
  parallel_for(B, opts.threads, [&](std::size_t b) {
    Eigen::VectorXd u(n);
    for (std::size_t k = 0;; ++k) {
      if (k > B) throw PathologicalSample("bootstrap: more degenerate draws than B = " + std::to_string(B));
      if (opts.force_unit_weights) {
        u.setOnes();
      } else {
        CounterRng rng(k == 0 ? derive_seed(seed, {b}) : derive_seed(seed, {b, k}));
        fill_weights(law, rng, u);
      }
      try {
        const double lr = evaluate(WeightVector(u));
        stats[b] = std::sqrt(std::max(0.0, 2.0 * lr));
        retries[b] = k;
        return;
      } catch (const DegenerateDraw&) {
      } catch (const NonConvergence&) {
      }
    }
  });

  BootstrapSample sample;
  sample.seed = seed;
  sample.law = law;
  for (auto r : retries) sample.resample_count += r;
  if (sample.resample_count > B) {
    throw PathologicalSample("bootstrap: " + std::to_string(sample.resample_count) +
                             " degenerate draws exceed B = " + std::to_string(B));
  }
  std::sort(stats.begin(), stats.end());
  sample.stats = std::move(stats);
  return sample;
}

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
}

// Index m = ceil(B (1 - alpha)) in 1..B, robust to rounding of B (1 - alpha).
inline std::size_t upper_order_index(std::size_t B, double alpha) {
  const long double x = static_cast<long double>(B) * (1.0L - static_cast<long double>(alpha));
  auto m = static_cast<std::size_t>(std::ceil(x - 1e-9L * static_cast<long double>(B)));
  return std::clamp<std::size_t>(m, 1, B);
}

}  // namespace detail

// Smallest sample value z with #{s_b > z} / B <= alpha, i.e. the
// ceil(B (1 - alpha))-th order statistic. `sorted` must be ascending.
inline double empirical_upper_quantile(std::span<const double> sorted, double alpha) {
  detail::check_alpha(alpha);
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  return sorted[detail::upper_order_index(sorted.size(), alpha) - 1];
}

inline double bootstrap_quantile(const BootstrapSample& sample, double alpha) {
  return empirical_upper_quantile(sample.stats, alpha);
}

// C^3 step: 0 for t <= 0, 1 for t >= 1, 35t^4 - 84t^5 + 70t^6 - 20t^7 between.
inline double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double t4 = t * t * t * t;
  return t4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)));
}

// g((x^2 - z^2) / (2 delta z)): a smooth surrogate of 1{x > z} that switches
// on between x = z and x = sqrt(z^2 + 2 delta z) < z + delta.
inline double smooth_indicator(double x, double z, double delta) {
  if (!(z > 0.0) || !(delta > 0.0)) throw std::invalid_argument("smooth_indicator: need z > 0 and delta > 0");
  if (x < 0.0) throw std::invalid_argument("smooth_indicator: need x >= 0");
  return smooth_step((x * x - z * z) / (2.0 * delta * z));
}

// (1/B) sum_b g_delta(s_b, z)
inline double mean_smooth_indicator(std::span<const double> stats, double z, double delta) {
  double total = 0.0;
  for (double s : stats) total += smooth_indicator(s, z, delta);
  return total / static_cast<double>(stats.size());
}

// Smallest z >= 0 with mean g_delta(s_b, z) <= alpha, by bisection to 1e-8.
inline double smoothed_quantile(std::span<const double> sorted, double alpha, double delta) {
  detail::check_alpha(alpha);
  if (!(delta > 0.0 && delta <= 0.22)) throw std::invalid_argument("smoothed quantile: delta must lie in (0, 0.22]");
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  double hi = sorted.back();  // mean g vanishes for z >= max s_b
  if (hi <= 0.0) return 0.0;
  double lo = 0.0;
  while (hi - lo > 1e-8) {
    const double mid = 0.5 * (lo + hi);
    if (mean_smooth_indicator(sorted, mid, delta) <= alpha) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

inline double smoothed_bootstrap_quantile(const BootstrapSample& sample, double alpha, double delta) {
  return smoothed_quantile(sample.stats, alpha, delta);
}

}  // namespace mboot
