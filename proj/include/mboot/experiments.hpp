#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mboot/bootstrap.hpp"
#include "mboot/error.hpp"
#include "mboot/generators.hpp"
#include "mboot/optimizer.hpp"
#include "mboot/parallel.hpp"
#include "mboot/rng.hpp"

namespace mboot {

inline std::vector<double> default_levels() { return {0.99, 0.95, 0.90, 0.85, 0.80, 0.75}; }

struct ExperimentConfig {
  TrueModelSpec spec;
  WeightLaw law = WeightLaw::gaussian;
  std::vector<double> levels = default_levels();
  std::size_t outer_reps = 2000;
  std::size_t inner_B = 2000;
  std::uint64_t seed = 1;
  // Use the smoothed quantile with this delta instead of the order statistic.
  std::optional<double> smoothing = std::nullopt;
  // Worker threads (0 = all cores); results do not depend on it.
  std::size_t threads = 0;

  void validate() const {
    if (levels.empty()) throw std::invalid_argument("experiment: no confidence levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (!(levels[i] > 0.0 && levels[i] < 1.0)) throw std::invalid_argument("experiment: levels must lie in (0,1)");
      if (i > 0 && !(levels[i] < levels[i - 1])) {
        throw std::invalid_argument("experiment: levels must be strictly decreasing");
      }
    }
    if (outer_reps < 1 || inner_B < 1) throw std::invalid_argument("experiment: outer_reps and inner_B must be >= 1");
    if (smoothing && !(*smoothing > 0.0 && *smoothing <= 0.22)) {
      throw std::invalid_argument("experiment: smoothing delta must lie in (0, 0.22]");
    }
  }
};

struct LevelCoverage {
  double level = 0.0;
  double coverage = 0.0;
  double mc_se = 0.0;
  std::size_t hits = 0;
};

struct CoverageReport {
  std::vector<LevelCoverage> rows;
  std::size_t reps_used = 0;
  std::size_t failed_reps = 0;
  std::size_t resample_total = 0;
  double wall_seconds = 0.0;
};

// Outcome of one outer replication: a simulated dataset, its MLE, and
// optionally the conditional bootstrap sample.
struct Replication {
  bool ok = false;
  double lr = 0.0;  // L(theta_tilde) - L(theta*)
  std::vector<double> quantiles;  // bootstrap quantile per level
  std::size_t resamples = 0;
  std::vector<double> boot_stats;  // kept only on request
};

inline std::uint64_t data_seed(std::uint64_t seed, std::size_t rep) { return derive_seed(seed, {rep, 0}); }
inline std::uint64_t boot_seed(std::uint64_t seed, std::size_t rep) { return derive_seed(seed, {rep, 1}); }

inline Replication run_replication(const ExperimentConfig& config, std::size_t rep, bool with_bootstrap,
                                   bool keep_stats = false) {
  Replication out;
  try {
    const Model model = config.spec.fit_model(config.spec.simulate(data_seed(config.seed, rep)));
    const FitResult fit = fit_mle(model);
    out.lr = lr_statistic(model, fit, config.spec.theta_star());
    if (with_bootstrap) {
      const BootstrapSample sample =
          draw_bootstrap_sample(model, fit.theta_hat, config.law, config.inner_B, boot_seed(config.seed, rep));
      out.resamples = sample.resample_count;
      out.quantiles.reserve(config.levels.size());
      for (double level : config.levels) {
        const double alpha = 1.0 - level;
        out.quantiles.push_back(config.smoothing ? smoothed_bootstrap_quantile(sample, alpha, *config.smoothing)
                                                 : bootstrap_quantile(sample, alpha));
      }
      if (keep_stats) out.boot_stats = sample.stats;
    }
    out.ok = true;
  } catch (const NonConvergence&) {
  } catch (const PathologicalSample&) {
  } catch (const DegenerateDraw&) {
  }
  return out;
}

namespace detail {

inline std::vector<Replication> run_replications(const ExperimentConfig& config, bool with_bootstrap,
                                                 std::size_t keep_first = 0) {
  config.validate();
  std::vector<Replication> reps(config.outer_reps);
  parallel_for(config.outer_reps, config.threads, [&](std::size_t r) {
    const bool wanted = with_bootstrap || r < keep_first;
    reps[r] = run_replication(config, r, wanted, r < keep_first);
  });
  std::size_t failed = 0;
  for (const auto& r : reps) failed += r.ok ? 0 : 1;
  // abort when more than 1% of replications fail
  if (100 * failed > config.outer_reps) {
    throw PathologicalSample("experiment: " + std::to_string(failed) + " of " +
                             std::to_string(config.outer_reps) + " replications failed");
  }
  return reps;
}

}  // namespace detail

// Fraction of replications with L(theta_tilde) - L(theta*) <= z°^2 / 2.
inline CoverageReport run_coverage(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const auto reps = detail::run_replications(config, true);
  CoverageReport report;
  report.rows.resize(config.levels.size());
  for (std::size_t k = 0; k < config.levels.size(); ++k) report.rows[k].level = config.levels[k];
  for (const auto& r : reps) {
    if (!r.ok) {
      ++report.failed_reps;
      continue;
    }
    ++report.reps_used;
    report.resample_total += r.resamples;
    for (std::size_t k = 0; k < config.levels.size(); ++k) {
      const double z = r.quantiles[k];
      if (r.lr <= 0.5 * z * z) ++report.rows[k].hits;
    }
  }
  const double used = static_cast<double>(report.reps_used);
  for (auto& row : report.rows) {
    row.coverage = used > 0 ? static_cast<double>(row.hits) / used : 0.0;
    row.mc_se = used > 0 ? std::sqrt(row.coverage * (1.0 - row.coverage) / used) : 0.0;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

struct EcdfRecord {
  std::string curve_id;
  double value = 0.0;
  double ecdf = 0.0;
};

// Right-continuous ECDF of `values` at each distinct value.
inline std::vector<std::pair<double, double>> ecdf_points(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.emplace_back(values[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

// #{v <= x} / size for ascending `sorted`.
inline double ecdf_at(const std::vector<double>& sorted, double x) {
  if (sorted.empty()) return 0.0;
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
  return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

// Curve "data": ECDF of L(theta_tilde) - L(theta*) over the outer
// replications. Curves "boot_1".."boot_k": conditional ECDFs of
// L°(theta°) - L°(theta_tilde) for the datasets of the first k replications.
inline std::vector<EcdfRecord> run_ecdf_pair(const ExperimentConfig& config, std::size_t n_boot_curves) {
  if (n_boot_curves > config.outer_reps) {
    throw std::invalid_argument("ecdf: more bootstrap curves than outer replications");
  }
  const auto reps = detail::run_replications(config, false, n_boot_curves);
  std::vector<EcdfRecord> records;
  std::vector<double> data;
  for (const auto& r : reps) {
    if (r.ok) data.push_back(r.lr);
  }
  for (const auto& [v, f] : ecdf_points(data)) records.push_back({"data", v, f});
  std::size_t curve = 0;
  for (std::size_t r = 0; r < n_boot_curves; ++r) {
    if (!reps[r].ok) continue;
    ++curve;
    std::vector<double> lr;
    lr.reserve(reps[r].boot_stats.size());
    for (double s : reps[r].boot_stats) lr.push_back(0.5 * s * s);
    const std::string id = "boot_" + std::to_string(curve);
    for (const auto& [v, f] : ecdf_points(std::move(lr))) records.push_back({id, v, f});
  }
  return records;
}

struct SweepRow {
  double beta = 0.0;
  double level = 0.0;
  double gap = 0.0;  // mean bootstrap quantile - Y-quantile
  double mc_se = 0.0;
  double mean_boot_quantile = 0.0;
  double y_quantile = 0.0;
};

// Monte Carlo quantile of sqrt(2 (L(theta_tilde) - L(theta*))) against the
// average bootstrap quantile, for each beta and level. Every beta reuses the
// base seed, so the noise is shared across the sweep.
inline std::vector<SweepRow> run_bias_sweep(const ExperimentConfig& base, const std::vector<double>& betas) {
  const Generator g = base.spec.generator();
  if (g != Generator::sin_bias_laplace && g != Generator::logistic_bias) {
    throw std::invalid_argument("bias sweep: generator must be sin_bias_laplace or logistic_bias");
  }
  std::vector<SweepRow> rows;
  for (double beta : betas) {
    ExperimentConfig config = base;
    config.spec = base.spec.with_beta(beta);
    const auto reps = detail::run_replications(config, true);
    std::vector<double> roots;
    for (const auto& r : reps) {
      if (r.ok) roots.push_back(std::sqrt(std::max(0.0, 2.0 * r.lr)));
    }
    std::sort(roots.begin(), roots.end());
    const double used = static_cast<double>(roots.size());
    for (std::size_t k = 0; k < config.levels.size(); ++k) {
      const double alpha = 1.0 - config.levels[k];
      double sum = 0.0, sum_sq = 0.0;
      for (const auto& r : reps) {
        if (!r.ok) continue;
        sum += r.quantiles[k];
        sum_sq += r.quantiles[k] * r.quantiles[k];
      }
      SweepRow row;
      row.beta = beta;
      row.level = config.levels[k];
      row.mean_boot_quantile = sum / used;
      row.y_quantile = empirical_upper_quantile(roots, alpha);
      row.gap = row.mean_boot_quantile - row.y_quantile;

      // order-statistic 95% band for the Y-quantile, plain SE for the mean
      const double var_mean = std::max(0.0, sum_sq / used - row.mean_boot_quantile * row.mean_boot_quantile) / used;
      const std::size_t m = detail::upper_order_index(roots.size(), alpha);
      const auto half = static_cast<std::size_t>(std::ceil(1.96 * std::sqrt(used * alpha * (1.0 - alpha))));
      const std::size_t lo = m > half ? m - half : 1;
      const std::size_t hi = std::min(roots.size(), m + half);
      const double se_q = (roots[hi - 1] - roots[lo - 1]) / (2.0 * 1.96);
      row.mc_se = std::sqrt(var_mean + se_q * se_q);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace mboot
