#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "mboot/bootstrap.hpp"
#include "mboot/diagnostics.hpp"
#include "mboot/error.hpp"
#include "mboot/experiments.hpp"
#include "mboot/format.hpp"
#include "mboot/generators.hpp"

// CSV conventions: '.' decimal separator, '\n' line endings, no quoting,
// shortest round-trip number formatting.
namespace mboot {

using json = nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json to_json(const BiasDiagnostics& d) {
  return json{{"d2", matrix_to_json(d.d2)},
              {"h2", matrix_to_json(d.h2)},
              {"b2", matrix_to_json(d.b2)},
              {"smb", d.smb},
              {"theta_star", vector_to_json(d.theta_star)}};
}

inline void write_bootstrap_csv(std::ostream& out, const BootstrapSample& sample) {
  out << "sqrt_lr\n";
  for (double s : sample.stats) out << format_double(s) << '\n';
}

inline json bootstrap_sidecar(const BootstrapSample& sample) {
  return json{{"seed", sample.seed},
              {"B", sample.stats.size()},
              {"law", std::string(to_string(sample.law))},
              {"resample_count", sample.resample_count}};
}

inline void write_coverage_csv(std::ostream& out, const CoverageReport& report) {
  out << "level,coverage,mc_se\n";
  for (const auto& row : report.rows) {
    out << format_double(row.level) << ',' << format_double(row.coverage) << ',' << format_double(row.mc_se)
        << '\n';
  }
}

inline json coverage_summary(const CoverageReport& report) {
  return json{{"reps_used", report.reps_used},
              {"failed_reps", report.failed_reps},
              {"resample_total", report.resample_total},
              {"wall_seconds", report.wall_seconds}};
}

inline void write_ecdf_csv(std::ostream& out, const std::vector<EcdfRecord>& records) {
  out << "curve_id,value,ecdf\n";
  for (const auto& r : records) out << r.curve_id << ',' << format_double(r.value) << ',' << format_double(r.ecdf) << '\n';
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "beta,level,gap\n";
  for (const auto& r : rows) out << format_double(r.beta) << ',' << format_double(r.level) << ',' << format_double(r.gap) << '\n';
}

inline json sweep_summary(const std::vector<SweepRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back(json{{"beta", r.beta},
                       {"level", r.level},
                       {"gap", r.gap},
                       {"mc_se", r.mc_se},
                       {"mean_boot_quantile", r.mean_boot_quantile},
                       {"y_quantile", r.y_quantile}});
  }
  return out;
}

// ---- configuration objects -------------------------------------------------

namespace detail {

inline void require_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

template <class T>
T get_required(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline json to_json(const TrueModelSpec& spec) {
  json out{{"kind", std::string(to_string(spec.generator()))}, {"n", spec.n()}};
  switch (spec.generator()) {
    case Generator::polynomial_gaussian:
    case Generator::polynomial_laplace_hetero: out["p"] = spec.p(); break;
    case Generator::sin_bias_laplace: out["beta"] = spec.beta(); break;
    case Generator::logistic_bias:
      out["beta"] = spec.beta();
      out["p"] = spec.p();
      break;
  }
  return out;
}

inline TrueModelSpec spec_from_json(const json& j, std::optional<FitFamily> fit = std::nullopt) {
  detail::require_keys(j, {"kind", "n", "p", "beta"}, "generator");
  try {
    const Generator kind = parse_generator(detail::get_required<std::string>(j, "kind", "generator"));
    const auto n = detail::get_required<std::size_t>(j, "n", "generator");
    const auto p = detail::get_or<std::size_t>(j, "p", 1);
    const double beta = detail::get_or<double>(j, "beta", 0.0);
    if (kind == Generator::sin_bias_laplace && j.contains("p") && p != 1) {
      throw ConfigError("generator: sin_bias_laplace has p = 1");
    }
    TrueModelSpec spec = [&] {
      switch (kind) {
        case Generator::polynomial_gaussian: return TrueModelSpec::polynomial_gaussian(n, p);
        case Generator::polynomial_laplace_hetero: return TrueModelSpec::polynomial_laplace_hetero(n, p);
        case Generator::sin_bias_laplace: return TrueModelSpec::sin_bias_laplace(n, beta);
        case Generator::logistic_bias: return TrueModelSpec::logistic_bias(n, beta, p);
      }
      throw ConfigError("generator: unknown kind");
    }();
    if (fit && *fit != spec.fit_family()) spec = spec.with_fit_family(*fit);
    return spec;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("generator: ") + e.what());
  }
}

inline const std::set<std::string>& experiment_keys() {
  static const std::set<std::string> keys{"generator", "fit_family", "law",  "levels",
                                          "outer_reps", "inner_B",   "seed", "smoothing"};
  return keys;
}

// Reads the experiment fields of a config object; other keys are left to the
// caller's own unknown-key check.
inline ExperimentConfig experiment_from_json(const json& j, std::uint64_t default_seed = 1) {
  std::optional<FitFamily> fit;
  try {
    if (j.contains("fit_family")) fit = parse_fit_family(detail::get_required<std::string>(j, "fit_family", "config"));
    ExperimentConfig config{spec_from_json(detail::get_required<json>(j, "generator", "config"), fit)};
    config.law = parse_weight_law(detail::get_or<std::string>(j, "law", "gaussian"));
    config.levels = detail::get_or<std::vector<double>>(j, "levels", default_levels());
    config.outer_reps = detail::get_or<std::size_t>(j, "outer_reps", 2000);
    config.inner_B = detail::get_or<std::size_t>(j, "inner_B", 2000);
    config.seed = detail::get_or<std::uint64_t>(j, "seed", default_seed);
    if (j.contains("smoothing") && !j.at("smoothing").is_null()) config.smoothing = j.at("smoothing").get<double>();
    config.validate();
    return config;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
}

inline json to_json(const ExperimentConfig& c) {
  json out{{"generator", to_json(c.spec)},
           {"fit_family", std::string(to_string(c.spec.fit_family()))},
           {"law", std::string(to_string(c.law))},
           {"levels", c.levels},
           {"outer_reps", c.outer_reps},
           {"inner_B", c.inner_B},
           {"seed", c.seed}};
  out["smoothing"] = c.smoothing ? json(*c.smoothing) : json(nullptr);
  return out;
}

}  // namespace mboot
