#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mboot/bootstrap.hpp"
#include "mboot/dataset.hpp"
#include "mboot/diagnostics.hpp"
#include "mboot/error.hpp"
#include "mboot/experiments.hpp"
#include "mboot/io.hpp"
#include "mboot/model.hpp"
#include "mboot/optimizer.hpp"

namespace mboot::cli {

enum ExitCode : int { ok = 0, bad_config = 2, numerical_failure = 3, pathological = 4 };

struct Flags {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::optional<std::size_t> reps;
  std::optional<std::size_t> boot;
  bool unit_weights = false;
};

namespace detail {

inline json load_config(const std::string& path, const std::string& subcommand) {
  if (path.empty()) throw ConfigError("--config is required");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("schema") || !j.at("schema").is_number_integer() || j.at("schema").get<int>() != 1) {
    throw ConfigError("config: 'schema' must be 1");
  }
  if (j.contains("subcommand") && j.at("subcommand") != subcommand) {
    throw ConfigError("config is for subcommand '" + j.at("subcommand").get<std::string>() + "', not '" +
                      subcommand + "'");
  }
  return j;
}

inline std::uint64_t resolve_seed(const Flags& flags, const json& j) {
  if (flags.seed) return *flags.seed;
  if (j.contains("seed")) {
    try {
      return j.at("seed").get<std::uint64_t>();
    } catch (const json::exception&) {
      throw ConfigError("config: 'seed' must be an unsigned integer");
    }
  }
  if (const char* env = std::getenv("MBOOT_SEED")) {
    try {
      std::size_t used = 0;
      const auto value = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return value;
    } catch (const std::exception&) {
      throw ConfigError(std::string("MBOOT_SEED is not an unsigned integer: ") + env);
    }
  }
  return 1;
}

inline std::set<std::string> with_common(std::set<std::string> keys) {
  keys.insert("schema");
  keys.insert("subcommand");
  return keys;
}

inline Family family_from_json(const json& j) {
  mboot::detail::require_keys(j, {"kind", "link", "tau"}, "family");
  const auto kind = mboot::detail::get_required<std::string>(j, "kind", "family");
  if (kind == "gaussian_linear") return GaussianLinear{};
  if (kind == "bernoulli_glm") return BernoulliGlm{};
  if (kind == "glm") {
    const auto link = mboot::detail::get_required<std::string>(j, "link", "family");
    if (link == "normal") return GlmCanonical{GlmLink::normal()};
    if (link == "exponential") return GlmCanonical{GlmLink::exponential()};
    if (link == "poisson") return GlmCanonical{GlmLink::poisson()};
    if (link == "binomial") return GlmCanonical{GlmLink::binomial()};
    throw ConfigError("family: unknown glm link '" + link + "'");
  }
  if (kind == "quantile") return QuantileRegression{mboot::detail::get_required<double>(j, "tau", "family")};
  throw ConfigError("family: unknown kind '" + kind + "'");
}

inline Model load_model(const json& j) {
  const auto path = mboot::detail::get_required<std::string>(j, "dataset", "config");
  const json family = mboot::detail::get_required<json>(j, "family", "config");
  try {
    return Model(family_from_json(family), read_dataset_csv(path));
  } catch (const InvalidModel& e) {
    throw ConfigError(e.what());
  }
}

class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  void add_json(const std::string& name, const json& j) { add(name, j.dump(2) + "\n"); }

  void flush() const {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir_ + ": " + ec.message());
    for (const auto& [name, content] : files_) {
      const auto path = std::filesystem::path(dir_) / name;
      std::ofstream out(path, std::ios::binary);
      if (!out) throw ConfigError("cannot write " + path.string());
      out << content;
    }
  }

 private:
  std::string dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

inline ExperimentConfig resolved_experiment(const json& j, const Flags& flags) {
  ExperimentConfig config = experiment_from_json(j, resolve_seed(flags, j));
  if (flags.seed) config.seed = *flags.seed;
  if (flags.reps) config.outer_reps = *flags.reps;
  if (flags.boot) config.inner_B = *flags.boot;
  config.threads = flags.threads;
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config;
}

inline json experiment_sidecar(const ExperimentConfig& config, const std::string& subcommand) {
  json out = to_json(config);
  out["schema"] = 1;
  out["subcommand"] = subcommand;
  return out;
}

inline void cmd_fit(const Flags& flags, std::ostream& out) {
  const json j = load_config(flags.config_path, "fit");
  mboot::detail::require_keys(j, with_common({"dataset", "family", "theta0"}), "fit config");
  const Model model = load_model(j);
  const FitResult fit = fit_mle(model);
  json result{{"family", model.family_name()},
              {"theta_hat", vector_to_json(fit.theta_hat)},
              {"loglik_at_max", fit.loglik_at_max},
              {"iterations", fit.iterations},
              {"grad_norm", fit.grad_norm},
              {"converged", fit.converged}};
  if (j.contains("theta0")) {
    const auto t0 = mboot::detail::get_required<std::vector<double>>(j, "theta0", "fit config");
    const Theta theta0 = Eigen::Map<const Eigen::VectorXd>(t0.data(), static_cast<Eigen::Index>(t0.size()));
    if (static_cast<std::size_t>(theta0.size()) != model.p()) throw ConfigError("theta0 has the wrong dimension");
    result["lr_statistic"] = lr_statistic(model, fit, theta0);
  }
  Outputs files(flags.out_dir);
  files.add_json("fit.json", result);
  files.flush();
  out << result.dump() << '\n';
}

inline void cmd_bootstrap(const Flags& flags, std::ostream& out) {
  const json j = load_config(flags.config_path, "bootstrap");
  mboot::detail::require_keys(j, with_common({"dataset", "family", "law", "B", "seed", "force_unit_weights", "alpha"}),
                              "bootstrap config");
  const Model model = load_model(j);
  WeightLaw law;
  try {
    law = parse_weight_law(mboot::detail::get_or<std::string>(j, "law", "gaussian"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::size_t B = flags.boot ? *flags.boot : mboot::detail::get_or<std::size_t>(j, "B", 10000);
  if (B < 1) throw ConfigError("B must be >= 1");
  const std::uint64_t seed = resolve_seed(flags, j);
  const bool unit = flags.unit_weights || mboot::detail::get_or<bool>(j, "force_unit_weights", false);
  const auto alphas = mboot::detail::get_or<std::vector<double>>(j, "alpha", {});
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha values must lie in (0,1)");
  }

  const FitResult fit = fit_mle(model);
  BootstrapOptions opts;
  opts.threads = flags.threads;
  opts.force_unit_weights = unit;
  const BootstrapSample sample = draw_bootstrap_sample(model, fit.theta_hat, law, B, seed, opts);

  std::ostringstream csv;
  write_bootstrap_csv(csv, sample);
  json config = j;
  config["schema"] = 1;
  config["subcommand"] = "bootstrap";
  config["law"] = std::string(to_string(law));
  config["B"] = B;
  config["seed"] = seed;
  config["force_unit_weights"] = unit;

  Outputs files(flags.out_dir);
  files.add("bootstrap.csv", csv.str());
  files.add_json("bootstrap.json", bootstrap_sidecar(sample));
  files.add_json("bootstrap_config.json", config);
  files.flush();
  for (double a : alphas) {
    out << "alpha " << format_double(a) << " quantile " << format_double(bootstrap_quantile(sample, a)) << '\n';
  }
}

inline void cmd_coverage(const Flags& flags, std::ostream& out) {
  const json j = load_config(flags.config_path, "coverage");
  mboot::detail::require_keys(j, with_common(experiment_keys()), "coverage config");
  const ExperimentConfig config = resolved_experiment(j, flags);
  const CoverageReport report = run_coverage(config);
  std::ostringstream csv;
  write_coverage_csv(csv, report);
  Outputs files(flags.out_dir);
  files.add("coverage.csv", csv.str());
  files.add_json("coverage_config.json", experiment_sidecar(config, "coverage"));
  files.add_json("coverage_summary.json", coverage_summary(report));
  files.flush();
  out << csv.str();
}

inline void cmd_ecdf(const Flags& flags, std::ostream& out) {
  const json j = load_config(flags.config_path, "ecdf");
  auto keys = experiment_keys();
  keys.insert("boot_curves");
  mboot::detail::require_keys(j, with_common(keys), "ecdf config");
  const ExperimentConfig config = resolved_experiment(j, flags);
  const auto curves = mboot::detail::get_or<std::size_t>(j, "boot_curves", 50);
  std::vector<EcdfRecord> records;
  try {
    records = run_ecdf_pair(config, curves);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::ostringstream csv;
  write_ecdf_csv(csv, records);
  json sidecar = experiment_sidecar(config, "ecdf");
  sidecar["boot_curves"] = curves;
  Outputs files(flags.out_dir);
  files.add("ecdf.csv", csv.str());
  files.add_json("ecdf_config.json", sidecar);
  files.flush();
  out << "ecdf records " << records.size() << '\n';
}

inline void cmd_sweep(const Flags& flags, std::ostream& out) {
  const json j = load_config(flags.config_path, "sweep");
  auto keys = experiment_keys();
  keys.insert("betas");
  mboot::detail::require_keys(j, with_common(keys), "sweep config");
  const ExperimentConfig config = resolved_experiment(j, flags);
  const auto betas =
      mboot::detail::get_or<std::vector<double>>(j, "betas", {0.0, 0.25, 0.5, 0.75, 1.0, 1.25});
  std::vector<SweepRow> rows;
  try {
    rows = run_bias_sweep(config, betas);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  json sidecar = experiment_sidecar(config, "sweep");
  sidecar["betas"] = betas;
  Outputs files(flags.out_dir);
  files.add("sweep.csv", csv.str());
  files.add_json("sweep_config.json", sidecar);
  files.add_json("sweep_summary.json", sweep_summary(rows));
  files.flush();
  out << csv.str();
}

inline void cmd_smb(const Flags& flags, std::ostream& out) {
  const json j = load_config(flags.config_path, "smb");
  mboot::detail::require_keys(j, with_common({"generator", "fit_family"}), "smb config");
  std::optional<FitFamily> fit;
  try {
    if (j.contains("fit_family")) fit = parse_fit_family(j.at("fit_family").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const TrueModelSpec spec = spec_from_json(mboot::detail::get_required<json>(j, "generator", "smb config"), fit);
  const BiasDiagnostics diag = population_matrices(spec);
  json result = to_json(diag);
  result["n"] = spec.n();
  result["within_root_n"] = smb_within_root_n(diag.smb, spec.n());
  const bool natural = spec.fit_family() == TrueModelSpec::natural_family(spec.generator());
  if (natural && spec.generator() == Generator::sin_bias_laplace) {
    result["closed_form"] = smb_sin_bias_closed_form(spec.beta(), spec.n());
  } else if (natural && spec.generator() == Generator::logistic_bias && spec.p() == 1) {
    result["closed_form"] = smb_logistic_bias_closed_form(spec.beta(), spec.n());
  }
  Outputs files(flags.out_dir);
  files.add_json("diagnostics.json", result);
  files.flush();
  out << "smb " << format_double(diag.smb) << '\n';
}

inline void error_line(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace detail

// Entry point shared by the mboot executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multiplier-bootstrap likelihood-ratio confidence sets"};
  app.require_subcommand(1);
  Flags flags;

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const Flags&, std::ostream&);
  };
  const Command commands[] = {
      {"fit", "Fit the quasi-MLE of a dataset", detail::cmd_fit},
      {"bootstrap", "Draw the conditional bootstrap sample of sqrt(2 LR)", detail::cmd_bootstrap},
      {"coverage", "Monte Carlo coverage of bootstrap confidence sets", detail::cmd_coverage},
      {"ecdf", "ECDFs of the real and bootstrap likelihood ratios", detail::cmd_ecdf},
      {"sweep", "Bootstrap-minus-real quantile gap across modelling bias", detail::cmd_sweep},
      {"smb", "Modelling-bias matrices and the (SmB) scalar for a generator", detail::cmd_smb},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", flags.config_path, "JSON config (schema 1)");
    sub->add_option("--out", flags.out_dir, "Output directory");
    sub->add_option("--seed", flags.seed, "Root seed (falls back to config, then MBOOT_SEED)");
    sub->add_option("--threads", flags.threads, "Worker threads, 0 = all cores");
    sub->add_option("--reps", flags.reps, "Outer Monte Carlo replications");
    sub->add_option("--boot", flags.boot, "Bootstrap draws per dataset");
    sub->add_flag("--unit-weights", flags.unit_weights, "Force u = 1 in every bootstrap draw (testing)");
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    detail::error_line(err, "config", e.what());
    return bad_config;
  }

  try {
    for (const auto& [sub, cmd] : subs) {
      if (sub->parsed()) cmd->run(flags, out);
    }
    return ok;
  } catch (const ConfigError& e) {
    detail::error_line(err, "config", e.what());
    return bad_config;
  } catch (const std::invalid_argument& e) {
    detail::error_line(err, "config", e.what());
    return bad_config;
  } catch (const PathologicalSample& e) {
    detail::error_line(err, "pathological_sample", e.what());
    return pathological;
  } catch (const std::exception& e) {
    detail::error_line(err, "numerical", e.what());
    return numerical_failure;
  }
}

}  // namespace mboot::cli
