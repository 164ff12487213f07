#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "json.hpp"
#include "mboot/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mboot");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = mboot::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mboot_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ::unsetenv("MBOOT_SEED");
  }
  void TearDown() override {
    fs::remove_all(dir_);
    ::unsetenv("MBOOT_SEED");
  }

  std::string write_json(const std::string& name, const json& j) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
  }

  std::string write_text(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

  fs::path dir_;
};

const json coverage_config{{"schema", 1},
                           {"generator", {{"kind", "polynomial_gaussian"}, {"n", 50}, {"p", 1}}},
                           {"law", "rademacher_shifted"},
                           {"outer_reps", 40},
                           {"inner_B", 60},
                           {"seed", 3}};

}  // namespace

TEST_F(CliTest, HelpExitsZeroForEverySubcommand) {
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  for (const char* sub : {"fit", "bootstrap", "coverage", "ecdf", "sweep", "smb"}) {
    const Result r = run_cli({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--config"), std::string::npos) << sub;
  }
}

TEST_F(CliTest, CoverageWritesSixLevelRows) {
  const Result r = run_cli({"coverage", "--config", write_json("c.json", coverage_config), "--out", out("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir_ / "o" / "coverage.csv");
  EXPECT_EQ(csv, r.out);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("level,", 0), 0u);
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  EXPECT_EQ(csv.find('"'), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "o" / "coverage_summary.json"));
}

TEST_F(CliTest, SmbUnbiasedPrintsZero) {
  const json cfg{{"schema", 1}, {"generator", {{"kind", "sin_bias_laplace"}, {"n", 50}, {"beta", 0.0}}}};
  const Result r = run_cli({"smb", "--config", write_json("s.json", cfg), "--out", out("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "smb 0.0\n");
  const json diag = json::parse(slurp(dir_ / "o" / "diagnostics.json"));
  EXPECT_EQ(diag.at("smb").get<double>(), 0.0);
  EXPECT_TRUE(diag.at("within_root_n").get<bool>());
}

TEST_F(CliTest, SmbMatchesClosedForm) {
  const json cfg{{"schema", 1}, {"generator", {{"kind", "logistic_bias"}, {"n", 50}, {"beta", 0.5}}}};
  const Result r = run_cli({"smb", "--config", write_json("s.json", cfg), "--out", out("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json diag = json::parse(slurp(dir_ / "o" / "diagnostics.json"));
  EXPECT_NEAR(diag.at("smb").get<double>(), 51.0 / 147.0, 1e-12);
  EXPECT_NEAR(diag.at("closed_form").get<double>(), 51.0 / 147.0, 1e-15);
}

TEST_F(CliTest, BootstrapWithUnitWeightsGivesSingleZero) {
  const std::string data = write_text("d.csv", "y,psi_0,psi_1\n1.0,1.0,0.0\n2.5,1.0,0.5\n-0.5,1.0,1.0\n");
  const json cfg{{"schema", 1},
                 {"dataset", data},
                 {"family", {{"kind", "gaussian_linear"}}},
                 {"law", "rademacher_shifted"},
                 {"B", 1}};
  const Result r = run_cli({"bootstrap", "--config", write_json("b.json", cfg), "--out", out("o"), "--unit-weights"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(slurp(dir_ / "o" / "bootstrap.csv"));
  std::string header, value, extra;
  std::getline(csv, header);
  std::getline(csv, value);
  EXPECT_EQ(std::stod(value), 0.0);
  EXPECT_FALSE(std::getline(csv, extra));
}

TEST_F(CliTest, FitReportsEstimate) {
  const std::string data = write_text("d.csv", "y,psi_0\n1.0,1.0\n2.0,1.0\n6.0,1.0\n");
  const json cfg{{"schema", 1}, {"dataset", data}, {"family", {{"kind", "gaussian_linear"}}}, {"theta0", {2.0}}};
  const Result r = run_cli({"fit", "--config", write_json("f.json", cfg), "--out", out("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_NEAR(j.at("theta_hat")[0].get<double>(), 3.0, 1e-12);
  EXPECT_NEAR(j.at("lr_statistic").get<double>(), 1.5, 1e-12);
  EXPECT_TRUE(j.at("converged").get<bool>());
}

TEST_F(CliTest, MalformedConfigExitsTwo) {
  auto expect_config_error = [&](const std::vector<std::string>& args) {
    const Result r = run_cli(args);
    EXPECT_EQ(r.code, 2);
    const json e = json::parse(r.err);
    EXPECT_EQ(e.at("error"), "config");
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  };
  json unknown = coverage_config;
  unknown["colour"] = "red";
  expect_config_error({"coverage", "--config", write_json("u.json", unknown), "--out", out("o")});
  json no_schema = coverage_config;
  no_schema.erase("schema");
  expect_config_error({"coverage", "--config", write_json("n.json", no_schema), "--out", out("o")});
  json schema2 = coverage_config;
  schema2["schema"] = 2;
  expect_config_error({"coverage", "--config", write_json("s.json", schema2), "--out", out("o")});
  json wrong_sub = coverage_config;
  wrong_sub["subcommand"] = "sweep";
  expect_config_error({"coverage", "--config", write_json("w.json", wrong_sub), "--out", out("o")});
  expect_config_error({"coverage", "--config", write_text("bad.json", "{not json"), "--out", out("o")});
  expect_config_error({"coverage", "--config", (dir_ / "missing.json").string()});
  expect_config_error({"coverage"});
  expect_config_error({"coverage", "--config", write_json("c.json", coverage_config), "--threads", "x"});
  expect_config_error({"frobnicate"});
  expect_config_error({"sweep", "--config", write_json("c.json", coverage_config), "--out", out("o")});
  EXPECT_FALSE(fs::exists(dir_ / "o"));
}

TEST_F(CliTest, NumericalFailureExitsThree) {
  const std::string data = write_text("d.csv", "y,psi_0\n0,-1.0\n0,-0.5\n1,0.5\n1,1.0\n");
  const json cfg{{"schema", 1}, {"dataset", data}, {"family", {{"kind", "bernoulli_glm"}}}};
  const Result r = run_cli({"fit", "--config", write_json("f.json", cfg), "--out", out("o")});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(json::parse(r.err).at("error"), "numerical");
}

TEST_F(CliTest, PathologicalAbortExitsFour) {
  const json cfg{{"schema", 1},
                 {"generator", {{"kind", "logistic_bias"}, {"n", 3}, {"beta", 0.2}}},
                 {"law", "rademacher_shifted"},
                 {"outer_reps", 50},
                 {"inner_B", 20}};
  const Result r = run_cli({"coverage", "--config", write_json("c.json", cfg), "--out", out("o")});
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(json::parse(r.err).at("error"), "pathological_sample");
}

TEST_F(CliTest, SidecarReproducesCoverageCsv) {
  ASSERT_EQ(run_cli({"coverage", "--config", write_json("c.json", coverage_config), "--out", out("a"), "--reps",
                     "30", "--seed", "9"})
                .code,
            0);
  const Result again =
      run_cli({"coverage", "--config", (dir_ / "a" / "coverage_config.json").string(), "--out", out("b")});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(dir_ / "a" / "coverage.csv"), slurp(dir_ / "b" / "coverage.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "coverage_config.json"), slurp(dir_ / "b" / "coverage_config.json"));
}

TEST_F(CliTest, SidecarReproducesSweepAndEcdfCsv) {
  json sweep = coverage_config;
  sweep["generator"] = {{"kind", "sin_bias_laplace"}, {"n", 30}, {"beta", 0.0}};
  sweep["betas"] = {0.0, 1.0};
  ASSERT_EQ(run_cli({"sweep", "--config", write_json("s.json", sweep), "--out", out("a")}).code, 0);
  ASSERT_EQ(run_cli({"sweep", "--config", (dir_ / "a" / "sweep_config.json").string(), "--out", out("b")}).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "sweep.csv"), slurp(dir_ / "b" / "sweep.csv"));

  json ecdf = sweep;
  ecdf.erase("betas");
  ecdf["boot_curves"] = 3;
  ASSERT_EQ(run_cli({"ecdf", "--config", write_json("e.json", ecdf), "--out", out("a")}).code, 0);
  ASSERT_EQ(run_cli({"ecdf", "--config", (dir_ / "a" / "ecdf_config.json").string(), "--out", out("b")}).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "ecdf.csv"), slurp(dir_ / "b" / "ecdf.csv"));
}

TEST_F(CliTest, SidecarReproducesBootstrapCsv) {
  const std::string data = write_text("d.csv", "y,psi_0\n0,1.0\n1,1.0\n1,1.0\n0,1.0\n1,1.0\n");
  const json cfg{{"schema", 1}, {"dataset", data}, {"family", {{"kind", "bernoulli_glm"}}}, {"B", 50}};
  ASSERT_EQ(run_cli({"bootstrap", "--config", write_json("b.json", cfg), "--out", out("a")}).code, 0);
  ASSERT_EQ(run_cli({"bootstrap", "--config", (dir_ / "a" / "bootstrap_config.json").string(), "--out", out("b")})
                .code,
            0);
  EXPECT_EQ(slurp(dir_ / "a" / "bootstrap.csv"), slurp(dir_ / "b" / "bootstrap.csv"));
}

TEST_F(CliTest, SeedPrecedence) {
  json cfg = coverage_config;
  cfg.erase("seed");
  const std::string path = write_json("c.json", cfg);
  auto seed_of = [&](const std::vector<std::string>& extra) {
    std::vector<std::string> args{"coverage", "--config", path, "--out", out("o"), "--reps", "2", "--boot", "5"};
    args.insert(args.end(), extra.begin(), extra.end());
    EXPECT_EQ(run_cli(args).code, 0);
    return json::parse(slurp(dir_ / "o" / "coverage_config.json")).at("seed").get<std::uint64_t>();
  };
  EXPECT_EQ(seed_of({}), 1u);
  ::setenv("MBOOT_SEED", "4242", 1);
  EXPECT_EQ(seed_of({}), 4242u);
  EXPECT_EQ(seed_of({"--seed", "7"}), 7u);
  cfg["seed"] = 99;
  write_json("c.json", cfg);
  EXPECT_EQ(seed_of({}), 99u);
  ::setenv("MBOOT_SEED", "12abc", 1);
  cfg.erase("seed");
  write_json("c.json", cfg);
  EXPECT_EQ(run_cli({"coverage", "--config", path, "--out", out("o")}).code, 2);
}

TEST_F(CliTest, ThreadCountDoesNotChangeOutput) {
  const std::string path = write_json("c.json", coverage_config);
  ASSERT_EQ(run_cli({"coverage", "--config", path, "--out", out("a"), "--threads", "1"}).code, 0);
  ASSERT_EQ(run_cli({"coverage", "--config", path, "--out", out("b"), "--threads", "3"}).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "coverage.csv"), slurp(dir_ / "b" / "coverage.csv"));
}
