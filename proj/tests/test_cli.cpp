#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "adamsep/cli.hpp"

using namespace adamsep;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test.
fs::path scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const auto p = fs::temp_directory_path() / "adamsep-cli-tests" /
                 (std::string(info->test_suite_name()) + "." + info->name());
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Config parse(const std::string& text, const fs::path& dir) {
  return parse_config_json(text, dir.string());
}

std::vector<std::string> violations_of(const std::string& text) {
  try {
    parse_config_json(text);
  } catch (const ConfigViolations& e) {
    return e.violations();
  }
  return {};
}

bool mentions(const std::vector<std::string>& vs, const std::string& needle) {
  for (const auto& v : vs)
    if (v.find(needle) != std::string::npos) return true;
  return false;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

/// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST(ParseConfig, MinimalRunDefaults) {
  const auto c = parse_config_json(R"({"command": "run", "optimizer": {"eta": 0.1}})");
  EXPECT_EQ(c.command, "run");
  EXPECT_EQ(c.problem.objective, "quadratic-diag");
  EXPECT_EQ(c.problem.d, 1u);
  EXPECT_EQ(c.problem.lambda, std::vector<double>{1.0});
  EXPECT_EQ(c.oracle.noise, "zero");
  EXPECT_EQ(c.optimizer.kind, "adam");
  EXPECT_TRUE(c.optimizer.calibrated);
  EXPECT_EQ(c.optimizer.beta1, 0.0);
  EXPECT_EQ(c.optimizer.eps, 1e-8);
  EXPECT_EQ(c.optimizer.v0, 1.0);
  EXPECT_EQ(c.run.T, 100u);
  EXPECT_EQ(c.run.master_seed, 0u);
  EXPECT_EQ(c.output.directory, "adamsep-out");
  EXPECT_EQ(c.hash().size(), 16u);
}

TEST(ParseConfig, Beta2ConflictsWithCalibratedMode) {
  const auto v = violations_of(R"({"command": "run", "optimizer": {"eta": 0.1, "beta2": 0.9}})");
  EXPECT_TRUE(mentions(v, "optimizer.beta2")) << v.size();
  EXPECT_TRUE(mentions(v, "conflicts with calibrated mode"));
}

TEST(ParseConfig, NegativeNNamesKey) {
  const auto v = violations_of(R"({"command": "tail", "optimizer": {"eta": 0.1},
                                   "run": {"N": -5, "deltas": [0.1, 0.01, 0.001]}})");
  EXPECT_TRUE(mentions(v, "run.N"));
}

TEST(ParseConfig, CollectsAllViolations) {
  const auto v = violations_of(R"({"command": "run", "bogus": 1,
                                   "problem": {"d": 0, "colour": "red"},
                                   "optimizer": {"eta": -1}})");
  EXPECT_GE(v.size(), 4u);
  EXPECT_TRUE(mentions(v, "bogus: unknown key"));
  EXPECT_TRUE(mentions(v, "problem.colour"));
  EXPECT_TRUE(mentions(v, "problem.d"));
  EXPECT_TRUE(mentions(v, "optimizer.eta"));
}

TEST(ParseConfig, MalformedAndUnknownCommand) {
  EXPECT_TRUE(mentions(violations_of("{not json"), "malformed JSON"));
  EXPECT_TRUE(mentions(violations_of(R"({"command": "fly"})"), "command"));
  EXPECT_TRUE(mentions(violations_of(R"({"optimizer": {"eta": 0.1}})"), "command: required"));
}

TEST(ParseConfig, MissingScheduleFile) {
  const auto v = violations_of(R"({"command": "lowerbound", "optimizer": {"kind": "sgd", "schedule": "nope.csv"},
                                   "run": {"mode": "tv", "T": 20, "delta_bar": 0.1}})");
  EXPECT_TRUE(mentions(v, "optimizer.schedule"));
  EXPECT_TRUE(mentions(v, "does not exist"));
}

TEST(ParseConfig, ThresholdsAndGrid) {
  const auto v = violations_of(R"({"command": "separate", "run": {"deltas": [0.01, 0.1, 0.001],
                                   "thresholds": {"sgd_min": 0.9, "oops": 1}}})");
  EXPECT_TRUE(mentions(v, "run.deltas"));
  EXPECT_TRUE(mentions(v, "run.thresholds.oops"));
}

TEST(ParseConfig, ReadsFromFileRelativeSchedule) {
  const auto dir = scratch();
  write_text_file((dir / "eta.csv").string(), "eta\n0.5\n0.5\n");
  write_text_file((dir / "c.json").string(),
                  R"({"command": "run", "optimizer": {"kind": "sgd", "schedule": "eta.csv"}, "run": {"T": 2}})");
  const auto c = parse_config((dir / "c.json").string());
  EXPECT_EQ(fs::path(*c.optimizer.schedule), dir / "eta.csv");
  EXPECT_THROW(parse_config((dir / "missing.json").string()), ConfigError);
}

TEST(ScheduleCsv, Parsing) {
  EXPECT_EQ(parse_schedule_csv("eta\n0.1\n\n0.25\r\n"), (std::vector<double>{0.1, 0.25}));
  EXPECT_THROW(parse_schedule_csv("step\n0.1\n"), InputError);
  EXPECT_THROW(parse_schedule_csv("eta\nabc\n"), InputError);
  EXPECT_THROW(parse_schedule_csv("eta\n"), InputError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(0.3330078125), "0.3330078125");
  EXPECT_EQ(format_double(1e-300), "1e-300");
  EXPECT_EQ(format_double(-2.0), "-2");
  EXPECT_EQ(format_double(INFINITY), "inf");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Execute, RunWritesStepsAndLedger) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "run", "problem": {"lambda": [1, 2]},
                           "oracle": {"noise": "gaussian", "sigma": 0.5},
                           "optimizer": {"eta": 0.05, "beta1": 0.5}, "run": {"T": 12, "G": 1.5}})", dir);
  ASSERT_EQ(execute(c, 1, dir.string()), kExitOk);
  const auto out = output_dir(c, dir.string());
  EXPECT_EQ(out.filename().string(), "run-" + c.hash());
  const auto steps = slurp(out / "steps.csv");
  EXPECT_EQ(steps.substr(0, steps.find('\n')),
            "t,x_0,x_1,g_0,g_1,grad_0,grad_1,m_0,m_1,v_0,v_1,gamma_0,gamma_1");
  EXPECT_EQ(std::count(steps.begin(), steps.end(), '\n'), 13);
  const auto j = nlohmann::json::parse(slurp(out / "ledger.json"));
  for (const char* k : {"T", "d", "E", "ASGE", "MomE", "QV", "S", "avg_gsq", "w_gsq", "stopping_time"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["S"].size(), 13u);
}

TEST(Execute, RunIsReproducedFromTheLibrary) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "run", "oracle": {"noise": "gaussian", "sigma": 1},
                           "optimizer": {"eta": 0.1}, "run": {"T": 20, "master_seed": 5, "x1": [2]}})", dir);
  ASSERT_EQ(execute(c, 1, dir.string()), kExitOk);
  RngStream s(5, 0, "noise");
  const auto tr = run_trajectory(calibrate(0.1, 20, 0.0, 1e-8, 1.0),
                                 Oracle(Objective::half_square(), GaussianNoise{1.0}), RealVec{2.0}, 20, s);
  const auto j = nlohmann::json::parse(slurp(output_dir(c, dir.string()) / "ledger.json"));
  EXPECT_EQ(j["E"].get<double>(), compute_ledger(tr).E);
}

TEST(Execute, SgdStepsUseEtaAsGamma) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "run", "optimizer": {"kind": "sgd", "gamma": 0.25}, "run": {"T": 3}})", dir);
  ASSERT_EQ(execute(c, 1, dir.string()), kExitOk);
  const auto steps = slurp(output_dir(c, dir.string()) / "steps.csv");
  EXPECT_NE(steps.find("\n1,1,1,1,1,0,0.25\n"), std::string::npos) << steps;
}

TEST(Execute, RunDivergenceExitsThree) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "run", "optimizer": {"kind": "sgd", "gamma": 1e3},
                           "oracle": {"noise": "gaussian", "sigma": 1}, "run": {"T": 400}})", dir);
  EXPECT_EQ(execute(c, 1, dir.string()), kExitDivergence);
  const auto j = nlohmann::json::parse(slurp(output_dir(c, dir.string()) / "ledger.json"));
  EXPECT_FALSE(j["diverged_at"].is_null());
}

TEST(Execute, LemmasCleanSuite) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "lemmas", "run": {"count": 50, "gen_beta_count": 10}})", dir);
  ASSERT_EQ(execute(c, 1, dir.string()), kExitOk);
  EXPECT_EQ(slurp(output_dir(c, dir.string()) / "violations.csv"),
            "check_id,seed,d,T,beta1,margin,worst_t,worst_i\n");
}

TEST(Execute, LowerboundVerdicts) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "lowerbound", "optimizer": {"kind": "sgd", "gamma": 0.5},
                           "run": {"T": 10, "delta": 0.001, "N": 2000, "master_seed": 1}})", dir);
  ASSERT_EQ(execute(c, 1, dir.string()), kExitOk);
  const auto j = nlohmann::json::parse(slurp(output_dir(c, dir.string()) / "report.json"));
  EXPECT_TRUE(j["all_verdicts_true"].get<bool>());
  EXPECT_NEAR(j["exact_event_prob"].get<double>(), 3.9490858043286616e-3, 1e-15);
  EXPECT_EQ(j["instance"]["R"].get<double>(), 0.3330078125);
  EXPECT_FALSE(j["mc"].is_null());
}

TEST(Execute, LowerboundInvalidDeltaExitsTwo) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "lowerbound", "optimizer": {"kind": "sgd", "gamma": 0.5},
                           "run": {"T": 10, "delta": 0.02}})", dir);
  testing::internal::CaptureStderr();
  EXPECT_EQ(execute(c, 1, dir.string()), kExitConfig);
  EXPECT_NE(testing::internal::GetCapturedStderr().find("delta < 1/64"), std::string::npos);
}

TEST(Execute, LowerboundTimeVaryingFromSchedule) {
  const auto dir = scratch();
  std::string csv = "eta\n";
  for (int k = 0; k < 20; ++k) csv += "0.5\n";
  write_text_file((dir / "eta.csv").string(), csv);
  const auto c = parse(R"({"command": "lowerbound", "optimizer": {"kind": "sgd", "schedule": "eta.csv"},
                           "run": {"mode": "tv", "T": 20, "delta_bar": 0.1}})", dir);
  ASSERT_EQ(execute(c, 1, dir.string()), kExitOk);
  const auto j = nlohmann::json::parse(slurp(output_dir(c, dir.string()) / "report.json"));
  EXPECT_NEAR(j["exact_event_prob"].get<double>(), 0.012206, 5e-7);
}

TEST(Execute, TailPerDeltaInstances) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "tail", "oracle": {"noise": "three-point", "A": 2},
                           "optimizer": {"kind": "sgd", "gamma": 0.1},
                           "run": {"T": 100, "N": 2000, "x1": [0], "per_delta_instances": true,
                                   "deltas": [0.1, 0.03, 0.01]}})", dir);
  ASSERT_EQ(execute(c, 1, dir.string()), kExitOk);
  const auto out = output_dir(c, dir.string());
  const auto curve = slurp(out / "curve.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "delta,q,n_exceed");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 4);
  const auto j = nlohmann::json::parse(slurp(out / "fit.json"));
  EXPECT_GT(j["fit"]["slope"].get<double>(), 0.0);
}

TEST(Execute, TailZeroQuantileIsCheckFailure) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "tail", "optimizer": {"eta": 0.1},
                           "run": {"T": 20, "N": 100, "x1": [0], "deltas": [0.1, 0.05, 0.02]}})", dir);
  testing::internal::CaptureStderr();
  EXPECT_EQ(execute(c, 1, dir.string()), kExitCheckFailed);
  testing::internal::GetCapturedStderr();
}

TEST(Execute, DeterministicAcrossRunsAndWorkers) {
  const auto d1 = scratch() / "a", d2 = d1.parent_path() / "b";
  const auto c = parse(R"({"command": "tail", "oracle": {"noise": "gaussian", "sigma": 1},
                           "optimizer": {"eta": 0.1}, "run": {"T": 50, "N": 400,
                           "deltas": [0.2, 0.1, 0.05]}})", d1.parent_path());
  ASSERT_EQ(execute(c, 1, d1.string()), kExitOk);
  ASSERT_EQ(execute(c, 3, d2.string()), kExitOk);
  EXPECT_EQ(tree(d1), tree(d2));
}

TEST(Execute, SeparateSmall) {
  const auto dir = scratch();
  const auto c = parse(R"({"command": "separate", "run": {"T": 100, "N": 2000,
                           "deltas": [0.1, 0.03, 0.01], "thresholds": {"sgd_min": 0, "gap_min": -10}}})", dir);
  const int rc = execute(c, 1, dir.string());
  EXPECT_EQ(rc, kExitOk);
  const auto j = nlohmann::json::parse(slurp(output_dir(c, dir.string()) / "separation.json"));
  EXPECT_EQ(j["points"].size(), 3u);
  EXPECT_TRUE(j["gap_ok"].get<bool>());
  EXPECT_DOUBLE_EQ(j["sgd_gamma"].get<double>(), 0.1);
}
