#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "mars/analysis.hpp"
#include "mars/config.hpp"
#include "mars/experiment.hpp"
#include "mars/sweep.hpp"

using namespace mars;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = MARS_CONFIG_DIR;

RunConfig quadratic(OptimizerKind kind, std::uint64_t steps = 300) {
  RunConfig c;
  c.optimizer = kind;
  c.hp = default_hyperparams(kind);
  c.lr.kind = LrKind::constant;
  c.lr.max_lr = 1e-2;
  c.steps = steps;
  c.finalize();
  return c;
}

std::string csv_of(const RunLog& log) {
  std::ostringstream out;
  write_csv(log, out);
  return out.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mars_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunLog fake_log(const std::string& label, std::uint64_t seed, std::optional<std::uint64_t> steps, double final_loss) {
  RunLog log;
  log.summary.name = label;
  log.summary.problem = "quadratic";
  log.summary.seed = seed;
  log.summary.final_loss = final_loss;
  log.summary.steps_to_threshold = steps;
  const std::uint64_t n = steps.value_or(400);
  for (std::uint64_t t = 1; t <= n; ++t) {
    RunRow r;
    r.step = t;
    r.grad_norm = steps && t == n ? 1e-3 : 1.0;
    log.rows.push_back(r);
  }
  return log;
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" MARS_OPT_BINARY "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST(RunExperiment, Deterministic) {
  auto cfg = load_config(kConfigs / "quadratic.json");
  cfg.out.reset();
  cfg.steps = 500;
  cfg.finalize();
  const auto a = run_experiment(cfg), b = run_experiment(cfg);
  EXPECT_EQ(csv_of(a), csv_of(b));
  cfg.seed = 1;
  EXPECT_NE(csv_of(run_experiment(cfg)), csv_of(a));
}

TEST(RunExperiment, CsvShape) {
  const auto log = run_experiment(quadratic(OptimizerKind::mars_adamw, 25));
  std::istringstream in(csv_of(log));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,loss,grad_norm,tracking_err,lr,gamma,clipped");
  EXPECT_EQ(log.rows.size(), 25u);
  EXPECT_EQ(log.rows.front().step, 1u);
  EXPECT_EQ(log.rows.back().step, 25u);
  EXPECT_EQ(log.rows.front().gamma, 0.025);
  // Round trip through the CSV reader keeps every bit.
  std::istringstream again(csv_of(log));
  const auto rows = read_csv(again);
  ASSERT_EQ(rows.size(), log.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].loss, log.rows[i].loss);
    EXPECT_EQ(rows[i].tracking_err, log.rows[i].tracking_err);
    EXPECT_EQ(rows[i].clipped, log.rows[i].clipped);
  }
}

TEST(RunExperiment, SgdDescendsOnNoiselessQuadratic) {
  auto cfg = quadratic(OptimizerKind::sgd, 400);
  cfg.problem.sigma = 0.0;
  cfg.lr.max_lr = 1.9;  // L = eig_max = 1
  const auto log = run_experiment(cfg);
  ASSERT_FALSE(log.summary.diverged);
  for (std::size_t i = 1; i < log.rows.size(); ++i)
    if (log.rows[i - 1].loss > 1e-20) ASSERT_LT(log.rows[i].loss, log.rows[i - 1].loss) << i;
}

TEST(RunExperiment, GammaZeroMatchesAdamW) {
  auto mars = quadratic(OptimizerKind::mars_adamw, 1000);
  mars.hp.beta1 = 0.9;
  mars.hp.beta2 = 0.95;
  mars.gamma.value = 0.0;
  const auto adam = quadratic(OptimizerKind::adamw, 1000);
  const auto a = run_experiment(mars), b = run_experiment(adam);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) ASSERT_LE(std::abs(a.rows[i].loss - b.rows[i].loss), 1e-12);
}

TEST(RunExperiment, GradientEvaluationCounts) {
  const std::uint64_t T = 50;
  auto exact = quadratic(OptimizerKind::mars_adamw, T);
  EXPECT_EQ(run_experiment(exact).summary.grad_evals, 2 * T);
  auto approx = exact;
  approx.hp.correction = CorrectionMode::approx;
  EXPECT_EQ(run_experiment(approx).summary.grad_evals, T);
  approx.hp.approx_init = ApproxInit::initial_batch;
  EXPECT_EQ(run_experiment(approx).summary.grad_evals, T + 1);
  EXPECT_EQ(run_experiment(quadratic(OptimizerKind::adamw, T)).summary.grad_evals, T);
}

TEST(RunExperiment, DivergenceTruncates) {
  auto cfg = quadratic(OptimizerKind::sgd, 500);
  cfg.lr.max_lr = 50.0;
  RunLog log;
  ASSERT_NO_THROW(log = run_experiment(cfg));
  EXPECT_TRUE(log.summary.diverged);
  EXPECT_LT(log.rows.size(), 500u);
  EXPECT_EQ(log.summary.steps_completed, log.rows.size());
  EXPECT_FALSE(log.summary.error.empty());
}

TEST(RunExperiment, EveryProblemKindRuns) {
  for (const char* kind : {"quadratic", "logistic", "rosenbrock", "mlp"}) {
    auto cfg = quadratic(OptimizerKind::mars_adamw, 20);
    cfg.problem.kind = kind;
    cfg.problem.batch_size = 8;
    cfg.problem.dim = 4;
    cfg.lr.max_lr = 1e-3;
    const auto log = run_experiment(cfg);
    EXPECT_FALSE(log.summary.diverged) << kind;
    EXPECT_EQ(log.rows.size(), 20u) << kind;
  }
}

TEST(RunExperiment, OptimalGammaStaysInRange) {
  auto cfg = quadratic(OptimizerKind::mars_adamw, 300);
  cfg.gamma.kind = GammaKind::optimal_estimate;
  const auto log = run_experiment(cfg);
  for (const auto& r : log.rows) {
    EXPECT_GE(r.gamma, 0.0);
    EXPECT_LE(r.gamma, 1.0);
  }
}

TEST(RunExperiment, MatrixShapedProblemsForPolarMethods) {
  for (auto kind : {OptimizerKind::mars_shampoo, OptimizerKind::muon}) {
    auto cfg = quadratic(kind, 100);
    cfg.problem.dim = 12;
    cfg.problem.matrix_rows = 3;
    const auto log = run_experiment(cfg);
    EXPECT_FALSE(log.summary.diverged) << to_string(kind);
    EXPECT_EQ(log.rows.size(), 100u);
  }
}

TEST(WriteRun, RoundTrip) {
  const auto dir = scratch("roundtrip");
  auto cfg = quadratic(OptimizerKind::mars_adamw, 40);
  cfg.out = dir;
  const auto log = run_experiment(cfg);
  ASSERT_TRUE(fs::exists(dir / "run.csv"));
  ASSERT_TRUE(fs::exists(dir / "summary.json"));
  const auto back = read_run(dir);
  EXPECT_EQ(back.summary.final_loss, log.summary.final_loss);
  EXPECT_EQ(back.summary.steps_to_threshold, log.summary.steps_to_threshold);
  EXPECT_EQ(back.summary.grad_evals, log.summary.grad_evals);
  EXPECT_EQ(csv_of(back), csv_of(log));
  fs::remove_all(dir);
}

TEST(TrackingStats, NoiselessFullCorrectionVanishes) {
  auto cfg = quadratic(OptimizerKind::mars_adamw, 3000);
  cfg.problem.sigma = 0.0;
  cfg.gamma.value = 1.0;
  const auto log = run_experiment(cfg);
  const auto early = tracking_error_stats(log, 0);
  const auto late = tracking_error_stats(log, 2500);
  EXPECT_LT(late.mean, 1e-3 * early.mean);
  EXPECT_EQ(late.count, 500u);
}

TEST(TrackingStats, EmaFloorIsPositive) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = load_config(kConfigs / "quadratic.json");
    cfg.out.reset();
    cfg.seed = seed;
    cfg.gamma.value = 0.0;
    EXPECT_GT(tracking_error_stats(run_experiment(cfg), 200).mean, 1e-3) << seed;
  }
}

TEST(TrackingStats, FullCorrectionBeatsEma) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = load_config(kConfigs / "quadratic.json");
    cfg.out.reset();
    cfg.seed = seed;
    cfg.gamma.value = 0.0;
    const double ema = tracking_error_stats(run_experiment(cfg), 200).mean;
    cfg.gamma.value = 1.0;
    wins += tracking_error_stats(run_experiment(cfg), 200).mean < ema;
  }
  EXPECT_GE(wins, 18);
}

TEST(TrackingStats, RequiresRecording) {
  auto cfg = quadratic(OptimizerKind::mars_adamw, 10);
  cfg.record_tracking_error = false;
  const auto log = run_experiment(cfg);
  EXPECT_THROW(tracking_error_stats(log, 0), std::invalid_argument);
  EXPECT_THROW(tracking_error_stats(run_experiment(quadratic(OptimizerKind::mars_adamw, 10)), 10),
               std::invalid_argument);
}

TEST(Compare, SelfComparisonIsOne) {
  std::vector<RunLog> logs{fake_log("a", 0, 120, 0.5), fake_log("b", 0, 120, 0.5)};
  const auto rep = compare_runs(logs, 1e-2);
  ASSERT_EQ(rep.pairs.size(), 2u);
  for (const auto& p : rep.pairs) {
    EXPECT_EQ(p.steps_ratio, 1.0);
    EXPECT_EQ(p.final_loss_delta, 0.0);
  }
  std::vector<RunLog> same{fake_log("a", 0, 120, 0.5), fake_log("a", 1, 90, 0.5)};
  const auto self = compare_runs(same, 1e-2);
  ASSERT_EQ(self.pairs.size(), 1u);
  EXPECT_EQ(self.pairs[0].steps_ratio, 1.0);
}

TEST(Compare, HalfAsManySteps) {
  std::vector<RunLog> logs{fake_log("a", 0, 100, 0.1), fake_log("b", 0, 200, 0.3)};
  const auto rep = compare_runs(logs, 1e-2);
  ASSERT_EQ(rep.pairs.size(), 2u);
  EXPECT_EQ(rep.pairs[0].a, "a");
  EXPECT_EQ(rep.pairs[0].b, "b");
  EXPECT_DOUBLE_EQ(rep.pairs[0].steps_ratio, 0.5);
  EXPECT_DOUBLE_EQ(rep.pairs[0].final_loss_delta, -0.2);
  EXPECT_DOUBLE_EQ(rep.pairs[1].steps_ratio, 2.0);
}

TEST(Compare, MediansOverSeeds) {
  std::vector<RunLog> logs;
  const std::uint64_t a_steps[] = {10, 30, 20};
  for (std::uint64_t s = 0; s < 3; ++s) {
    logs.push_back(fake_log("a", s, a_steps[s], 1.0));
    logs.push_back(fake_log("b", s, s == 0 ? std::nullopt : std::optional<std::uint64_t>(40), 2.0));
  }
  const auto rep = compare_runs(logs, 1e-2);
  ASSERT_EQ(rep.labels.size(), 2u);
  EXPECT_EQ(rep.labels[0].median_steps, 20.0);
  EXPECT_EQ(rep.labels[0].min_steps, 10.0);
  EXPECT_EQ(rep.labels[0].max_steps, 30.0);
  EXPECT_EQ(rep.labels[1].median_steps, 40.0);
  EXPECT_TRUE(std::isinf(rep.labels[1].max_steps));
  EXPECT_DOUBLE_EQ(rep.pairs[0].steps_ratio, 0.5);
  EXPECT_NO_THROW(rep.to_json().dump());
}

TEST(Compare, MismatchedGrids) {
  std::vector<RunLog> logs{fake_log("a", 0, 10, 1.0), fake_log("b", 1, 10, 1.0)};
  try {
    compare_runs(logs, 1e-2);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "mismatched run grids");
  }
  std::vector<RunLog> one{fake_log("a", 0, 10, 1.0)};
  EXPECT_THROW(compare_runs(one, 1e-2), std::invalid_argument);
}

TEST(Compare, RatioConventionsAndSymmetry) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(steps_ratio(0, 0), 1.0);
  EXPECT_EQ(steps_ratio(5, inf), 0.0);
  EXPECT_EQ(steps_ratio(inf, 5), inf);
  EXPECT_EQ(steps_ratio(inf, inf), 1.0);
  for (double a : {1.0, 7.0, 123.0})
    for (double b : {3.0, 64.0}) EXPECT_DOUBLE_EQ(steps_ratio(a, b) * steps_ratio(b, a), 1.0);
}

TEST(Compare, StepsToThresholdFromRecordedRuns) {
  const double thr = 1e-2;
  std::vector<RunRow> rows(5);
  const double gn[] = {1.0, 0.5, 0.01, 0.2, 0.001};
  for (std::size_t i = 0; i < 5; ++i) {
    rows[i].step = i + 1;
    rows[i].grad_norm = gn[i];
  }
  EXPECT_EQ(steps_to_threshold(rows, thr), 3u);
  EXPECT_FALSE(steps_to_threshold(rows, 1e-4).has_value());
}

TEST(Sweep, ParseSeedRangeAndValues) {
  EXPECT_EQ(parse_seed_range("3..7"), (std::pair<std::uint64_t, std::uint64_t>{3, 7}));
  EXPECT_EQ(parse_seed_range("4"), (std::pair<std::uint64_t, std::uint64_t>{4, 4}));
  EXPECT_THROW(parse_seed_range("7..3"), ConfigError);
  EXPECT_THROW(parse_seed_range("a..b"), ConfigError);
  EXPECT_EQ(parse_value_list("0,0.01, 0.025,1"), (std::vector<double>{0, 0.01, 0.025, 1}));
  EXPECT_THROW(parse_value_list("0,,1"), ConfigError);
  EXPECT_THROW(parse_value_list("0,x"), ConfigError);
}

TEST(Sweep, ParallelMatchesSequential) {
  const auto base = quadratic(OptimizerKind::mars_adamw, 200);
  const auto configs = seed_sweep(base, 0, 7);
  ASSERT_EQ(configs.size(), 8u);
  const auto par = run_parallel(configs, 4);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    EXPECT_EQ(par[i].summary.seed, i);
    EXPECT_EQ(csv_of(par[i]), csv_of(run_experiment(configs[i])));
  }
}

TEST(Sweep, GammaScan) {
  const auto base = quadratic(OptimizerKind::mars_adamw, 200);
  const std::vector<double> values{0, 0.01, 0.025, 0.05, 0.1, 1};
  const auto rows = gamma_scan(base, values, 3);
  ASSERT_EQ(rows.size(), values.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].gamma, values[i]);
    EXPECT_FALSE(rows[i].summary.diverged);
    EXPECT_TRUE(std::isfinite(rows[i].mean_tracking_err));
  }
  std::ostringstream out;
  write_gamma_scan_csv(rows, out);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 7);
  EXPECT_THROW(gamma_scan(quadratic(OptimizerKind::adamw, 10), values), ConfigError);
  const std::vector<double> bad{1.5};
  EXPECT_THROW(gamma_scan(base, bad), ConfigError);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const std::string cfg = (kConfigs / "quadratic.json").string();
  EXPECT_EQ(run_cli("run \"" + cfg + "\" --steps 50 --out \"" + (dir / "ok").string() + "\""), 0);
  EXPECT_TRUE(fs::exists(dir / "ok" / "run.csv"));

  auto diverge = nlohmann::json::parse(R"({"problem": {"kind": "quadratic"},
    "optimizer": {"kind": "sgd"}, "schedule": {"lr": 50.0}, "run": {"steps": 500}})");
  write_json(dir / "diverge.json", diverge);
  EXPECT_EQ(run_cli("run \"" + (dir / "diverge.json").string() + "\""), 1);

  EXPECT_EQ(run_cli("verify --streams 50"), 0);
  EXPECT_EQ(run_cli("verify --streams 50 --corrupt-fold"), 2);

  auto bad = diverge;
  bad["optimizer"]["bogus"] = 1;
  write_json(dir / "bad.json", bad);
  EXPECT_EQ(run_cli("run \"" + (dir / "bad.json").string() + "\""), 3);
  EXPECT_EQ(run_cli("run /nonexistent/config.json"), 3);
  EXPECT_EQ(run_cli("frobnicate"), 3);
  EXPECT_EQ(run_cli("sweep \"" + cfg + "\" --seeds 5..2"), 3);
  EXPECT_EQ(run_cli("run \"" + cfg + "\" --steps 60", "MARS_OPT_SEED=notanumber"), 3);
  fs::remove_all(dir);
}

TEST(Cli, SeedPrecedence) {
  const auto dir = scratch("seed");
  const std::string cfg = (kConfigs / "quadratic.json").string();
  auto run_to = [&](const std::string& name, const std::string& args, const std::string& env) {
    EXPECT_EQ(run_cli("run \"" + cfg + "\" --steps 60 --out \"" + (dir / name).string() + "\" " + args, env), 0);
    return read_run(dir / name).summary.seed;
  };
  EXPECT_EQ(run_to("cfg", "", ""), 0u);
  EXPECT_EQ(run_to("env", "", "MARS_OPT_SEED=5"), 5u);
  EXPECT_EQ(run_to("flag", "--seed 9", "MARS_OPT_SEED=5"), 9u);
  fs::remove_all(dir);
}

TEST(Cli, SweepCompareAndGammaScan) {
  const auto dir = scratch("sweep");
  const std::string cfg = (kConfigs / "quadratic.json").string();
  EXPECT_EQ(run_cli("sweep \"" + cfg + "\" --seeds 0..2 --steps 100 --out \"" + (dir / "mars").string() + "\""), 0);
  for (int s = 0; s < 3; ++s) EXPECT_TRUE(fs::exists(dir / "mars" / ("seed_" + std::to_string(s)) / "run.csv"));

  auto adam = nlohmann::json::parse(std::ifstream(cfg));
  adam["optimizer"] = {{"kind", "adamw"}};
  write_json(dir / "adam.json", adam);
  EXPECT_EQ(run_cli("sweep \"" + (dir / "adam.json").string() + "\" --seeds 0..2 --steps 100 --out \"" +
                    (dir / "adam").string() + "\""),
            0);
  const auto report = dir / "report.json";
  EXPECT_EQ(run_cli("compare \"" + (dir / "mars").string() + "\" \"" + (dir / "adam").string() + "\" --out \"" +
                    report.string() + "\""),
            0);
  const auto rep = nlohmann::json::parse(std::ifstream(report));
  EXPECT_EQ(rep["labels"].size(), 2u);
  EXPECT_EQ(rep["pairs"].size(), 2u);

  EXPECT_EQ(run_cli("gamma-scan \"" + cfg + "\" --values 0,0.5,1 --steps 100 --out \"" + (dir / "scan").string() + "\""), 0);
  std::ifstream scan(dir / "scan" / "gamma_scan.csv");
  std::string line;
  int lines = 0;
  while (std::getline(scan, line)) ++lines;
  EXPECT_EQ(lines, 4);
  EXPECT_EQ(run_cli("gamma-scan \"" + (dir / "adam.json").string() + "\" --values 0,1"), 3);
  fs::remove_all(dir);
}
