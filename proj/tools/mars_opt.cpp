// mars_opt: run, sweep, compare and verify optimizer experiments.
//
// Exit codes: 0 success, 1 divergence, 2 verification failure, 3 config error.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mars/analysis.hpp"
#include "mars/config.hpp"
#include "mars/experiment.hpp"
#include "mars/sweep.hpp"
#include "mars/verify.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kDiverged = 1;
constexpr int kVerifyFailed = 2;
constexpr int kConfigError = 3;

struct Overrides {
  std::optional<std::string> out;
  std::optional<std::uint64_t> steps;
  std::optional<std::uint64_t> seed;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--steps", o.steps, "Override run.steps")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Override run.seed (takes precedence over MARS_OPT_SEED)");
}

std::uint64_t parse_env_seed(const char* text) {
  std::size_t used = 0;
  const std::string s(text);
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw mars::ConfigError("MARS_OPT_SEED is not an unsigned integer: " + s);
  return v;
}

mars::RunConfig load_with_overrides(const std::string& path, const Overrides& o) {
  auto cfg = mars::load_config(path);
  if (const char* env = std::getenv("MARS_OPT_SEED")) cfg.seed = parse_env_seed(env);
  if (o.seed) cfg.seed = *o.seed;
  if (o.steps) cfg.steps = *o.steps;
  if (o.out) cfg.out = fs::path(*o.out);
  cfg.finalize();
  return cfg;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void print_summary(const mars::RunLog& log) {
  const auto& s = log.summary;
  std::cout << s.name << " seed=" << s.seed << " steps=" << s.steps_completed << "/" << s.steps_requested
            << " final_loss=" << fmt(s.final_loss) << " min_grad_norm=" << fmt(s.min_grad_norm)
            << " steps_to_threshold=" << (s.steps_to_threshold ? std::to_string(*s.steps_to_threshold) : "never")
            << " grad_evals=" << s.grad_evals;
  if (s.diverged) std::cout << " DIVERGED (" << s.error << ")";
  std::cout << '\n';
}

// Run directories are those holding a summary.json, searched recursively.
std::vector<fs::path> find_runs(const fs::path& root) {
  std::vector<fs::path> out;
  if (fs::exists(root / "summary.json") && fs::exists(root / "run.csv")) {
    out.push_back(root);
    return out;
  }
  if (!fs::is_directory(root)) throw mars::ConfigError("not a run directory: " + root.string());
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "summary.json" && fs::exists(e.path().parent_path() / "run.csv"))
      out.push_back(e.path().parent_path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variance-reduced optimizer experiments"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides run_o;
  auto* run = app.add_subcommand("run", "Run a single experiment");
  run->add_option("config", config_path, "Config file (.json or .toml)")->required();
  add_overrides(run, run_o);

  Overrides sweep_o;
  std::string seeds;
  unsigned jobs = 0;
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per seed in parallel");
  sweep->add_option("config", config_path, "Config file")->required();
  sweep->add_option("--seeds", seeds, "Seed range a..b (inclusive)")->required();
  sweep->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  add_overrides(sweep, sweep_o);

  std::vector<std::string> dirs;
  std::optional<double> threshold;
  std::optional<std::string> report_out;
  auto* compare = app.add_subcommand("compare", "Compare recorded runs");
  compare->add_option("dirs", dirs, "Run directories or parents of run directories")->required();
  compare->add_option("--threshold", threshold, "Grad-norm threshold (default: from the runs)");
  compare->add_option("--out", report_out, "Write the report as JSON to this file");

  mars::VerifyOptions vopt;
  auto* verify = app.add_subcommand("verify", "Run the identity and bound checks");
  verify->add_option("--seed", vopt.seed, "Seed for the random streams");
  verify->add_option("--steps", vopt.steps, "Trajectory length")->check(CLI::PositiveNumber);
  verify->add_option("--streams", vopt.streams, "Random streams for the bound checks")->check(CLI::PositiveNumber);
  verify->add_flag("--corrupt-fold", vopt.corrupt_fold, "Negative control: perturb a fold constant");

  Overrides scan_o;
  std::string values;
  auto* scan = app.add_subcommand("gamma-scan", "Scan constant gamma values");
  scan->add_option("config", config_path, "Config file")->required();
  scan->add_option("--values", values, "Comma-separated gamma values")->required();
  scan->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  add_overrides(scan, scan_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) {
      const auto cfg = load_with_overrides(config_path, run_o);
      const auto log = mars::run_experiment(cfg);
      print_summary(log);
      return log.summary.diverged ? kDiverged : kOk;
    }

    if (*sweep) {
      auto base = load_with_overrides(config_path, sweep_o);
      const auto [first, last] = mars::parse_seed_range(seeds);
      const auto logs = mars::run_parallel(mars::seed_sweep(base, first, last), jobs);
      bool diverged = false;
      for (const auto& log : logs) {
        print_summary(log);
        diverged = diverged || log.summary.diverged;
      }
      return diverged ? kDiverged : kOk;
    }

    if (*compare) {
      std::vector<mars::RunLog> logs;
      for (const auto& d : dirs)
        for (const auto& run_dir : find_runs(d)) logs.push_back(mars::read_run(run_dir));
      if (logs.empty()) throw mars::ConfigError("no runs found");
      const double thr = threshold.value_or(logs.front().summary.threshold);
      const auto rep = mars::compare_runs(logs, thr);
      std::cout << "label,runs,median_steps,min_steps,max_steps,median_final_loss\n";
      for (const auto& s : rep.labels)
        std::cout << s.label << ',' << s.runs << ',' << fmt(s.median_steps) << ',' << fmt(s.min_steps) << ','
                  << fmt(s.max_steps) << ',' << fmt(s.median_final_loss) << '\n';
      for (const auto& p : rep.pairs)
        std::cout << "ratio " << p.a << "/" << p.b << " = " << fmt(p.steps_ratio)
                  << "  final_loss_delta = " << fmt(p.final_loss_delta) << '\n';
      if (report_out) {
        std::ofstream f(*report_out);
        if (!f) throw mars::ConfigError("cannot write " + *report_out);
        f << rep.to_json().dump(2) << '\n';
      }
      return kOk;
    }

    if (*verify) {
      const auto checks = mars::verify_suite(vopt);
      for (const auto& c : checks) {
        std::printf("%s %-40s residual=%.3e tol=%.1e%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.residual,
                    c.tolerance, c.detail.empty() ? "" : "  ", c.detail.c_str());
      }
      const bool ok = mars::all_passed(checks);
      std::printf("%s\n", ok ? "all checks passed" : "verification FAILED");
      return ok ? kOk : kVerifyFailed;
    }

    if (*scan) {
      const auto base = load_with_overrides(config_path, scan_o);
      const auto vals = mars::parse_value_list(values);
      const auto rows = mars::gamma_scan(base, vals, jobs);
      mars::write_gamma_scan_csv(rows, std::cout);
      if (base.out) {
        std::ofstream f(*base.out / "gamma_scan.csv", std::ios::binary);
        mars::write_gamma_scan_csv(rows, f);
      }
      for (const auto& r : rows)
        if (r.summary.diverged) return kDiverged;
      return kOk;
    }
  } catch (const mars::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
