#pragma once

// Single experiment execution and its on-disk record.
//
// Row t describes iteration t of the loop: F(x_t), ‖∇F(x_t)‖₂, the tracking
// error ‖m_t − ∇F(x_t)‖² of the momentum produced at that iteration, and the
// η_t, γ_t and clip flag applied to reach x_{t+1}.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mars/config.hpp"
#include "mars/problems.hpp"

namespace mars {

struct RunRow {
  std::uint64_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double tracking_err = 0.0;
  double lr = 0.0;
  double gamma = 0.0;
  bool clipped = false;
};

struct RunSummary {
  std::string name;
  std::string optimizer;
  std::string problem;
  std::uint64_t seed = 0;
  std::uint64_t steps_requested = 0;
  std::uint64_t steps_completed = 0;
  double final_loss = 0.0;
  double best_loss = 0.0;
  double min_grad_norm = 0.0;
  double threshold = 0.0;
  std::optional<std::uint64_t> steps_to_threshold;
  std::uint64_t grad_evals = 0;
  double wall_time_s = 0.0;
  bool diverged = false;
  std::string error;
};

struct RunLog {
  std::vector<RunRow> rows;
  RunSummary summary;
  bool tracking_recorded = true;
  nlohmann::json config;  // the resolved config, stored in summary.json
};

/// Quadratic eigenvalues log-spaced over [eig_min, eig_max].
Vector log_spaced_spectrum(std::size_t d, double lo, double hi);

/// The oracle for `spec`, seeded from the run seed.
std::unique_ptr<GradientOracle> build_problem(const ProblemSpec& spec, std::uint64_t seed);

/// Runs cfg.steps iterations. Divergence (non-finite loss, ‖x‖ > 1e12 or a
/// non-finite update) truncates the log and is reported in the summary;
/// this function does not throw for it. When cfg.out is set, writes
/// run.csv and summary.json there.
RunLog run_experiment(const RunConfig& cfg);

/// First step whose grad_norm is ≤ threshold.
std::optional<std::uint64_t> steps_to_threshold(const std::vector<RunRow>& rows, double threshold);

/// Fixed header step,loss,grad_norm,tracking_err,lr,gamma,clipped; values in
/// round-trip precision.
void write_csv(const RunLog& log, std::ostream& out);
nlohmann::json summary_to_json(const RunLog& log);
void write_run(const RunLog& log, const std::filesystem::path& dir);

/// Reads a directory produced by write_run.
RunLog read_run(const std::filesystem::path& dir);
std::vector<RunRow> read_csv(std::istream& in);

}  // namespace mars
