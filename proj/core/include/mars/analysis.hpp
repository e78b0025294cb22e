#pragma once

// Post-hoc statistics over recorded runs.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mars/experiment.hpp"

namespace mars {

struct TrackingStats {
  double mean = 0.0;
  double median = 0.0;
  std::size_t count = 0;
};

/// Mean and median of ‖m_t − ∇F(x_t)‖² over rows with step > burn_in.
/// Throws std::invalid_argument when tracking was not recorded or no row
/// survives the burn-in.
TrackingStats tracking_error_stats(const RunLog& log, std::uint64_t burn_in);

double median(std::vector<double> values);

struct RunEntry {
  std::string label;
  std::string problem;
  std::uint64_t seed = 0;
  double steps_to_threshold = 0.0;  // +inf when never reached
  double final_loss = 0.0;
};

struct LabelStats {
  std::string label;
  std::size_t runs = 0;
  double median_steps = 0.0;
  double min_steps = 0.0;
  double max_steps = 0.0;
  double median_final_loss = 0.0;
  double min_final_loss = 0.0;
  double max_final_loss = 0.0;
};

struct PairComparison {
  std::string a;
  std::string b;
  double steps_ratio = 0.0;       // median steps(a) / median steps(b)
  double final_loss_delta = 0.0;  // median final loss(a) − median final loss(b)
};

struct Report {
  double threshold = 0.0;
  std::vector<RunEntry> runs;
  std::vector<LabelStats> labels;
  std::vector<PairComparison> pairs;

  nlohmann::json to_json() const;
};

/// Ratio of step counts with the conventions 0/0 = 1, x/∞ = 0, ∞/x = ∞ and
/// ∞/∞ = 1.
double steps_ratio(double a, double b);

/// Groups logs by label. Every label must cover the same (problem, seed)
/// set, otherwise std::invalid_argument("mismatched run grids"). Needs at
/// least two logs.
Report compare_runs(const std::vector<RunLog>& logs, double threshold);

}  // namespace mars
