#pragma once

// Batches of independent runs: seed sweeps and γ scans.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mars/config.hpp"
#include "mars/experiment.hpp"

namespace mars {

/// Runs every config on up to `jobs` worker threads (0 = hardware
/// concurrency). Results keep the input order.
std::vector<RunLog> run_parallel(const std::vector<RunConfig>& configs, unsigned jobs = 0);

/// "a..b" (inclusive) or a single seed. Throws ConfigError.
std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text);
/// Comma-separated numbers. Throws ConfigError.
std::vector<double> parse_value_list(const std::string& text);

/// One config per seed in [first, last]; outputs go to <out>/seed_<n>.
std::vector<RunConfig> seed_sweep(const RunConfig& base, std::uint64_t first, std::uint64_t last);

struct GammaScanRow {
  double gamma = 0.0;
  RunSummary summary;
  double mean_tracking_err = 0.0;
};

/// One run per constant γ; outputs go to <out>/gamma_<value>. Throws
/// ConfigError when the optimizer has no correction term.
std::vector<GammaScanRow> gamma_scan(const RunConfig& base, std::span<const double> values, unsigned jobs = 0);

void write_gamma_scan_csv(const std::vector<GammaScanRow>& rows, std::ostream& out);

}  // namespace mars
