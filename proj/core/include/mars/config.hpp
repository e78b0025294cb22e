#pragma once

// Run configuration: one document with [problem], [optimizer], [schedule]
// and [run] sections, read from JSON or from a TOML subset.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mars/optimizers.hpp"
#include "mars/schedules.hpp"

namespace mars {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProblemSpec {
  std::string kind = "quadratic";  // quadratic | logistic | rosenbrock | mlp
  std::size_t dim = 10;
  double sigma = 1.0;
  std::size_t batch_size = 1;
  // quadratic: eigenvalues log-spaced over [eig_min, eig_max]
  double eig_min = 0.1;
  double eig_max = 1.0;
  bool rotate = true;
  std::optional<std::size_t> matrix_rows;
  // logistic / mlp
  std::size_t samples = 256;
  double l2 = 1e-3;
  std::vector<std::size_t> layers = {4, 16, 3};
};

struct RunConfig {
  ProblemSpec problem;
  OptimizerKind optimizer = OptimizerKind::mars_adamw;
  Hyperparams hp = default_hyperparams(OptimizerKind::mars_adamw);
  LrSchedule lr;
  GammaSchedule gamma;
  std::uint64_t steps = 1000;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out;
  bool record_tracking_error = true;
  double threshold = 1e-2;
  std::string name;  // label used by compare; defaults to the optimizer name

  std::string label() const;
  /// Re-derive dependent fields (lr.total_steps) after overrides.
  void finalize();
};

/// Throws ConfigError with the offending key on unknown keys, bad types or
/// out-of-range values.
RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& cfg);

/// TOML subset to JSON: [section] headers, `key = value` with strings,
/// numbers, booleans and flat arrays, `#` comments.
nlohmann::json parse_toml_subset(const std::string& text);

/// Dispatches on the extension (.json, .toml).
RunConfig load_config(const std::filesystem::path& path);

}  // namespace mars
