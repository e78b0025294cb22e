#pragma once

// Numerical checks of the algebraic identities, bounds and reductions the
// optimizers are built on. Each check reports its measured residual.

#include <cstdint>
#include <string>
#include <vector>

namespace mars {

struct Check {
  std::string name;
  bool passed = false;
  double residual = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t steps = 1000;       // trajectory length for reductions and identities
  std::size_t streams = 1000;     // random streams for the bound checks
  std::size_t stream_length = 100;
  std::size_t fd_points = 5;      // random points per finite-difference check
  bool corrupt_fold = false;      // negative control: perturb one fold constant
};

std::vector<Check> verify_suite(const VerifyOptions& options = {});

bool all_passed(const std::vector<Check>& checks) noexcept;

}  // namespace mars
