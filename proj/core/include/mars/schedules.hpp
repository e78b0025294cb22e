#pragma once

// Learning-rate, correction-scale and momentum schedules.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mars/control_variates.hpp"

namespace mars {

enum class LrKind { constant, cosine_warmup, wsd, theory };

struct LrSchedule {
  LrKind kind = LrKind::constant;
  double max_lr = 1e-3;
  double min_lr = 0.0;
  std::uint64_t warmup_steps = 0;
  std::uint64_t total_steps = 1;
  /// First step of the WSD decay stage; unset means the last 10% of steps.
  std::optional<std::uint64_t> decay_start;
  /// Offset s of the theory schedule η_t = (s + t)^(-1/3).
  double theory_offset = 1.0;

  /// Throws std::invalid_argument when the schedule is malformed.
  void validate() const;
  std::uint64_t wsd_decay_start() const noexcept;
};

/// η_t. Linear warmup from 0 to max_lr over warmup_steps, then:
/// cosine: min + ½(max − min)(1 + cos(π·progress)), progress = (t − warmup)/(total − warmup);
/// wsd: hold max until decay_start, then linear down to min_lr at total_steps;
/// theory: (s + t)^(-1/3), no warmup. Steps past total_steps return min_lr.
double lr_at(const LrSchedule& sched, std::uint64_t t);

enum class GammaKind { constant, linear, optimal_estimate };

struct GammaSchedule {
  GammaKind kind = GammaKind::constant;
  double value = 0.025;  // constant value; fallback for optimal_estimate
  double start = 0.0;
  double end = 1.0;
  std::size_t window = 32;  // trailing samples for optimal_estimate
};

struct GammaContext {
  std::uint64_t total_steps = 1;
  /// Trailing (U, Y) samples, oldest first.
  std::span<const GammaSample> samples;
};

/// γ_t in [0, 1].
double gamma_at(const GammaSchedule& sched, std::uint64_t t, const GammaContext& ctx = {});

struct TheoryParams {
  double smoothness = 1.0;        // L
  double precond_floor = 1.0;     // ρ
  double noise = 1.0;             // σ
  double momentum_constant = 33;  // c
  double offset = 8.0;            // s
  double weight_decay = 0.0;      // λ

  /// Human-readable descriptions of every violated requirement
  /// (c ≥ 32L²/ρ² + 1, s ≥ 8L³/ρ³, s ≥ 64λ³ when λ > 0, s ≥ 1). Empty when valid.
  std::vector<std::string> violations() const;
};

/// η_t = (s + t)^(-1/3).
double theory_eta(double offset, std::uint64_t t);

/// (β1, β2) = (1 − c·η_t², 1 − η_t⁶). Throws std::domain_error
/// ("offset s too small for c") when c·η_t² ≥ 1.
std::pair<double, double> theory_betas(const TheoryParams& p, std::uint64_t t);

/// Number of t in [1, steps] violating 1/η_t − 1/η_{t−1} ≤ η_t.
std::uint64_t eta_difference_violations(double offset, std::uint64_t steps);

}  // namespace mars
