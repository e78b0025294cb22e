#include "mars/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mars {

void LrSchedule::validate() const {
  if (!(max_lr > 0.0) || min_lr < 0.0 || min_lr > max_lr)
    throw std::invalid_argument("lr schedule: need 0 <= min_lr <= max_lr and max_lr > 0");
  if (kind == LrKind::theory) {
    if (theory_offset < 1.0) throw std::invalid_argument("lr schedule: theory offset s must be >= 1");
    return;
  }
  if (total_steps == 0) throw std::invalid_argument("lr schedule: total_steps must be positive");
  if (kind != LrKind::constant && warmup_steps >= total_steps)
    throw std::invalid_argument("lr schedule: warmup_steps must be < total_steps");
  if (kind == LrKind::wsd) {
    const auto start = wsd_decay_start();
    if (start < warmup_steps || start > total_steps)
      throw std::invalid_argument("lr schedule: decay_start must lie in [warmup, total]");
  }
}

std::uint64_t LrSchedule::wsd_decay_start() const noexcept {
  if (decay_start) return *decay_start;
  const auto decay_len = static_cast<std::uint64_t>(std::ceil(0.1 * static_cast<double>(total_steps)));
  return std::max(warmup_steps, total_steps - std::min(decay_len, total_steps));
}

double lr_at(const LrSchedule& s, std::uint64_t t) {
  if (s.kind == LrKind::theory) return theory_eta(s.theory_offset, t);
  if (s.kind == LrKind::constant) return s.max_lr;
  if (t < s.warmup_steps)
    return s.max_lr * static_cast<double>(t) / static_cast<double>(s.warmup_steps);
  if (t >= s.total_steps) return s.min_lr;

  if (s.kind == LrKind::cosine_warmup) {
    const double progress = static_cast<double>(t - s.warmup_steps) /
                            static_cast<double>(s.total_steps - s.warmup_steps);
    return s.min_lr + 0.5 * (s.max_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
  }

  const std::uint64_t start = s.wsd_decay_start();
  if (t < start) return s.max_lr;
  const double frac = static_cast<double>(t - start) / static_cast<double>(s.total_steps - start);
  return s.max_lr + (s.min_lr - s.max_lr) * frac;
}

double gamma_at(const GammaSchedule& g, std::uint64_t t, const GammaContext& ctx) {
  double value = g.value;
  switch (g.kind) {
    case GammaKind::constant:
      break;
    case GammaKind::linear: {
      const double total = static_cast<double>(std::max<std::uint64_t>(ctx.total_steps, 1));
      const double frac = std::min(1.0, static_cast<double>(t) / total);
      value = g.start + (g.end - g.start) * frac;
      break;
    }
    case GammaKind::optimal_estimate: {
      auto window = ctx.samples;
      if (window.size() > g.window) window = window.subspan(window.size() - g.window);
      if (window.size() >= 2) {
        try {
          value = estimate_optimal_gamma(window);
        } catch (const std::domain_error&) {
          // E‖Y‖² = 0: the correction carries no signal, keep the fallback.
        }
      }
      break;
    }
  }
  return std::clamp(value, 0.0, 1.0);
}

std::vector<std::string> TheoryParams::violations() const {
  std::vector<std::string> out;
  const double ratio = smoothness / precond_floor;
  if (momentum_constant < 32.0 * ratio * ratio + 1.0) out.emplace_back("c < 32 L^2 / rho^2 + 1");
  if (offset < 8.0 * ratio * ratio * ratio) out.emplace_back("s < 8 L^3 / rho^3");
  if (weight_decay > 0.0 && offset < 64.0 * weight_decay * weight_decay * weight_decay)
    out.emplace_back("s < 64 lambda^3");
  if (offset < 1.0) out.emplace_back("s < 1");
  return out;
}

double theory_eta(double offset, std::uint64_t t) {
  return 1.0 / std::cbrt(offset + static_cast<double>(t));
}

std::pair<double, double> theory_betas(const TheoryParams& p, std::uint64_t t) {
  const double eta = theory_eta(p.offset, t);
  const double eta2 = eta * eta;
  const double decay = p.momentum_constant * eta2;
  if (decay >= 1.0) throw std::domain_error("offset s too small for c");
  const double eta6 = eta2 * eta2 * eta2;
  const double beta1 = std::clamp(1.0 - decay, 0.0, std::nextafter(1.0, 0.0));
  const double beta2 = std::clamp(1.0 - eta6, 0.0, std::nextafter(1.0, 0.0));
  return {beta1, beta2};
}

std::uint64_t eta_difference_violations(double offset, std::uint64_t steps) {
  std::uint64_t bad = 0;
  double prev_inv = std::cbrt(offset);
  for (std::uint64_t t = 1; t <= steps; ++t) {
    const double inv = std::cbrt(offset + static_cast<double>(t));
    const double eta = 1.0 / inv;
    if (inv - prev_inv > eta) ++bad;
    prev_inv = inv;
  }
  return bad;
}

}  // namespace mars
