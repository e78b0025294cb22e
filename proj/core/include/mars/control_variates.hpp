#pragma once

// Control-variate estimate of the correction scale γ.
//
// With X = (1−β)∇f(x_{t+1}, ξ_{t+1}), Y = β(∇f(x_{t+1}, ξ_{t+1}) − ∇f(x_t, ξ_{t+1}))
// and Z_t = m_t − ∇F(x_t), set U = X − E[X] + Z_t. The squared error of
// U + (γY − E[Y]) is minimised at
//
//   γ* = 1 − (E⟨U, Y⟩ + Var(Y)) / E‖Y‖²
//
// Vector quantities are handled with inner products, and Var(Y) is the trace
// of the covariance, i.e. E‖Y − E[Y]‖². Expectations are empirical means
// over the sample window.

#include <span>

#include "mars/numkit.hpp"

namespace mars {

struct GammaSample {
  Vector u;
  Vector y;
};

/// Unclamped γ*. Needs at least two samples; throws std::domain_error
/// ("degenerate correction variable") when the empirical E‖Y‖² is zero.
double estimate_optimal_gamma(std::span<const GammaSample> samples);

}  // namespace mars
