#pragma once

// Small dense SVD and polar factors for matrix-shaped momenta.

#include <stdexcept>
#include <string>

#include "mars/numkit.hpp"

namespace mars {

/// Thin SVD M = U·diag(sigma)·Vᵀ with k = min(m, n); sigma non-increasing.
struct SpectralResult {
  Matrix u;      // m×k, orthonormal columns
  Vector sigma;  // k
  Matrix v;      // n×k, orthonormal columns
};

struct OrthogonalizeReport {
  Matrix o;
  int iterations = 0;
  double residual = 0.0;  // ‖OᵀO − I‖_F on the smaller side
  bool converged = false;
};

enum class PolarMethod { svd, newton_schulz };

/// Iterative routine failed to reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

struct JacobiOptions {
  int max_sweeps = 100;
  double off_diagonal_tol = 1e-14;  // relative to ‖M‖_F
};

/// One-sided (Hestenes) Jacobi SVD. Rank-deficient inputs get U completed to
/// an orthonormal basis. Throws ConvergenceError("svd did not converge").
SpectralResult svd(const Matrix& m, JacobiOptions options = {});

/// Cubic Newton–Schulz on X₀ = M/(‖M‖_F + δ): X ← 1.5X − 0.5·X·Xᵀ·X, run on
/// the transpose when M is tall. An input that already meets `tol` is returned
/// unchanged with zero iterations. Never throws on non-convergence; check
/// `converged`.
OrthogonalizeReport newton_schulz_orthogonalize(const Matrix& m, double tol = 1e-7,
                                                int max_iter = 30, double guard = 1e-12);

/// Orthogonal polar factor U·Vᵀ of M. Throws std::domain_error on a zero
/// matrix and ConvergenceError when Newton–Schulz misses `tol`.
Matrix polar_factor(const Matrix& m, PolarMethod method = PolarMethod::svd, double tol = 1e-7,
                    int max_iter = 30);

/// Reassemble U·diag(sigma)·Vᵀ.
Matrix reconstruct(const SpectralResult& s);

}  // namespace mars
