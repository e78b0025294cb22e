#include "mars/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mars {

namespace {

// Column-major working copy; Jacobi touches whole columns.
struct Columns {
  std::size_t rows;
  std::size_t cols;
  std::vector<double> data;

  double* col(std::size_t j) { return data.data() + j * rows; }
  const double* col(std::size_t j) const { return data.data() + j * rows; }
};

Columns to_columns(const Matrix& m) {
  Columns c{m.rows(), m.cols(), std::vector<double>(m.size())};
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) c.col(j)[i] = m(i, j);
  return c;
}

double col_dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Fill the flagged columns of u (m×k, row-major) with an orthonormal
// completion of the remaining ones.
void complete_basis(Matrix& u, const std::vector<bool>& missing) {
  const std::size_t m = u.rows();
  const std::size_t k = u.cols();
  std::vector<std::size_t> have;
  for (std::size_t j = 0; j < k; ++j)
    if (!missing[j]) have.push_back(j);
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (!missing[j]) continue;
    while (candidate < m) {
      Vector e(m);
      e[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t h : have) {
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += u(i, h) * e[i];
          for (std::size_t i = 0; i < m; ++i) e[i] -= proj * u(i, h);
        }
      }
      const double norm = l2_norm(e);
      if (norm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) u(i, j) = e[i] / norm;
        have.push_back(j);
        break;
      }
    }
  }
}

SpectralResult svd_tall(const Matrix& m, const JacobiOptions& options) {
  const std::size_t rows = m.rows();
  const std::size_t n = m.cols();
  Columns a = to_columns(m);
  Columns v{n, n, std::vector<double>(n * n, 0.0)};
  for (std::size_t j = 0; j < n; ++j) v.col(j)[j] = 1.0;

  const double fro = frobenius_norm(m);
  const double floor = (options.off_diagonal_tol * fro) * (options.off_diagonal_tol * fro);
  // Dot products carry O(rows·eps) relative rounding; asking for less never terminates.
  const double relative = std::max(1e-15, static_cast<double>(rows) * 2.220446049250313e-16);

  bool converged = fro == 0.0;
  for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* ap = a.col(p);
        double* aq = a.col(q);
        const double alpha = col_dot(ap, ap, rows);
        const double beta = col_dot(aq, aq, rows);
        const double gamma = col_dot(ap, aq, rows);
        if (std::abs(gamma) <= floor ||
            std::abs(gamma) <= relative * std::sqrt(alpha * beta))
          continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double x = ap[i];
          const double y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
        double* vp = v.col(p);
        double* vq = v.col(q);
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) throw ConvergenceError("svd did not converge", 0.0);

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(col_dot(a.col(j), a.col(j), rows));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SpectralResult out{Matrix(rows, n), Vector(n), Matrix(n, n)};
  const double smax = n > 0 ? norms[order[0]] : 0.0;
  std::vector<bool> missing(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v.col(j)[i];
    if (norms[j] == 0.0 || norms[j] <= 1e-15 * smax) {
      missing[k] = true;
      continue;
    }
    for (std::size_t i = 0; i < rows; ++i) out.u(i, k) = a.col(j)[i] / norms[j];
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) complete_basis(out.u, missing);
  return out;
}

}  // namespace

SpectralResult svd(const Matrix& m, JacobiOptions options) {
  if (m.empty()) throw std::invalid_argument("svd: empty matrix");
  if (!all_finite(m.span())) throw NumericError("svd: non-finite input");
  if (m.rows() >= m.cols()) return svd_tall(m, options);
  SpectralResult t = svd_tall(m.transpose(), options);
  return {std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

Matrix reconstruct(const SpectralResult& s) {
  Matrix us = s.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= s.sigma[k];
  return matmul_nt(us, s.v);
}

OrthogonalizeReport newton_schulz_orthogonalize(const Matrix& m, double tol, int max_iter,
                                                double guard) {
  if (m.empty()) throw std::invalid_argument("newton_schulz: empty matrix");
  const bool tall = m.rows() > m.cols();
  // Work on the wide orientation so the Gram matrix X·Xᵀ is the small one.
  Matrix x = tall ? m.transpose() : m;

  auto gram_residual = [](const Matrix& g) {
    Matrix r = g;
    for (std::size_t i = 0; i < r.rows(); ++i) r(i, i) -= 1.0;
    return frobenius_norm(r);
  };

  OrthogonalizeReport report;
  Matrix g = matmul_nt(x, x);
  report.residual = gram_residual(g);
  if (report.residual > tol) {
    x *= 1.0 / (frobenius_norm(x) + guard);
    g = matmul_nt(x, x);
    report.residual = gram_residual(g);
    while (report.residual > tol && report.iterations < max_iter) {
      // X ← 1.5X − 0.5·(X·Xᵀ)·X
      Matrix gx = matmul(g, x);
      for (std::size_t i = 0; i < x.size(); ++i) x.span()[i] = 1.5 * x.span()[i] - 0.5 * gx.span()[i];
      ++report.iterations;
      g = matmul_nt(x, x);
      report.residual = gram_residual(g);
    }
  }
  report.converged = report.residual <= tol;
  report.o = tall ? x.transpose() : std::move(x);
  return report;
}

Matrix polar_factor(const Matrix& m, PolarMethod method, double tol, int max_iter) {
  if (m.empty() || linf_norm(m.span()) == 0.0)
    throw std::domain_error("polar factor undefined");
  if (method == PolarMethod::svd) {
    const SpectralResult s = svd(m);
    return matmul_nt(s.u, s.v);
  }
  OrthogonalizeReport r = newton_schulz_orthogonalize(m, tol, max_iter);
  if (!r.converged)
    throw ConvergenceError("newton-schulz did not converge (residual " +
                               std::to_string(r.residual) + ")",
                           r.residual);
  return std::move(r.o);
}

}  // namespace mars
