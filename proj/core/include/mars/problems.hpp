#pragma once

// Synthetic objectives with both a stochastic gradient ∇f(x, ξ) and the exact
// full gradient ∇F(x), so the momentum tracking error ‖m_t − ∇F(x_t)‖² can be
// measured directly.
//
// Oracles never sample internally during a gradient call: a Batch is drawn
// once per step and can be replayed at any parameter vector. That is what the
// exact correction needs, since it evaluates ∇f(x_t, ξ_t) and ∇f(x_{t−1}, ξ_t).

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mars/numkit.hpp"
#include "mars/rng.hpp"

namespace mars {

/// A contiguous slice of the flat parameter vector. Matrix blocks are stored
/// row-major.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;
  bool is_matrix = false;
  bool is_bias = false;

  std::size_t size() const noexcept { return rows * cols; }
};

class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<ParamBlock> blocks);

  /// A single vector block of length d.
  static ParamLayout flat(std::size_t d);
  /// A single rows×cols matrix block.
  static ParamLayout matrix(std::size_t rows, std::size_t cols);

  std::size_t total_size() const noexcept { return total_; }
  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  bool has_matrix_blocks() const noexcept;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

/// The randomness ξ_t of one step: a Gaussian noise draw (noise-model
/// oracles) or a sorted index subset (finite-sum oracles).
struct Batch {
  std::uint64_t step = 0;
  Vector noise;
  std::vector<std::size_t> indices;
};

class GradientOracle {
 public:
  virtual ~GradientOracle() = default;

  virtual std::string kind() const = 0;
  std::size_t dimension() const noexcept { return layout_.total_size(); }
  const ParamLayout& layout() const noexcept { return layout_; }

  /// ξ for step t. A pure function of (oracle seed, t).
  virtual Batch sample_batch(std::uint64_t step) const = 0;
  /// ∇f(x, ξ). Side-effect free; the same (x, batch) always returns the same vector.
  virtual Vector stochastic_grad(const Vector& x, const Batch& batch) const = 0;
  /// ∇F(x).
  virtual Vector full_grad(const Vector& x) const = 0;
  /// F(x).
  virtual double loss(const Vector& x) const = 0;
  /// Seeded starting point x_0.
  virtual Vector initial_point() const = 0;
  /// Smoothness constant L when it is known in closed form.
  virtual std::optional<double> smoothness() const { return std::nullopt; }

 protected:
  ParamLayout layout_;
};

struct QuadraticOptions {
  Vector spectrum;            // eigenvalues of A; all > 0
  double sigma = 1.0;         // noise scale
  std::uint64_t seed = 0;
  bool rotate = true;         // conjugate diag(spectrum) by a seeded random rotation
  std::size_t batch_size = 1; // ξ is the mean of this many standard normal draws
  double center_scale = 1.0;  // μ ~ center_scale · N(0, I)
  double init_scale = 1.0;    // x_0 = μ + init_scale · N(0, I)/√d
  std::optional<std::size_t> matrix_rows;  // expose x as one rows×(d/rows) matrix block
  /// Explicit center; overrides the seeded draw when set.
  std::optional<Vector> center;
};

/// f(x, ξ) = ½(x − μ − σξ)ᵀA(x − μ − σξ), ∇f = A(x − μ − σξ), ∇F = A(x − μ).
class NoisyQuadratic final : public GradientOracle {
 public:
  explicit NoisyQuadratic(QuadraticOptions options);

  std::string kind() const override { return "quadratic"; }
  Batch sample_batch(std::uint64_t step) const override;
  Vector stochastic_grad(const Vector& x, const Batch& batch) const override;
  Vector full_grad(const Vector& x) const override;
  double loss(const Vector& x) const override;
  Vector initial_point() const override;
  std::optional<double> smoothness() const override;

  const Matrix& hessian() const noexcept { return a_; }
  const Vector& center() const noexcept { return mu_; }
  double sigma() const noexcept { return options_.sigma; }

 private:
  QuadraticOptions options_;
  Matrix a_;
  Vector mu_;
  RngStream noise_;
  Vector x0_;
};

struct LogisticOptions {
  std::size_t samples = 512;
  std::size_t dim = 10;
  std::size_t batch_size = 16;
  double l2 = 1e-3;
  std::uint64_t seed = 0;
};

/// Mean logistic loss over a planted-weight dataset plus ½·l2·‖x‖².
class Logistic final : public GradientOracle {
 public:
  explicit Logistic(LogisticOptions options);
  /// Explicit dataset; labels in {0, 1}.
  Logistic(std::vector<Vector> features, std::vector<int> labels, std::size_t batch_size,
           double l2, std::uint64_t seed);

  std::string kind() const override { return "logistic"; }
  Batch sample_batch(std::uint64_t step) const override;
  Vector stochastic_grad(const Vector& x, const Batch& batch) const override;
  Vector full_grad(const Vector& x) const override;
  double loss(const Vector& x) const override;
  Vector initial_point() const override;

  std::size_t samples() const noexcept { return labels_.size(); }

 private:
  Vector grad_over(const Vector& x, const std::vector<std::size_t>& idx) const;

  std::vector<Vector> features_;
  std::vector<int> labels_;
  std::size_t batch_size_;
  double l2_;
  RngStream rng_;
};

struct RosenbrockOptions {
  std::size_t dim = 2;
  double sigma = 0.1;
  std::uint64_t seed = 0;
};

/// Σ 100(x_{i+1} − x_i²)² + (1 − x_i)² with additive gradient noise σξ.
class NoisyRosenbrock final : public GradientOracle {
 public:
  explicit NoisyRosenbrock(RosenbrockOptions options);

  std::string kind() const override { return "rosenbrock"; }
  Batch sample_batch(std::uint64_t step) const override;
  Vector stochastic_grad(const Vector& x, const Batch& batch) const override;
  Vector full_grad(const Vector& x) const override;
  double loss(const Vector& x) const override;
  Vector initial_point() const override;

 private:
  RosenbrockOptions options_;
  RngStream noise_;
};

struct MlpOptions {
  std::vector<std::size_t> layers = {4, 16, 3};  // input, hidden..., classes
  std::size_t samples = 256;
  std::size_t batch_size = 32;
  double cluster_spread = 1.0;
  double init_scale = 1.0;  // weights ~ init_scale·N(0, 1/fan_in)
  std::uint64_t seed = 0;
};

/// tanh MLP with softmax cross-entropy on a seeded Gaussian-cluster dataset.
/// Each layer contributes a `W<l>` matrix block (out×in) followed by a `b<l>`
/// bias block.
class Mlp final : public GradientOracle {
 public:
  explicit Mlp(MlpOptions options);
  /// Explicit dataset; labels in [0, classes).
  Mlp(std::vector<std::size_t> layers, std::vector<Vector> inputs, std::vector<int> labels,
      std::size_t batch_size, std::uint64_t seed);

  std::string kind() const override { return "mlp"; }
  Batch sample_batch(std::uint64_t step) const override;
  Vector stochastic_grad(const Vector& x, const Batch& batch) const override;
  Vector full_grad(const Vector& x) const override;
  double loss(const Vector& x) const override;
  Vector initial_point() const override;

  /// Mean loss and gradient over `idx` (backpropagation).
  double loss_and_grad(const Vector& x, const std::vector<std::size_t>& idx, Vector* grad) const;

 private:
  void build_layout();

  std::vector<std::size_t> layers_;
  std::vector<Vector> inputs_;
  std::vector<int> labels_;
  std::size_t batch_size_;
  double init_scale_ = 1.0;
  RngStream rng_;
};

/// Sorted batch of `batch_size` distinct indices out of `n` (partial
/// Fisher–Yates on the given stream).
std::vector<std::size_t> sample_indices(RngStream& rng, std::size_t n, std::size_t batch_size);

std::unique_ptr<GradientOracle> make_noisy_quadratic(std::size_t d, const Vector& spectrum,
                                                     double sigma, std::uint64_t seed);
std::unique_ptr<GradientOracle> make_noisy_quadratic(QuadraticOptions options);
std::unique_ptr<GradientOracle> make_logistic(std::size_t samples, std::size_t d,
                                              std::size_t batch_size, std::uint64_t seed);
std::unique_ptr<GradientOracle> make_noisy_rosenbrock(std::size_t d, double sigma,
                                                      std::uint64_t seed);
std::unique_ptr<GradientOracle> make_mlp(const std::vector<std::size_t>& layers,
                                         std::size_t samples, std::size_t batch_size,
                                         std::uint64_t seed);

/// Central differences of the oracle's full loss, coordinate by coordinate.
Vector finite_diff_grad(const GradientOracle& oracle, const Vector& x, double h);

/// ‖a − b‖ / max(‖b‖, tiny).
double relative_error(const Vector& a, const Vector& b);

/// Haar-distributed d×d orthogonal matrix (Gram–Schmidt on a Gaussian matrix).
Matrix random_orthogonal(RngStream& rng, std::size_t d);

}  // namespace mars
