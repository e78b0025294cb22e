#pragma once

// Variance-reduced preconditioned optimizers and the baselines they
// generalise.
//
// Every MARS variant shares the same momentum core:
//
//   c_t = g_t + γ_t·β1/(1−β1)·(g_t − g_ref)       scaled gradient correction
//   c̃_t = clip(c_t)                               optional global norm clip
//   m_t = β1·m_{t−1} + (1−β1)·c̃_t
//
// and differs only in the preconditioner applied to m_t: identity (plain
// MARS), diagonal √v̂ (MARS-AdamW), sign (MARS-Lion) or the polar factor of
// each matrix block (MARS-Shampoo). In exact mode g_ref = ∇f(x_{t−1}, ξ_t)
// and the caller evaluates it on the current batch. In approx mode g_ref is
// the stored ∇f(x_{t−1}, ξ_{t−1}).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mars/numkit.hpp"
#include "mars/problems.hpp"
#include "mars/spectral.hpp"

namespace mars {

enum class OptimizerKind { sgd, adamw, lion, muon, storm, mars, mars_adamw, mars_lion, mars_shampoo };

enum class CorrectionMode { exact, approx };

/// What approx mode uses for g_ref at the first step, before any previous
/// gradient exists.
enum class ApproxInit {
  current,        // g_ref = g_1: the first correction is zero
  zero,           // g_ref = 0: matches two-buffer methods started from zero buffers
  initial_batch,  // g_ref = ∇f(x_0, ξ_0), one extra oracle call
};

enum class ClipScope { global, per_block };

using BlockPredicate = std::function<bool(const ParamBlock&)>;

/// Default weight-decay exclusion: bias blocks.
bool is_bias_block(const ParamBlock& block);

struct Hyperparams {
  double beta1 = 0.95;
  double beta2 = 0.99;
  double weight_decay = 0.0;
  double eps = 1e-8;
  std::optional<double> clip_threshold = 1.0;  // nullopt disables clipping
  ClipScope clip_scope = ClipScope::global;
  CorrectionMode correction = CorrectionMode::exact;
  ApproxInit approx_init = ApproxInit::current;
  bool bias_correction = true;
  PolarMethod polar = PolarMethod::svd;
  double ns_tol = 1e-7;
  int ns_max_iter = 30;
  BlockPredicate decay_excluded = is_bias_block;

  /// Throws std::invalid_argument for out-of-range values.
  void validate() const;
};

struct OptimizerState {
  Vector x;
  Vector m;
  Vector v;
  Vector u;
  Vector prev_x;
  Vector prev_g;
  bool has_prev_g = false;
  std::uint64_t t = 0;  // completed steps; the next update is step t + 1

  /// m_0 = v_0 = u_0 = 0 and x_1 = x_0.
  static OptimizerState start(Vector x0);
};

struct StepReport {
  std::uint64_t t = 0;
  Vector c;          // pre-clip estimator (raw gradient for baselines)
  Vector c_tilde;    // post-clip
  Vector direction;  // preconditioned direction, before the weight-decay term
  double lr = 0.0;
  double gamma = 0.0;
  double c_norm = 0.0;
  bool clipped = false;
  int ns_iterations = 0;
  double ns_residual = 0.0;
};

struct ClipResult {
  Vector value;
  double norm = 0.0;
  bool clipped = false;
};

/// g + γ·β1/(1−β1)·(g − g_ref). Throws std::domain_error("infinite
/// correction scale") when β1 = 1.
Vector correction_gradient(std::span<const double> g, std::span<const double> g_ref, double gamma,
                           double beta1);

/// Scale c to norm `threshold` when ‖c‖₂ > threshold; otherwise return c.
/// nullopt passes everything through. The output norm never exceeds the
/// threshold, rounding included.
ClipResult clip_by_norm(std::span<const double> c, std::optional<double> threshold);
Vector clip_unit_norm(std::span<const double> c, std::optional<double> threshold);

/// Clip globally or block by block according to hp.clip_scope.
ClipResult clip_for(std::span<const double> c, const ParamLayout& layout, const Hyperparams& hp);

/// sign with sign(0) = 0.
double sign_of(double x) noexcept;

/// v ← β2·v + (1−β2)·c², the second-moment recursion of the Adam family.
void second_moment_update(std::span<double> v, std::span<const double> c, double beta2);

// ---------------------------------------------------------------------------
// Single steps. Each advances state.t, records prev_x/prev_g and throws
// NumericError (carrying the coordinate) instead of committing a non-finite
// update.

/// Identity preconditioner: x ← x − η(m + λx).
StepReport mars_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                     const Vector& g_ref, const Hyperparams& hp, double lr, double gamma);

StepReport mars_adamw_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                           const Vector& g_ref, const Hyperparams& hp, double lr, double gamma);

StepReport mars_lion_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                          const Vector& g_ref, const Hyperparams& hp, double lr, double gamma);

/// Polar-factor direction on matrix blocks; vector blocks take the
/// MARS-AdamW update. A zero momentum block only receives weight decay.
StepReport mars_shampoo_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                             const Vector& g_ref, const Hyperparams& hp, double lr, double gamma);

StepReport adamw_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                      const Hyperparams& hp, double lr);

/// Two-buffer Lion: m = β1·u + (1−β1)·g, u ← β2·u + (1−β2)·g, x ← x − η(sign(m) + λx).
StepReport lion_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                     const Hyperparams& hp, double lr);

StepReport sgd_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                    const Hyperparams& hp, double lr);

/// u = μu + g, m = μu + g, O = NewtonSchulz(m) (or the SVD polar factor when
/// hp.polar is svd), x ← x − η(O + λx), μ = β1. Vector blocks take AdamW.
/// Newton–Schulz output is used even when it misses its tolerance; the
/// residual is reported.
StepReport muon_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                     const Hyperparams& hp, double lr);

/// m = β1·m + (1−β1)·g + β1·(g − g_ref), x ← x − η(m + λx).
StepReport storm_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                      const Vector& g_ref, const Hyperparams& hp, double lr);

/// g_ref for approx mode: the stored previous gradient, or the ApproxInit
/// fallback at the first step.
Vector approx_reference(const OptimizerState& s, const Vector& g, ApproxInit init);

// ---------------------------------------------------------------------------
// Momentum folding.

/// Which buffer value the momentum reads.
enum class FoldOrdering {
  read_then_update,  // m_t = b1·u_t + b2·g_t, then u_{t+1} = a1·u_t + a2·g_t
  update_then_read,  // u_t = a1·u_{t−1} + a2·g_t, then m_t = b1·u_t + b2·g_t
};

struct FoldConstants {
  double a1 = 0.0;
  double a2 = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
};

/// Literal two-buffer recursion from u = 0.
std::vector<Vector> two_buffer_momentum(const FoldConstants& k, std::span<const Vector> g,
                                        FoldOrdering ordering);

/// Single recursion m_t = a1·m_{t−1} + (b1a2 − a1b2 + b2)·g_t + K·(g_t − g_{t−1})
/// with K = a1b2 − b1a2 (read_then_update) or K = a1b2 (update_then_read),
/// starting from m_{−1} = 0, g_{−1} = 0.
std::vector<Vector> fold_two_buffer(const FoldConstants& k, std::span<const Vector> g,
                                    FoldOrdering ordering);

/// Adan's momentum y + β2·z with y, z EMAs of g_t and g_t − g_{t−1}; the
/// first difference is taken as zero.
std::vector<Vector> adan_momentum(double beta1, double beta2, std::span<const Vector> g);

// ---------------------------------------------------------------------------

std::string_view to_string(OptimizerKind kind) noexcept;
std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name) noexcept;
std::string_view to_string(CorrectionMode mode) noexcept;

/// True for kinds that consume a reference gradient (MARS family and STORM).
bool uses_correction(OptimizerKind kind) noexcept;

/// Per-kind defaults: MARS family (0.95, 0.99) with clip 1; AdamW/Lion clip
/// raw gradients at 1; MARS-Shampoo, Muon, STORM and SGD unclipped; Muon
/// uses Newton–Schulz.
Hyperparams default_hyperparams(OptimizerKind kind);

/// Owns the state of one run and dispatches to the step function for its kind.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, Hyperparams hp, ParamLayout layout, Vector x0);

  OptimizerKind kind() const noexcept { return kind_; }
  const Hyperparams& hyperparams() const noexcept { return hp_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  const OptimizerState& state() const noexcept { return state_; }

  /// The caller must evaluate ∇f(prev_x, ξ_t) on the current batch and pass
  /// it to step().
  bool needs_exact_reference() const noexcept;
  /// The caller must evaluate ∇f(x_0, ξ_0) and hand it to prime_reference()
  /// before the first step.
  bool needs_initial_reference() const noexcept;
  void prime_reference(Vector g0);

  /// One update. `exact_ref` is required iff needs_exact_reference().
  StepReport step(const Vector& g, const Vector* exact_ref, double lr, double gamma);

 private:
  OptimizerKind kind_;
  Hyperparams hp_;
  ParamLayout layout_;
  OptimizerState state_;
};

}  // namespace mars
