#include "mars/optimizers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace mars {

bool is_bias_block(const ParamBlock& block) { return block.is_bias; }

void Hyperparams::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (clip_threshold && !(*clip_threshold > 0.0))
    throw std::invalid_argument("clip threshold must be positive or off");
  if (!(ns_tol > 0.0) || ns_max_iter < 0) throw std::invalid_argument("bad Newton-Schulz settings");
}

OptimizerState OptimizerState::start(Vector x0) {
  OptimizerState s;
  const std::size_t d = x0.size();
  s.m = Vector(d);
  s.v = Vector(d);
  s.u = Vector(d);
  s.prev_g = Vector(d);
  s.prev_x = x0;
  s.x = std::move(x0);
  return s;
}

Vector correction_gradient(std::span<const double> g, std::span<const double> g_ref, double gamma,
                           double beta1) {
  if (beta1 >= 1.0) throw std::domain_error("infinite correction scale");
  if (g.size() != g_ref.size()) throw std::invalid_argument("correction_gradient: size mismatch");
  const double scale = gamma * beta1 / (1.0 - beta1);
  Vector c(g);
  if (scale == 0.0) return c;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += scale * (g[i] - g_ref[i]);
  return c;
}

ClipResult clip_by_norm(std::span<const double> c, std::optional<double> threshold) {
  ClipResult r{Vector(c), 0.0, false};
  if (c.empty()) return r;
  r.norm = l2_norm(c);
  if (!threshold || r.norm <= *threshold) return r;

  double scale = *threshold / r.norm;
  for (int attempt = 0; attempt < 8; ++attempt) {
    for (std::size_t i = 0; i < c.size(); ++i) r.value[i] = c[i] * scale;
    if (l2_norm(r.value) <= *threshold) break;
    scale = std::nextafter(scale, 0.0);
  }
  r.clipped = true;
  return r;
}

Vector clip_unit_norm(std::span<const double> c, std::optional<double> threshold) {
  return clip_by_norm(c, threshold).value;
}

ClipResult clip_for(std::span<const double> c, const ParamLayout& layout, const Hyperparams& hp) {
  if (hp.clip_scope == ClipScope::global || !hp.clip_threshold) return clip_by_norm(c, hp.clip_threshold);
  ClipResult out{Vector(c), l2_norm(c), false};
  for (const auto& b : layout.blocks()) {
    const auto part = clip_by_norm(c.subspan(b.offset, b.size()), hp.clip_threshold);
    std::copy(part.value.begin(), part.value.end(), out.value.begin() + b.offset);
    out.clipped = out.clipped || part.clipped;
  }
  return out;
}

double sign_of(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void second_moment_update(std::span<double> v, std::span<const double> c, double beta2) {
  if (v.size() != c.size()) throw std::invalid_argument("second_moment_update: size mismatch");
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = beta2 * v[i] + (1.0 - beta2) * c[i] * c[i];
}

namespace {

struct Next {
  Vector x;
  Vector m;
  Vector v;
  Vector u;
};

Next pending(const OptimizerState& s) { return {s.x, s.m, s.v, s.u}; }

void check_sizes(const OptimizerState& s, const ParamLayout& layout, const Vector& g) {
  if (g.size() != s.x.size() || layout.total_size() != s.x.size() || s.m.size() != s.x.size())
    throw std::invalid_argument("optimizer: gradient, state and layout sizes differ");
}

Vector decay_vector(const ParamLayout& layout, const Hyperparams& hp) {
  Vector lam(layout.total_size(), hp.weight_decay);
  if (hp.weight_decay == 0.0 || !hp.decay_excluded) return lam;
  for (const auto& b : layout.blocks())
    if (hp.decay_excluded(b)) std::fill_n(lam.data() + b.offset, b.size(), 0.0);
  return lam;
}

// x ← x − η(direction + λ∘x), committed only if every coordinate is finite.
void commit(OptimizerState& s, Next next, const Vector& direction, const Vector& lam, double lr,
            const Vector& g) {
  for (std::size_t i = 0; i < next.x.size(); ++i) {
    next.x[i] = s.x[i] - lr * (direction[i] + lam[i] * s.x[i]);
    if (!std::isfinite(next.x[i]))
      throw NumericError("non-finite update", static_cast<std::ptrdiff_t>(i));
  }
  s.prev_x = std::move(s.x);
  s.x = std::move(next.x);
  s.m = std::move(next.m);
  s.v = std::move(next.v);
  s.u = std::move(next.u);
  s.prev_g = g;
  s.has_prev_g = true;
  ++s.t;
}

double bias_factor(double beta, std::uint64_t t, bool enabled) {
  return enabled ? 1.0 - std::pow(beta, static_cast<double>(t)) : 1.0;
}

void ema(Vector& m, const Vector& c, double beta, std::size_t lo, std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) m[i] = beta * m[i] + (1.0 - beta) * c[i];
}

// Adam moments and direction m̂/(√v̂ + ε) on [lo, hi).
void adam_range(Next& n, Vector& dir, const Vector& c, const Hyperparams& hp, std::uint64_t t,
                std::size_t lo, std::size_t hi) {
  const double bc1 = bias_factor(hp.beta1, t, hp.bias_correction);
  const double bc2 = bias_factor(hp.beta2, t, hp.bias_correction);
  second_moment_update(n.v.span().subspan(lo, hi - lo), c.span().subspan(lo, hi - lo), hp.beta2);
  for (std::size_t i = lo; i < hi; ++i) {
    n.m[i] = hp.beta1 * n.m[i] + (1.0 - hp.beta1) * c[i];
    dir[i] = (n.m[i] / bc1) / (std::sqrt(n.v[i] / bc2) + hp.eps);
  }
}

Matrix block_matrix(const Vector& v, const ParamBlock& b) {
  return Matrix(b.rows, b.cols, std::span<const double>(v.data() + b.offset, b.size()));
}

void put_block(Vector& dst, const ParamBlock& b, const Matrix& m) {
  std::copy(m.span().begin(), m.span().end(), dst.begin() + b.offset);
}

StepReport make_report(const OptimizerState& s, Vector c, ClipResult clipped, double lr,
                       double gamma) {
  StepReport r;
  r.t = s.t + 1;
  r.c_norm = clipped.norm;
  r.clipped = clipped.clipped;
  r.c = std::move(c);
  r.c_tilde = std::move(clipped.value);
  r.lr = lr;
  r.gamma = gamma;
  return r;
}

// Zero blocks keep a zero direction.
std::optional<OrthogonalizeReport> polar_block(const Matrix& m, PolarMethod method, double tol,
                                               int max_iter, bool lenient) {
  if (frobenius_norm(m) == 0.0) return std::nullopt;
  if (method == PolarMethod::svd) return OrthogonalizeReport{polar_factor(m, PolarMethod::svd), 0, 0.0, true};
  auto rep = newton_schulz_orthogonalize(m, tol, max_iter);
  if (!rep.converged && !lenient)
    throw ConvergenceError("newton-schulz did not converge", rep.residual);
  return rep;
}

void note_polar(StepReport& r, const OrthogonalizeReport& rep) {
  r.ns_iterations = std::max(r.ns_iterations, rep.iterations);
  r.ns_residual = std::max(r.ns_residual, rep.residual);
}

}  // namespace

StepReport mars_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                     const Vector& g_ref, const Hyperparams& hp, double lr, double gamma) {
  check_sizes(s, layout, g);
  Vector c = correction_gradient(g, g_ref, gamma, hp.beta1);
  auto clipped = clip_for(c, layout, hp);
  Next n = pending(s);
  ema(n.m, clipped.value, hp.beta1, 0, g.size());
  StepReport r = make_report(s, std::move(c), std::move(clipped), lr, gamma);
  r.direction = n.m;
  commit(s, std::move(n), r.direction, decay_vector(layout, hp), lr, g);
  return r;
}

StepReport mars_adamw_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                           const Vector& g_ref, const Hyperparams& hp, double lr, double gamma) {
  check_sizes(s, layout, g);
  Vector c = correction_gradient(g, g_ref, gamma, hp.beta1);
  auto clipped = clip_for(c, layout, hp);
  Next n = pending(s);
  Vector dir(g.size());
  adam_range(n, dir, clipped.value, hp, s.t + 1, 0, g.size());
  StepReport r = make_report(s, std::move(c), std::move(clipped), lr, gamma);
  r.direction = std::move(dir);
  commit(s, std::move(n), r.direction, decay_vector(layout, hp), lr, g);
  return r;
}

StepReport mars_lion_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                          const Vector& g_ref, const Hyperparams& hp, double lr, double gamma) {
  check_sizes(s, layout, g);
  Vector c = correction_gradient(g, g_ref, gamma, hp.beta1);
  auto clipped = clip_for(c, layout, hp);
  Next n = pending(s);
  ema(n.m, clipped.value, hp.beta1, 0, g.size());
  Vector dir(g.size());
  for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = sign_of(n.m[i]);
  StepReport r = make_report(s, std::move(c), std::move(clipped), lr, gamma);
  r.direction = std::move(dir);
  commit(s, std::move(n), r.direction, decay_vector(layout, hp), lr, g);
  return r;
}

StepReport mars_shampoo_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                             const Vector& g_ref, const Hyperparams& hp, double lr, double gamma) {
  check_sizes(s, layout, g);
  Vector c = correction_gradient(g, g_ref, gamma, hp.beta1);
  auto clipped = clip_for(c, layout, hp);
  Next n = pending(s);
  Vector dir(g.size());
  StepReport r = make_report(s, std::move(c), {}, lr, gamma);
  for (const auto& b : layout.blocks()) {
    const std::size_t lo = b.offset;
    const std::size_t hi = b.offset + b.size();
    if (!b.is_matrix) {
      adam_range(n, dir, clipped.value, hp, s.t + 1, lo, hi);
      continue;
    }
    ema(n.m, clipped.value, hp.beta1, lo, hi);
    if (auto rep = polar_block(block_matrix(n.m, b), hp.polar, hp.ns_tol, hp.ns_max_iter, false)) {
      put_block(dir, b, rep->o);
      note_polar(r, *rep);
    }
  }
  r.c_norm = clipped.norm;
  r.clipped = clipped.clipped;
  r.c_tilde = std::move(clipped.value);
  r.direction = std::move(dir);
  commit(s, std::move(n), r.direction, decay_vector(layout, hp), lr, g);
  return r;
}

StepReport adamw_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                      const Hyperparams& hp, double lr) {
  check_sizes(s, layout, g);
  auto clipped = clip_for(g, layout, hp);
  Next n = pending(s);
  Vector dir(g.size());
  adam_range(n, dir, clipped.value, hp, s.t + 1, 0, g.size());
  StepReport r = make_report(s, g, std::move(clipped), lr, 0.0);
  r.direction = std::move(dir);
  commit(s, std::move(n), r.direction, decay_vector(layout, hp), lr, g);
  return r;
}

StepReport lion_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                     const Hyperparams& hp, double lr) {
  check_sizes(s, layout, g);
  auto clipped = clip_for(g, layout, hp);
  const Vector& gt = clipped.value;
  Next n = pending(s);
  Vector dir(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    n.m[i] = hp.beta1 * s.u[i] + (1.0 - hp.beta1) * gt[i];
    n.u[i] = hp.beta2 * s.u[i] + (1.0 - hp.beta2) * gt[i];
    dir[i] = sign_of(n.m[i]);
  }
  StepReport r = make_report(s, g, std::move(clipped), lr, 0.0);
  r.direction = std::move(dir);
  commit(s, std::move(n), r.direction, decay_vector(layout, hp), lr, g);
  return r;
}

StepReport sgd_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                    const Hyperparams& hp, double lr) {
  check_sizes(s, layout, g);
  auto clipped = clip_for(g, layout, hp);
  Next n = pending(s);
  StepReport r = make_report(s, g, std::move(clipped), lr, 0.0);
  r.direction = r.c_tilde;
  commit(s, std::move(n), r.direction, decay_vector(layout, hp), lr, g);
  return r;
}

StepReport muon_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                     const Hyperparams& hp, double lr) {
  check_sizes(s, layout, g);
  auto clipped = clip_for(g, layout, hp);
  const Vector& gt = clipped.value;
  const double mu = hp.beta1;
  Next n = pending(s);
  Vector dir(g.size());
  StepReport r = make_report(s, g, {}, lr, 0.0);
  for (const auto& b : layout.blocks()) {
    const std::size_t lo = b.offset;
    const std::size_t hi = b.offset + b.size();
    if (!b.is_matrix) {
      adam_range(n, dir, gt, hp, s.t + 1, lo, hi);
      continue;
    }
    for (std::size_t i = lo; i < hi; ++i) {
      n.u[i] = mu * s.u[i] + gt[i];
      n.m[i] = mu * n.u[i] + gt[i];
    }
    if (auto rep = polar_block(block_matrix(n.m, b), hp.polar, hp.ns_tol, hp.ns_max_iter, true)) {
      put_block(dir, b, rep->o);
      note_polar(r, *rep);
    }
  }
  r.c_norm = clipped.norm;
  r.clipped = clipped.clipped;
  r.c_tilde = std::move(clipped.value);
  r.direction = std::move(dir);
  commit(s, std::move(n), r.direction, decay_vector(layout, hp), lr, g);
  return r;
}

StepReport storm_step(OptimizerState& s, const ParamLayout& layout, const Vector& g,
                      const Vector& g_ref, const Hyperparams& hp, double lr) {
  check_sizes(s, layout, g);
  if (g_ref.size() != g.size()) throw std::invalid_argument("storm_step: size mismatch");
  const double beta = hp.beta1;
  Next n = pending(s);
  for (std::size_t i = 0; i < g.size(); ++i)
    n.m[i] = beta * s.m[i] + (1.0 - beta) * g[i] + beta * (g[i] - g_ref[i]);
  ClipResult raw{g, l2_norm(g), false};
  StepReport r = make_report(s, g, std::move(raw), lr, 1.0);
  r.direction = n.m;
  commit(s, std::move(n), r.direction, decay_vector(layout, hp), lr, g);
  return r;
}

Vector approx_reference(const OptimizerState& s, const Vector& g, ApproxInit init) {
  if (s.has_prev_g) return s.prev_g;
  switch (init) {
    case ApproxInit::current:
      return g;
    case ApproxInit::zero:
      return Vector(g.size());
    case ApproxInit::initial_batch:
      break;
  }
  throw std::logic_error("approx mode: initial reference gradient was not primed");
}

// ---------------------------------------------------------------------------

std::vector<Vector> two_buffer_momentum(const FoldConstants& k, std::span<const Vector> g,
                                        FoldOrdering ordering) {
  std::vector<Vector> out;
  if (g.empty()) return out;
  out.reserve(g.size());
  Vector u(g.front().size());
  for (const auto& gt : g) {
    Vector m(gt.size());
    if (ordering == FoldOrdering::read_then_update) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = k.b1 * u[i] + k.b2 * gt[i];
        u[i] = k.a1 * u[i] + k.a2 * gt[i];
      }
    } else {
      for (std::size_t i = 0; i < m.size(); ++i) {
        u[i] = k.a1 * u[i] + k.a2 * gt[i];
        m[i] = k.b1 * u[i] + k.b2 * gt[i];
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Vector> fold_two_buffer(const FoldConstants& k, std::span<const Vector> g,
                                    FoldOrdering ordering) {
  std::vector<Vector> out;
  if (g.empty()) return out;
  out.reserve(g.size());
  const double c = k.b1 * k.a2 - k.a1 * k.b2 + k.b2;
  const double kk = ordering == FoldOrdering::read_then_update ? k.a1 * k.b2 - k.b1 * k.a2 : k.a1 * k.b2;
  const std::size_t d = g.front().size();
  Vector m(d);
  Vector prev(d);
  for (const auto& gt : g) {
    for (std::size_t i = 0; i < d; ++i) m[i] = k.a1 * m[i] + c * gt[i] + kk * (gt[i] - prev[i]);
    prev = gt;
    out.push_back(m);
  }
  return out;
}

std::vector<Vector> adan_momentum(double beta1, double beta2, std::span<const Vector> g) {
  std::vector<Vector> out;
  if (g.empty()) return out;
  out.reserve(g.size());
  const std::size_t d = g.front().size();
  Vector y(d);
  Vector z(d);
  const Vector* prev = &g.front();
  for (const auto& gt : g) {
    Vector m(d);
    for (std::size_t i = 0; i < d; ++i) {
      y[i] = beta1 * y[i] + (1.0 - beta1) * gt[i];
      z[i] = beta2 * z[i] + (1.0 - beta2) * (gt[i] - (*prev)[i]);
      m[i] = y[i] + beta2 * z[i];
    }
    prev = &gt;
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::pair<OptimizerKind, std::string_view>, 9> kKindNames{{
    {OptimizerKind::sgd, "sgd"},
    {OptimizerKind::adamw, "adamw"},
    {OptimizerKind::lion, "lion"},
    {OptimizerKind::muon, "muon"},
    {OptimizerKind::storm, "storm"},
    {OptimizerKind::mars, "mars"},
    {OptimizerKind::mars_adamw, "mars_adamw"},
    {OptimizerKind::mars_lion, "mars_lion"},
    {OptimizerKind::mars_shampoo, "mars_shampoo"},
}};

}  // namespace

std::string_view to_string(OptimizerKind kind) noexcept {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name) noexcept {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

std::string_view to_string(CorrectionMode mode) noexcept {
  return mode == CorrectionMode::exact ? "exact" : "approx";
}

bool uses_correction(OptimizerKind kind) noexcept {
  switch (kind) {
    case OptimizerKind::storm:
    case OptimizerKind::mars:
    case OptimizerKind::mars_adamw:
    case OptimizerKind::mars_lion:
    case OptimizerKind::mars_shampoo:
      return true;
    default:
      return false;
  }
}

Hyperparams default_hyperparams(OptimizerKind kind) {
  Hyperparams hp;
  switch (kind) {
    case OptimizerKind::adamw:
      hp.beta1 = 0.9;
      hp.beta2 = 0.95;
      break;
    case OptimizerKind::lion:
      hp.beta1 = 0.9;
      hp.beta2 = 0.99;
      break;
    case OptimizerKind::muon:
      hp.clip_threshold.reset();
      hp.polar = PolarMethod::newton_schulz;
      break;
    case OptimizerKind::mars_shampoo:
    case OptimizerKind::storm:
    case OptimizerKind::sgd:
      hp.clip_threshold.reset();
      break;
    default:
      break;
  }
  return hp;
}

Optimizer::Optimizer(OptimizerKind kind, Hyperparams hp, ParamLayout layout, Vector x0)
    : kind_(kind), hp_(std::move(hp)), layout_(std::move(layout)) {
  hp_.validate();
  if (layout_.total_size() != x0.size())
    throw std::invalid_argument("optimizer: layout does not match the parameter vector");
  if (kind_ == OptimizerKind::storm && hp_.correction != CorrectionMode::exact)
    throw std::invalid_argument("storm needs the exact correction");
  state_ = OptimizerState::start(std::move(x0));
}

bool Optimizer::needs_exact_reference() const noexcept {
  return uses_correction(kind_) && hp_.correction == CorrectionMode::exact;
}

bool Optimizer::needs_initial_reference() const noexcept {
  return uses_correction(kind_) && hp_.correction == CorrectionMode::approx &&
         hp_.approx_init == ApproxInit::initial_batch && !state_.has_prev_g;
}

void Optimizer::prime_reference(Vector g0) {
  if (g0.size() != state_.x.size()) throw std::invalid_argument("prime_reference: size mismatch");
  state_.prev_g = std::move(g0);
  state_.has_prev_g = true;
}

StepReport Optimizer::step(const Vector& g, const Vector* exact_ref, double lr, double gamma) {
  Vector ref;
  if (uses_correction(kind_)) {
    if (hp_.correction == CorrectionMode::exact) {
      if (exact_ref == nullptr) throw std::invalid_argument("exact correction needs the reference gradient");
      ref = *exact_ref;
    } else {
      ref = approx_reference(state_, g, hp_.approx_init);
    }
  }
  switch (kind_) {
    case OptimizerKind::sgd:
      return sgd_step(state_, layout_, g, hp_, lr);
    case OptimizerKind::adamw:
      return adamw_step(state_, layout_, g, hp_, lr);
    case OptimizerKind::lion:
      return lion_step(state_, layout_, g, hp_, lr);
    case OptimizerKind::muon:
      return muon_step(state_, layout_, g, hp_, lr);
    case OptimizerKind::storm:
      return storm_step(state_, layout_, g, ref, hp_, lr);
    case OptimizerKind::mars:
      return mars_step(state_, layout_, g, ref, hp_, lr, gamma);
    case OptimizerKind::mars_adamw:
      return mars_adamw_step(state_, layout_, g, ref, hp_, lr, gamma);
    case OptimizerKind::mars_lion:
      return mars_lion_step(state_, layout_, g, ref, hp_, lr, gamma);
    case OptimizerKind::mars_shampoo:
      return mars_shampoo_step(state_, layout_, g, ref, hp_, lr, gamma);
  }
  throw std::logic_error("unknown optimizer kind");
}

}  // namespace mars
