#include "mars/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mars/optimizers.hpp"
#include "mars/problems.hpp"
#include "mars/rng.hpp"
#include "mars/schedules.hpp"
#include "mars/spectral.hpp"

namespace mars {

namespace {

Check make_check(std::string name, double residual, double tolerance, std::string detail = {}) {
  Check c;
  c.name = std::move(name);
  c.residual = residual;
  c.tolerance = tolerance;
  c.passed = std::isfinite(residual) && residual <= tolerance;
  c.detail = std::move(detail);
  return c;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Gaussian vectors with log-normal scales, so that clipping is exercised.
std::vector<Vector> random_stream(RngStream& rng, std::size_t n, std::size_t d) {
  std::vector<Vector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector v = gauss_draw(rng, d);
    v *= std::exp(1.5 * rng.gaussian());
    out.push_back(std::move(v));
  }
  return out;
}

double max_sequence_diff(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) worst = std::max(worst, max_abs_diff(a[t], b[t]));
  return worst;
}

struct Trace {
  std::vector<Vector> x;
  std::vector<Vector> m;
};

Trace drive(const GradientOracle& oracle, OptimizerKind kind, const Hyperparams& hp, double lr,
            double gamma, std::size_t steps) {
  Optimizer opt(kind, hp, oracle.layout(), oracle.initial_point());
  Trace tr;
  for (std::size_t t = 1; t <= steps; ++t) {
    const Batch b = oracle.sample_batch(t);
    const Vector g = oracle.stochastic_grad(opt.state().x, b);
    Vector ref;
    if (opt.needs_exact_reference()) ref = oracle.stochastic_grad(opt.state().prev_x, b);
    opt.step(g, opt.needs_exact_reference() ? &ref : nullptr, lr, gamma);
    tr.x.push_back(opt.state().x);
    tr.m.push_back(opt.state().m);
  }
  return tr;
}

Hyperparams unclipped(OptimizerKind kind) {
  Hyperparams hp = default_hyperparams(kind);
  hp.clip_threshold.reset();
  return hp;
}

void fold_checks(const VerifyOptions& o, std::vector<Check>& out) {
  RngStream rng(o.seed, 11);
  std::vector<Vector> g;
  for (std::size_t t = 0; t < o.steps; ++t) g.push_back(gauss_draw(rng, 6));
  const double bump = o.corrupt_fold ? 1e-3 : 0.0;

  const FoldConstants lion{0.99, 0.01, 0.9, 0.1};
  FoldConstants lion_folded = lion;
  lion_folded.a1 += bump;
  out.push_back(make_check("fold.lion",
                           max_sequence_diff(fold_two_buffer(lion_folded, g, FoldOrdering::read_then_update),
                                             two_buffer_momentum(lion, g, FoldOrdering::read_then_update)),
                           1e-12));

  const FoldConstants muon{0.95, 1.0, 0.95, 1.0};
  FoldConstants muon_folded = muon;
  muon_folded.a1 += bump;
  out.push_back(make_check("fold.muon",
                           max_sequence_diff(fold_two_buffer(muon_folded, g, FoldOrdering::update_then_read),
                                             two_buffer_momentum(muon, g, FoldOrdering::update_then_read)),
                           1e-12));

  const FoldConstants ema{0.8, 0.2, 1.0, 0.0};
  FoldConstants ema_folded = ema;
  ema_folded.a1 += bump;
  const std::vector<Vector> constant(50, Vector{0.7, -1.3});
  out.push_back(make_check("fold.ema_constant",
                           max_sequence_diff(fold_two_buffer(ema_folded, constant, FoldOrdering::read_then_update),
                                             two_buffer_momentum(ema, constant, FoldOrdering::read_then_update)),
                           1e-12));
}

void sqrt_v_checks(const VerifyOptions& o, std::vector<Check>& out) {
  const std::size_t d = 8;
  for (double beta2 : {0.0, 0.5, 0.9, 0.99, 0.999, 1.0}) {
    RngStream rng(o.seed, 12);
    const double bound = std::sqrt(2.0 * (1.0 - beta2));
    double worst = -bound;
    std::size_t violations = 0;
    for (std::size_t s = 0; s < o.streams; ++s) {
      Vector v(d);
      // β2 = 1 freezes v; start it away from zero so the check is not vacuous.
      if (beta2 == 1.0)
        for (std::size_t i = 0; i < d; ++i) v[i] = rng.uniform();
      for (std::size_t t = 0; t < o.stream_length; ++t) {
        Vector c = gauss_draw(rng, d);
        c *= std::exp(1.5 * rng.gaussian());
        const Vector ct = clip_unit_norm(c, 1.0);
        Vector next = v;
        second_moment_update(next.span(), ct, beta2);
        double gap = 0.0;
        for (std::size_t i = 0; i < d; ++i) gap = std::max(gap, std::abs(std::sqrt(v[i]) - std::sqrt(next[i])));
        worst = std::max(worst, gap - bound);
        if (gap > bound) ++violations;
        v = std::move(next);
      }
    }
    out.push_back(make_check("bound.sqrt_v_increment.beta2=" + fmt("%g", beta2), std::max(0.0, worst), 0.0,
                             std::to_string(violations) + " violations"));
  }
}

void eta_gap_checks(std::vector<Check>& out) {
  for (double s : {1.0, 8.0, 1000.0}) {
    const auto bad = eta_difference_violations(s, 100000);
    out.push_back(make_check("schedule.eta_inverse_gap.s=" + fmt("%g", s), static_cast<double>(bad), 0.0,
                             std::to_string(bad) + " violations over 1e5 steps"));
  }
}

void momentum_bound_check(const VerifyOptions& o, std::vector<Check>& out) {
  RngStream rng(o.seed, 13);
  const std::size_t d = 8;
  const auto layout = ParamLayout::flat(d);
  double worst = -1.0;
  for (std::size_t s = 0; s < std::max<std::size_t>(1, o.streams / 10); ++s) {
    auto st = OptimizerState::start(Vector(d));
    Hyperparams hp = default_hyperparams(OptimizerKind::mars_adamw);
    for (std::size_t t = 0; t < o.stream_length; ++t) {
      hp.beta1 = rng.uniform();
      hp.beta2 = rng.uniform();
      Vector g = gauss_draw(rng, d);
      g *= std::exp(2.0 * rng.gaussian());
      const Vector ref = gauss_draw(rng, d);
      mars_adamw_step(st, layout, g, ref, hp, 0.0, rng.uniform());
      worst = std::max({worst, l2_norm(st.m) - 1.0, l2_norm(st.v) - 1.0});
    }
  }
  out.push_back(make_check("bound.momentum_norms", std::max(0.0, worst), 0.0, "max(|m|, |v|) - 1"));
}

void reduction_checks(const VerifyOptions& o, std::vector<Check>& out) {
  auto q = make_noisy_quadratic(10, Vector{0.1, 0.2, 0.3, 0.5, 0.8, 1.0, 1.5, 2.0, 3.0, 4.0}, 1.0, o.seed);

  Hyperparams mars_hp = default_hyperparams(OptimizerKind::mars_adamw);
  Hyperparams adam_hp = mars_hp;
  const auto a = drive(*q, OptimizerKind::mars_adamw, mars_hp, 1e-2, 0.0, o.steps);
  const auto b = drive(*q, OptimizerKind::adamw, adam_hp, 1e-2, 0.0, o.steps);
  out.push_back(make_check("reduction.gamma0_adamw", max_sequence_diff(a.x, b.x), 1e-12));

  Hyperparams id_hp = unclipped(OptimizerKind::mars);
  id_hp.beta1 = 0.9;
  Hyperparams storm_hp = unclipped(OptimizerKind::storm);
  storm_hp.beta1 = 0.9;
  const auto c = drive(*q, OptimizerKind::mars, id_hp, 1e-2, 1.0, o.steps);
  const auto d = drive(*q, OptimizerKind::storm, storm_hp, 1e-2, 1.0, o.steps);
  out.push_back(make_check("reduction.gamma1_storm", max_sequence_diff(c.m, d.m), 1e-12));
}

void identity_checks(const VerifyOptions& o, std::vector<Check>& out) {
  auto q = make_noisy_quadratic(10, Vector{0.1, 0.2, 0.3, 0.5, 0.8, 1.0, 1.5, 2.0, 3.0, 4.0}, 1.0, o.seed);

  // Lion as MARS-Lion-approx: β = β2_lion, γ = (β2 − β1)/β2, zero initial reference.
  const double lb1 = 0.9;
  const double lb2 = 0.99;
  Hyperparams lion_hp = unclipped(OptimizerKind::lion);
  lion_hp.beta1 = lb1;
  lion_hp.beta2 = lb2;
  Hyperparams ml_hp = unclipped(OptimizerKind::mars_lion);
  ml_hp.beta1 = lb2;
  ml_hp.correction = CorrectionMode::approx;
  ml_hp.approx_init = ApproxInit::zero;
  const auto lion = drive(*q, OptimizerKind::lion, lion_hp, 1e-3, 0.0, o.steps);
  const auto ml = drive(*q, OptimizerKind::mars_lion, ml_hp, 1e-3, (lb2 - lb1) / lb2, o.steps);
  out.push_back(make_check("identity.lion", std::max(max_sequence_diff(lion.x, ml.x), max_sequence_diff(lion.m, ml.m)),
                           1e-10));

  // Muon as MARS-Shampoo-approx with β1 = μ, γ = 1 − μ on one 8×8 block.
  QuadraticOptions qo;
  qo.spectrum = Vector(64);
  for (std::size_t i = 0; i < 64; ++i) qo.spectrum[i] = 0.2 + 0.05 * static_cast<double>(i);
  qo.sigma = 1.0;
  qo.seed = o.seed;
  qo.matrix_rows = 8;
  auto mq = make_noisy_quadratic(qo);
  const double mu = 0.95;
  Hyperparams muon_hp = unclipped(OptimizerKind::muon);
  muon_hp.beta1 = mu;
  muon_hp.polar = PolarMethod::svd;
  Hyperparams ms_hp = unclipped(OptimizerKind::mars_shampoo);
  ms_hp.beta1 = mu;
  ms_hp.correction = CorrectionMode::approx;
  ms_hp.approx_init = ApproxInit::zero;
  ms_hp.polar = PolarMethod::svd;
  const std::size_t steps = std::min<std::size_t>(o.steps, 500);
  const auto muon = drive(*mq, OptimizerKind::muon, muon_hp, 1e-2, 0.0, steps);
  const auto ms = drive(*mq, OptimizerKind::mars_shampoo, ms_hp, 1e-2, 1.0 - mu, steps);
  double mom = 0.0;
  for (std::size_t t = 0; t < steps; ++t) mom = std::max(mom, max_abs_diff(ms.m[t], (1.0 - mu) * muon.m[t]));
  out.push_back(make_check("identity.muon_momentum", mom, 1e-10));
  out.push_back(make_check("identity.muon_trajectory", max_sequence_diff(muon.x, ms.x), 1e-10));

  // Adan with β1 = β2 = β as MARS-approx with γ = 1 − β.
  RngStream rng(o.seed, 14);
  const auto g = random_stream(rng, o.steps, 6);
  const double beta = 0.9;
  Hyperparams hp = unclipped(OptimizerKind::mars);
  hp.beta1 = beta;
  hp.correction = CorrectionMode::approx;
  Optimizer opt(OptimizerKind::mars, hp, ParamLayout::flat(6), Vector(6));
  std::vector<Vector> mars_m;
  for (const auto& gt : g) {
    opt.step(gt, nullptr, 0.0, 1.0 - beta);
    mars_m.push_back(opt.state().m);
  }
  out.push_back(make_check("identity.adan", max_sequence_diff(adan_momentum(beta, beta, g), mars_m), 1e-12));
}

void exact_noise_check(const VerifyOptions& o, std::vector<Check>& out) {
  auto q = make_noisy_quadratic(10, Vector{0.1, 0.2, 0.3, 0.5, 0.8, 1.0, 1.5, 2.0, 3.0, 4.0}, 1.0, o.seed);
  RngStream rng(o.seed, 15);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x_prev = gauss_draw(rng, 10);
    const Vector x = x_prev + gauss_draw(rng, 10);
    const Batch b1 = q->sample_batch(2 * trial + 1);
    const Batch b2 = q->sample_batch(2 * trial + 2);
    const Vector d1 = q->stochastic_grad(x, b1) - q->stochastic_grad(x_prev, b1);
    const Vector d2 = q->stochastic_grad(x, b2) - q->stochastic_grad(x_prev, b2);
    worst = std::max(worst, max_abs_diff(d1, d2));
  }
  out.push_back(make_check("exact.noise_cancellation", worst, 1e-14));
}

void spectral_checks(const VerifyOptions& o, std::vector<Check>& out) {
  RngStream rng(o.seed, 16);
  double scale_worst = 0.0;
  double agree_worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t r = 2 + rng.uniform_index(6);
    const std::size_t c = 2 + rng.uniform_index(6);
    Matrix m(r, c);
    for (auto& e : m.span()) e = rng.gaussian();
    const Matrix base = polar_factor(m);
    for (double s : {1e-3, 1.0, 1e3}) scale_worst = std::max(scale_worst, max_abs_diff(polar_factor(s * m), base));

    // Well-conditioned square input for the NS agreement check.
    const auto sv = svd(m);
    Vector sigma(sv.sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = 1.0 + rng.uniform();
    Matrix conditioned = matmul_nt(matmul(sv.u, Matrix::diagonal(sigma)), sv.v);
    agree_worst = std::max(agree_worst, max_abs_diff(polar_factor(conditioned, PolarMethod::newton_schulz),
                                                     polar_factor(conditioned)));
  }
  out.push_back(make_check("polar.scale_invariance", scale_worst, 1e-10));
  out.push_back(make_check("polar.ns_agrees_with_svd", agree_worst, 1e-6));
}

void clip_check(const VerifyOptions& o, std::vector<Check>& out) {
  RngStream rng(o.seed, 17);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Vector c = gauss_draw(rng, 5);
    c *= std::exp(2.0 * rng.gaussian());
    worst = std::max(worst, std::abs(l2_norm(clip_unit_norm(c, 1.0)) - std::min(l2_norm(c), 1.0)));
  }
  out.push_back(make_check("clip.contract", worst, 1e-14));
}

void gradient_checks(const VerifyOptions& o, std::vector<Check>& out) {
  RngStream rng(o.seed, 18);
  auto logistic = make_logistic(64, 5, 8, o.seed);
  auto mlp = make_mlp({3, 6, 3}, 32, 8, o.seed);
  double lw = 0.0;
  double mw = 0.0;
  for (std::size_t p = 0; p < o.fd_points; ++p) {
    const Vector xl = gauss_draw(rng, logistic->dimension());
    lw = std::max(lw, relative_error(logistic->full_grad(xl), finite_diff_grad(*logistic, xl, 1e-6)));
    Vector xm = gauss_draw(rng, mlp->dimension());
    xm *= 0.5;
    mw = std::max(mw, relative_error(mlp->full_grad(xm), finite_diff_grad(*mlp, xm, 1e-6)));
  }
  out.push_back(make_check("grad.logistic_finite_difference", lw, 1e-5));
  out.push_back(make_check("grad.mlp_finite_difference", mw, 1e-5));
}

void theory_checks(std::vector<Check>& out) {
  TheoryParams p;
  p.momentum_constant = 1.0;
  p.offset = 1000.0;
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 10000; t += 7) {
    const auto [b1, b2] = theory_betas(p, t);
    if (!(b1 >= 0.0 && b1 < 1.0)) worst = std::max(worst, std::abs(b1));
    if (!(b2 >= 0.0 && b2 < 1.0)) worst = std::max(worst, std::abs(b2));
  }
  out.push_back(make_check("theory.betas_in_range", worst, 0.0));
}

}  // namespace

std::vector<Check> verify_suite(const VerifyOptions& options) {
  std::vector<Check> out;
  fold_checks(options, out);
  sqrt_v_checks(options, out);
  eta_gap_checks(out);
  momentum_bound_check(options, out);
  clip_check(options, out);
  reduction_checks(options, out);
  identity_checks(options, out);
  exact_noise_check(options, out);
  spectral_checks(options, out);
  gradient_checks(options, out);
  theory_checks(out);
  return out;
}

bool all_passed(const std::vector<Check>& checks) noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

}  // namespace mars
