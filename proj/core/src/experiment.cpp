#include "mars/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "mars/optimizers.hpp"

namespace mars {

namespace {

constexpr double kDivergenceNorm = 1e12;
constexpr const char* kCsvHeader = "step,loss,grad_norm,tracking_err,lr,gamma,clipped";

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double squared_distance(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

Vector log_spaced_spectrum(std::size_t d, double lo, double hi) {
  Vector s(d);
  if (d == 1) {
    s[0] = hi;
    return s;
  }
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  for (std::size_t i = 0; i < d; ++i)
    s[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(d - 1));
  s[0] = lo;
  s[d - 1] = hi;
  return s;
}

std::unique_ptr<GradientOracle> build_problem(const ProblemSpec& p, std::uint64_t seed) {
  if (p.kind == "quadratic") {
    QuadraticOptions o;
    o.spectrum = log_spaced_spectrum(p.dim, p.eig_min, p.eig_max);
    o.sigma = p.sigma;
    o.seed = seed;
    o.rotate = p.rotate;
    o.batch_size = p.batch_size;
    o.matrix_rows = p.matrix_rows;
    return make_noisy_quadratic(std::move(o));
  }
  if (p.kind == "logistic") {
    LogisticOptions o;
    o.samples = p.samples;
    o.dim = p.dim;
    o.batch_size = p.batch_size;
    o.l2 = p.l2;
    o.seed = seed;
    return std::make_unique<Logistic>(o);
  }
  if (p.kind == "rosenbrock") return make_noisy_rosenbrock(p.dim, p.sigma, seed);
  if (p.kind == "mlp") {
    MlpOptions o;
    o.layers = p.layers;
    o.samples = p.samples;
    o.batch_size = p.batch_size;
    o.seed = seed;
    return std::make_unique<Mlp>(o);
  }
  throw ConfigError("unknown problem kind '" + p.kind + "'");
}

RunLog run_experiment(const RunConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  RunLog log;
  log.config = config_to_json(cfg);
  log.tracking_recorded = cfg.record_tracking_error;
  RunSummary& sum = log.summary;
  sum.name = cfg.label();
  sum.optimizer = std::string(to_string(cfg.optimizer));
  sum.problem = cfg.problem.kind;
  sum.seed = cfg.seed;
  sum.steps_requested = cfg.steps;
  sum.threshold = cfg.threshold;

  const auto oracle = build_problem(cfg.problem, cfg.seed);
  Optimizer opt(cfg.optimizer, cfg.hp, oracle->layout(), oracle->initial_point());
  std::uint64_t evals = 0;
  if (opt.needs_initial_reference()) {
    opt.prime_reference(oracle->stochastic_grad(opt.state().x, oracle->sample_batch(0)));
    ++evals;
  }

  const bool want_samples = uses_correction(cfg.optimizer) && cfg.gamma.kind == GammaKind::optimal_estimate;
  std::vector<GammaSample> samples;
  Vector prev_full;
  log.rows.reserve(cfg.steps);

  for (std::uint64_t t = 1; t <= cfg.steps; ++t) {
    const Vector& x = opt.state().x;
    const double loss = oracle->loss(x);
    if (!std::isfinite(loss) || !all_finite(x) || l2_norm(x) > kDivergenceNorm) {
      sum.diverged = true;
      sum.error = "diverged before step " + std::to_string(t);
      break;
    }
    const Vector full = oracle->full_grad(x);
    const Batch batch = oracle->sample_batch(t);
    const Vector g = oracle->stochastic_grad(x, batch);
    ++evals;
    Vector exact_ref;
    if (opt.needs_exact_reference()) {
      exact_ref = oracle->stochastic_grad(opt.state().prev_x, batch);
      ++evals;
    }

    GammaContext ctx{cfg.steps, {}};
    if (want_samples) {
      const Vector ref = opt.needs_exact_reference() ? exact_ref
                                                     : approx_reference(opt.state(), g, cfg.hp.approx_init);
      const double beta = cfg.hp.beta1;
      const Vector& anchor = prev_full.empty() ? full : prev_full;
      GammaSample s{Vector(g.size()), Vector(g.size())};
      for (std::size_t i = 0; i < g.size(); ++i) {
        s.u[i] = (1.0 - beta) * (g[i] - full[i]) + (opt.state().m[i] - anchor[i]);
        s.y[i] = beta * (g[i] - ref[i]);
      }
      samples.push_back(std::move(s));
      if (samples.size() > 2 * cfg.gamma.window)
        samples.erase(samples.begin(), samples.end() - static_cast<std::ptrdiff_t>(cfg.gamma.window));
      ctx.samples = samples;
    }
    const double lr = lr_at(cfg.lr, t);
    const double gamma = uses_correction(cfg.optimizer) ? gamma_at(cfg.gamma, t, ctx) : 0.0;

    StepReport rep;
    try {
      rep = opt.step(g, opt.needs_exact_reference() ? &exact_ref : nullptr, lr, gamma);
    } catch (const NumericError& e) {
      sum.diverged = true;
      sum.error = std::string(e.what()) + " at coordinate " + std::to_string(e.index()) + ", step " +
                  std::to_string(t);
      break;
    }

    RunRow row;
    row.step = t;
    row.loss = loss;
    row.grad_norm = l2_norm(full);
    if (cfg.record_tracking_error) {
      const Vector& estimate = cfg.optimizer == OptimizerKind::sgd ? rep.c_tilde : opt.state().m;
      row.tracking_err = squared_distance(estimate, full);
    } else {
      row.tracking_err = std::numeric_limits<double>::quiet_NaN();
    }
    row.lr = lr;
    row.gamma = gamma;
    row.clipped = rep.clipped;
    log.rows.push_back(row);
    prev_full = full;
  }

  sum.steps_completed = log.rows.size();
  sum.grad_evals = evals;
  double best = std::numeric_limits<double>::infinity();
  double min_gn = std::numeric_limits<double>::infinity();
  for (const auto& r : log.rows) {
    best = std::min(best, r.loss);
    min_gn = std::min(min_gn, r.grad_norm);
  }
  if (!sum.diverged) {
    const double final_loss = oracle->loss(opt.state().x);
    if (!std::isfinite(final_loss) || l2_norm(opt.state().x) > kDivergenceNorm) {
      sum.diverged = true;
      sum.error = "diverged after the final step";
      sum.final_loss = final_loss;
    } else {
      sum.final_loss = final_loss;
      best = std::min(best, final_loss);
    }
  } else {
    sum.final_loss = log.rows.empty() ? std::numeric_limits<double>::quiet_NaN() : log.rows.back().loss;
  }
  sum.best_loss = best;
  sum.min_grad_norm = min_gn;
  sum.steps_to_threshold = steps_to_threshold(log.rows, cfg.threshold);
  sum.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (cfg.out) write_run(log, *cfg.out);
  return log;
}

std::optional<std::uint64_t> steps_to_threshold(const std::vector<RunRow>& rows, double threshold) {
  for (const auto& r : rows)
    if (r.grad_norm <= threshold) return r.step;
  return std::nullopt;
}

void write_csv(const RunLog& log, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : log.rows) {
    out << r.step << ',' << fmt_double(r.loss) << ',' << fmt_double(r.grad_norm) << ','
        << fmt_double(r.tracking_err) << ',' << fmt_double(r.lr) << ',' << fmt_double(r.gamma) << ','
        << (r.clipped ? 1 : 0) << '\n';
  }
}

nlohmann::json summary_to_json(const RunLog& log) {
  const auto& s = log.summary;
  const auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::json j = {{"name", s.name},
                      {"optimizer", s.optimizer},
                      {"problem", s.problem},
                      {"seed", s.seed},
                      {"steps_requested", s.steps_requested},
                      {"steps_completed", s.steps_completed},
                      {"final_loss", num(s.final_loss)},
                      {"best_loss", num(s.best_loss)},
                      {"min_grad_norm", num(s.min_grad_norm)},
                      {"threshold", s.threshold},
                      {"grad_evals", s.grad_evals},
                      {"wall_time_s", s.wall_time_s},
                      {"diverged", s.diverged},
                      {"tracking_recorded", log.tracking_recorded},
                      {"config", log.config}};
  j["steps_to_threshold"] = s.steps_to_threshold ? nlohmann::json(*s.steps_to_threshold) : nlohmann::json();
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

void write_run(const RunLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "run.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + (dir / "run.csv").string());
    write_csv(log, csv);
  }
  std::ofstream js(dir / "summary.json", std::ios::binary);
  if (!js) throw std::runtime_error("cannot write " + (dir / "summary.json").string());
  js << summary_to_json(log).dump(2) << '\n';
}

std::vector<RunRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("run.csv: unexpected header");
  std::vector<RunRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell[7];
    for (auto& c : cell)
      if (!std::getline(fields, c, ',')) throw std::runtime_error("run.csv: short row '" + line + "'");
    RunRow r;
    r.step = std::strtoull(cell[0].c_str(), nullptr, 10);
    r.loss = std::strtod(cell[1].c_str(), nullptr);
    r.grad_norm = std::strtod(cell[2].c_str(), nullptr);
    r.tracking_err = std::strtod(cell[3].c_str(), nullptr);
    r.lr = std::strtod(cell[4].c_str(), nullptr);
    r.gamma = std::strtod(cell[5].c_str(), nullptr);
    r.clipped = cell[6] == "1";
    rows.push_back(r);
  }
  return rows;
}

RunLog read_run(const std::filesystem::path& dir) {
  RunLog log;
  std::ifstream csv(dir / "run.csv");
  if (!csv) throw std::runtime_error("missing " + (dir / "run.csv").string());
  log.rows = read_csv(csv);

  std::ifstream js(dir / "summary.json");
  if (!js) throw std::runtime_error("missing " + (dir / "summary.json").string());
  const auto j = nlohmann::json::parse(js);
  auto& s = log.summary;
  const auto num = [&](const char* key) {
    return j.at(key).is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at(key).get<double>();
  };
  s.name = j.at("name").get<std::string>();
  s.optimizer = j.at("optimizer").get<std::string>();
  s.problem = j.at("problem").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.steps_requested = j.at("steps_requested").get<std::uint64_t>();
  s.steps_completed = j.at("steps_completed").get<std::uint64_t>();
  s.final_loss = num("final_loss");
  s.best_loss = num("best_loss");
  s.min_grad_norm = num("min_grad_norm");
  s.threshold = j.at("threshold").get<double>();
  s.grad_evals = j.at("grad_evals").get<std::uint64_t>();
  s.wall_time_s = j.at("wall_time_s").get<double>();
  s.diverged = j.at("diverged").get<bool>();
  if (!j.at("steps_to_threshold").is_null()) s.steps_to_threshold = j.at("steps_to_threshold").get<std::uint64_t>();
  if (j.contains("error")) s.error = j.at("error").get<std::string>();
  log.tracking_recorded = j.value("tracking_recorded", true);
  log.config = j.value("config", nlohmann::json::object());
  return log;
}

}  // namespace mars
