#include "mars/sweep.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "mars/analysis.hpp"

namespace mars {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(std::string_view s, const std::string& what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) throw ConfigError("bad " + what + " '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::vector<RunLog> run_parallel(const std::vector<RunConfig>& configs, unsigned jobs) {
  std::vector<RunLog> logs(configs.size());
  if (configs.empty()) return logs;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(configs.size()));

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(configs.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        logs[i] = run_experiment(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return logs;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const auto s = parse_u64(text, "seed");
    return {s, s};
  }
  const auto a = parse_u64(std::string_view(text).substr(0, dots), "seed range");
  const auto b = parse_u64(std::string_view(text).substr(dots + 2), "seed range");
  if (b < a) throw ConfigError("seed range is empty: " + text);
  return {a, b};
}

std::vector<double> parse_value_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    const std::string_view trimmed =
        first == std::string::npos ? std::string_view{} : std::string_view(item).substr(first, last - first + 1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), v);
    if (trimmed.empty() || ec != std::errc() || p != trimmed.data() + trimmed.size())
      throw ConfigError("bad value '" + item + "' in list");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty value list");
  return out;
}

std::vector<RunConfig> seed_sweep(const RunConfig& base, std::uint64_t first, std::uint64_t last) {
  std::vector<RunConfig> out;
  for (std::uint64_t s = first; s <= last; ++s) {
    RunConfig c = base;
    c.seed = s;
    if (base.out) c.out = *base.out / ("seed_" + std::to_string(s));
    out.push_back(std::move(c));
    if (s == std::numeric_limits<std::uint64_t>::max()) break;
  }
  return out;
}

std::vector<GammaScanRow> gamma_scan(const RunConfig& base, std::span<const double> values, unsigned jobs) {
  if (!uses_correction(base.optimizer))
    throw ConfigError("gamma-scan needs an optimizer with a correction term, not " +
                      std::string(to_string(base.optimizer)));
  std::vector<RunConfig> configs;
  for (double g : values) {
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("gamma values must lie in [0, 1]");
    RunConfig c = base;
    c.gamma.kind = GammaKind::constant;
    c.gamma.value = g;
    c.name = base.label() + "_gamma_" + fmt_double(g);
    if (base.out) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "gamma_%g", g);
      c.out = *base.out / buf;
    }
    configs.push_back(std::move(c));
  }
  const auto logs = run_parallel(configs, jobs);
  std::vector<GammaScanRow> rows;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    GammaScanRow r;
    r.gamma = values[i];
    r.summary = logs[i].summary;
    r.mean_tracking_err = std::numeric_limits<double>::quiet_NaN();
    if (logs[i].tracking_recorded && !logs[i].rows.empty())
      r.mean_tracking_err = tracking_error_stats(logs[i], logs[i].rows.size() / 10).mean;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_gamma_scan_csv(const std::vector<GammaScanRow>& rows, std::ostream& out) {
  out << "gamma,final_loss,best_loss,min_grad_norm,mean_tracking_err,steps_to_threshold,diverged\n";
  for (const auto& r : rows) {
    out << fmt_double(r.gamma) << ',' << fmt_double(r.summary.final_loss) << ',' << fmt_double(r.summary.best_loss)
        << ',' << fmt_double(r.summary.min_grad_norm) << ',' << fmt_double(r.mean_tracking_err) << ',';
    if (r.summary.steps_to_threshold) out << *r.summary.steps_to_threshold;
    out << ',' << (r.summary.diverged ? 1 : 0) << '\n';
  }
}

}  // namespace mars
