#include "mars/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace mars {

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  const double lo = values[n / 2 - 1];
  const double hi = values[n / 2];
  if (std::isinf(lo) || std::isinf(hi)) return lo == hi ? lo : (std::isinf(hi) ? hi : lo);
  return 0.5 * (lo + hi);
}

TrackingStats tracking_error_stats(const RunLog& log, std::uint64_t burn_in) {
  if (!log.tracking_recorded) throw std::invalid_argument("tracking error was not recorded");
  std::vector<double> vals;
  for (const auto& r : log.rows)
    if (r.step > burn_in) vals.push_back(r.tracking_err);
  if (vals.empty()) throw std::invalid_argument("burn-in leaves no rows");
  TrackingStats s;
  s.count = vals.size();
  double sum = 0.0;
  for (double v : vals) sum += v;
  s.mean = sum / static_cast<double>(vals.size());
  s.median = median(std::move(vals));
  return s;
}

double steps_ratio(double a, double b) {
  const bool ia = std::isinf(a);
  const bool ib = std::isinf(b);
  if (ia && ib) return 1.0;
  if (ib) return 0.0;
  if (ia) return std::numeric_limits<double>::infinity();
  if (a == b) return 1.0;
  if (b == 0.0) return std::numeric_limits<double>::infinity();
  return a / b;
}

Report compare_runs(const std::vector<RunLog>& logs, double threshold) {
  if (logs.size() < 2) throw std::invalid_argument("compare_runs needs at least two runs");
  Report rep;
  rep.threshold = threshold;

  std::map<std::string, std::vector<RunEntry>> groups;
  std::vector<std::string> order;
  for (const auto& log : logs) {
    RunEntry e;
    e.label = log.summary.name.empty() ? log.summary.optimizer : log.summary.name;
    e.problem = log.summary.problem;
    e.seed = log.summary.seed;
    const auto steps = steps_to_threshold(log.rows, threshold);
    e.steps_to_threshold = steps ? static_cast<double>(*steps) : std::numeric_limits<double>::infinity();
    e.final_loss = log.summary.final_loss;
    if (!groups.count(e.label)) order.push_back(e.label);
    groups[e.label].push_back(e);
    rep.runs.push_back(e);
  }

  using Key = std::pair<std::string, std::uint64_t>;
  std::set<Key> grid;
  for (const auto& e : groups.at(order.front())) grid.insert({e.problem, e.seed});
  for (const auto& label : order) {
    std::set<Key> mine;
    for (const auto& e : groups.at(label)) {
      if (!mine.insert({e.problem, e.seed}).second)
        throw std::invalid_argument("duplicate run for " + label + " on " + e.problem + " seed " +
                                    std::to_string(e.seed));
    }
    if (mine != grid) throw std::invalid_argument("mismatched run grids");
  }

  for (const auto& label : order) {
    const auto& es = groups.at(label);
    std::vector<double> steps;
    std::vector<double> losses;
    for (const auto& e : es) {
      steps.push_back(e.steps_to_threshold);
      losses.push_back(e.final_loss);
    }
    LabelStats s;
    s.label = label;
    s.runs = es.size();
    s.median_steps = median(steps);
    s.min_steps = *std::min_element(steps.begin(), steps.end());
    s.max_steps = *std::max_element(steps.begin(), steps.end());
    s.median_final_loss = median(losses);
    s.min_final_loss = *std::min_element(losses.begin(), losses.end());
    s.max_final_loss = *std::max_element(losses.begin(), losses.end());
    rep.labels.push_back(s);
  }

  for (std::size_t i = 0; i < rep.labels.size(); ++i) {
    for (std::size_t j = 0; j < rep.labels.size(); ++j) {
      if (i == j) continue;
      const auto& a = rep.labels[i];
      const auto& b = rep.labels[j];
      rep.pairs.push_back({a.label, b.label, steps_ratio(a.median_steps, b.median_steps),
                           a.median_final_loss - b.median_final_loss});
    }
  }
  if (order.size() == 1) {
    // Runs of one label against themselves.
    const auto& a = rep.labels.front();
    rep.pairs.push_back({a.label, a.label, 1.0, 0.0});
  }
  return rep;
}

nlohmann::json Report::to_json() const {
  const auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return nullptr;
  };
  nlohmann::json j;
  j["threshold"] = threshold;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs)
    j["runs"].push_back({{"label", r.label},
                         {"problem", r.problem},
                         {"seed", r.seed},
                         {"steps_to_threshold", num(r.steps_to_threshold)},
                         {"final_loss", num(r.final_loss)}});
  j["labels"] = nlohmann::json::array();
  for (const auto& s : labels)
    j["labels"].push_back({{"label", s.label},
                           {"runs", s.runs},
                           {"median_steps", num(s.median_steps)},
                           {"min_steps", num(s.min_steps)},
                           {"max_steps", num(s.max_steps)},
                           {"median_final_loss", num(s.median_final_loss)},
                           {"min_final_loss", num(s.min_final_loss)},
                           {"max_final_loss", num(s.max_final_loss)}});
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : pairs)
    j["pairs"].push_back({{"a", p.a},
                          {"b", p.b},
                          {"steps_ratio", num(p.steps_ratio)},
                          {"final_loss_delta", num(p.final_loss_delta)}});
  return j;
}

}  // namespace mars
