#include "mars/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace mars {

namespace {

using nlohmann::json;

// Reads keys out of one section and rejects anything left unread.
class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.contains(name_)) return;
    obj_ = &doc.at(name_);
    if (!obj_->is_object()) throw ConfigError("[" + name_ + "] must be a table");
  }

  bool has(const std::string& key) const { return obj_ && obj_->contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_->at(key);
  }

  template <typename T>
  void read(const std::string& key, T& dst) {
    if (!has(key)) return;
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      }
      dst = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& dst) {
    if (!has(key)) return;
    T value{};
    read(key, value);
    dst = value;
  }

  std::string where(const std::string& key) const { return name_ + "." + key; }

  void finish() const {
    if (!obj_) return;
    for (const auto& [key, _] : obj_->items())
      if (!seen_.count(key)) throw ConfigError("unknown key " + where(key));
  }

 private:
  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

LrKind parse_lr_kind(const std::string& s) {
  if (s == "constant") return LrKind::constant;
  if (s == "cosine") return LrKind::cosine_warmup;
  if (s == "wsd") return LrKind::wsd;
  if (s == "theory") return LrKind::theory;
  throw ConfigError("schedule.lr: unknown kind '" + s + "'");
}

std::string lr_kind_name(LrKind k) {
  switch (k) {
    case LrKind::constant: return "constant";
    case LrKind::cosine_warmup: return "cosine";
    case LrKind::wsd: return "wsd";
    case LrKind::theory: return "theory";
  }
  return "constant";
}

GammaKind parse_gamma_kind(const std::string& s) {
  if (s == "constant") return GammaKind::constant;
  if (s == "linear") return GammaKind::linear;
  if (s == "optimal") return GammaKind::optimal_estimate;
  throw ConfigError("schedule.gamma: unknown kind '" + s + "'");
}

std::string gamma_kind_name(GammaKind k) {
  switch (k) {
    case GammaKind::constant: return "constant";
    case GammaKind::linear: return "linear";
    case GammaKind::optimal_estimate: return "optimal";
  }
  return "constant";
}

std::string approx_init_name(ApproxInit a) {
  switch (a) {
    case ApproxInit::current: return "current";
    case ApproxInit::zero: return "zero";
    case ApproxInit::initial_batch: return "initial_batch";
  }
  return "current";
}

void read_problem(const json& doc, ProblemSpec& p) {
  Section s(doc, "problem");
  s.read("kind", p.kind);
  require(p.kind == "quadratic" || p.kind == "logistic" || p.kind == "rosenbrock" || p.kind == "mlp",
          "problem.kind: unknown problem '" + p.kind + "'");
  s.read("dim", p.dim);
  s.read("sigma", p.sigma);
  s.read("batch_size", p.batch_size);
  s.read("eig_min", p.eig_min);
  s.read("eig_max", p.eig_max);
  s.read("rotate", p.rotate);
  s.read("matrix_rows", p.matrix_rows);
  s.read("samples", p.samples);
  s.read("l2", p.l2);
  if (s.has("layers")) {
    const json& v = s.raw("layers");
    require(v.is_array() && v.size() >= 3, "problem.layers: need input, >= 1 hidden and output sizes");
    p.layers.clear();
    for (const auto& e : v) {
      require(e.is_number_unsigned() && e.get<std::size_t>() > 0, "problem.layers: sizes must be positive");
      p.layers.push_back(e.get<std::size_t>());
    }
  }
  s.finish();
  require(p.dim >= 1, "problem.dim must be positive");
  require(p.sigma >= 0.0, "problem.sigma must be >= 0");
  require(p.batch_size >= 1, "problem.batch_size must be positive");
  require(p.eig_min > 0.0 && p.eig_max >= p.eig_min, "problem: need 0 < eig_min <= eig_max");
  require(p.kind != "rosenbrock" || p.dim >= 2, "problem.dim must be >= 2 for rosenbrock");
  require(p.kind == "quadratic" || p.kind == "rosenbrock" || p.batch_size <= p.samples,
          "problem.batch_size must not exceed samples");
  if (p.matrix_rows) require(*p.matrix_rows > 0 && p.dim % *p.matrix_rows == 0, "problem.matrix_rows must divide dim");
}

void read_optimizer(const json& doc, RunConfig& cfg) {
  Section s(doc, "optimizer");
  std::string kind = std::string(to_string(cfg.optimizer));
  s.read("kind", kind);
  const auto parsed = parse_optimizer_kind(kind);
  require(parsed.has_value(), "optimizer.kind: unknown optimizer '" + kind + "'");
  cfg.optimizer = *parsed;
  cfg.hp = default_hyperparams(cfg.optimizer);
  Hyperparams& hp = cfg.hp;

  s.read("beta1", hp.beta1);
  s.read("beta2", hp.beta2);
  s.read("weight_decay", hp.weight_decay);
  s.read("eps", hp.eps);
  if (s.has("clip")) {
    const json& v = s.raw("clip");
    if (v.is_number()) {
      hp.clip_threshold = v.get<double>();
    } else if ((v.is_string() && v.get<std::string>() == "off") || (v.is_boolean() && !v.get<bool>())) {
      hp.clip_threshold.reset();
    } else {
      throw ConfigError("optimizer.clip: expected a positive number or \"off\"");
    }
  }
  if (s.has("clip_scope")) {
    std::string scope;
    s.read("clip_scope", scope);
    require(scope == "global" || scope == "per_block", "optimizer.clip_scope: global or per_block");
    hp.clip_scope = scope == "global" ? ClipScope::global : ClipScope::per_block;
  }
  if (s.has("correction")) {
    std::string mode;
    s.read("correction", mode);
    require(mode == "exact" || mode == "approx", "optimizer.correction: exact or approx");
    hp.correction = mode == "exact" ? CorrectionMode::exact : CorrectionMode::approx;
  }
  if (s.has("approx_init")) {
    std::string init;
    s.read("approx_init", init);
    if (init == "current") hp.approx_init = ApproxInit::current;
    else if (init == "zero") hp.approx_init = ApproxInit::zero;
    else if (init == "initial_batch") hp.approx_init = ApproxInit::initial_batch;
    else throw ConfigError("optimizer.approx_init: current, zero or initial_batch");
  }
  s.read("bias_correction", hp.bias_correction);
  if (s.has("polar")) {
    std::string polar;
    s.read("polar", polar);
    require(polar == "svd" || polar == "newton_schulz", "optimizer.polar: svd or newton_schulz");
    hp.polar = polar == "svd" ? PolarMethod::svd : PolarMethod::newton_schulz;
  }
  s.read("ns_tol", hp.ns_tol);
  s.read("ns_max_iter", hp.ns_max_iter);
  bool decay_bias = false;
  s.read("decay_bias", decay_bias);
  if (decay_bias) hp.decay_excluded = nullptr;
  s.finish();
  try {
    hp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("optimizer: ") + e.what());
  }
  if (cfg.optimizer == OptimizerKind::storm)
    require(hp.correction == CorrectionMode::exact, "optimizer: storm needs correction = exact");
}

void read_schedule(const json& doc, RunConfig& cfg) {
  Section s(doc, "schedule");
  if (s.has("lr")) {
    const json& v = s.raw("lr");
    if (v.is_number()) {
      cfg.lr.kind = LrKind::constant;
      cfg.lr.max_lr = v.get<double>();
    } else if (v.is_string()) {
      cfg.lr.kind = parse_lr_kind(v.get<std::string>());
    } else {
      throw ConfigError("schedule.lr: expected a kind name or a constant value");
    }
  }
  s.read("max_lr", cfg.lr.max_lr);
  s.read("min_lr", cfg.lr.min_lr);
  s.read("warmup_steps", cfg.lr.warmup_steps);
  s.read("decay_start", cfg.lr.decay_start);
  s.read("theory_offset", cfg.lr.theory_offset);
  if (s.has("gamma")) {
    const json& v = s.raw("gamma");
    if (v.is_number()) {
      cfg.gamma.kind = GammaKind::constant;
      cfg.gamma.value = v.get<double>();
    } else if (v.is_string()) {
      cfg.gamma.kind = parse_gamma_kind(v.get<std::string>());
    } else {
      throw ConfigError("schedule.gamma: expected a kind name or a constant value");
    }
  }
  s.read("gamma_value", cfg.gamma.value);
  s.read("gamma_start", cfg.gamma.start);
  s.read("gamma_end", cfg.gamma.end);
  s.read("gamma_window", cfg.gamma.window);
  s.finish();
  const auto in_unit = [](double g) { return g >= 0.0 && g <= 1.0; };
  require(in_unit(cfg.gamma.value) && in_unit(cfg.gamma.start) && in_unit(cfg.gamma.end),
          "schedule: gamma values must lie in [0, 1]");
  require(cfg.gamma.kind != GammaKind::optimal_estimate || cfg.gamma.window >= 2,
          "schedule.gamma_window must be >= 2");
}

void read_run(const json& doc, RunConfig& cfg) {
  Section s(doc, "run");
  s.read("steps", cfg.steps);
  s.read("seed", cfg.seed);
  if (s.has("out")) {
    std::string out;
    s.read("out", out);
    cfg.out = out;
  }
  s.read("record_tracking_error", cfg.record_tracking_error);
  s.read("threshold", cfg.threshold);
  s.read("name", cfg.name);
  s.finish();
  require(cfg.steps >= 1, "run.steps must be positive");
  require(cfg.threshold > 0.0, "run.threshold must be positive");
}

}  // namespace

std::string RunConfig::label() const { return name.empty() ? std::string(to_string(optimizer)) : name; }

void RunConfig::finalize() {
  lr.total_steps = steps;
  try {
    lr.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a table of sections");
  for (const auto& [key, _] : doc.items())
    if (key != "problem" && key != "optimizer" && key != "schedule" && key != "run")
      throw ConfigError("unknown section [" + key + "]");
  RunConfig cfg;
  read_problem(doc, cfg.problem);
  read_optimizer(doc, cfg);
  read_schedule(doc, cfg);
  read_run(doc, cfg);
  cfg.finalize();
  return cfg;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  json j;
  const auto& p = cfg.problem;
  j["problem"] = {{"kind", p.kind},         {"dim", p.dim},         {"sigma", p.sigma},
                  {"batch_size", p.batch_size}, {"eig_min", p.eig_min}, {"eig_max", p.eig_max},
                  {"rotate", p.rotate},     {"samples", p.samples}, {"l2", p.l2},
                  {"layers", p.layers}};
  if (p.matrix_rows) j["problem"]["matrix_rows"] = *p.matrix_rows;

  const auto& hp = cfg.hp;
  j["optimizer"] = {{"kind", std::string(to_string(cfg.optimizer))},
                    {"beta1", hp.beta1},
                    {"beta2", hp.beta2},
                    {"weight_decay", hp.weight_decay},
                    {"eps", hp.eps},
                    {"clip_scope", hp.clip_scope == ClipScope::global ? "global" : "per_block"},
                    {"correction", std::string(to_string(hp.correction))},
                    {"approx_init", approx_init_name(hp.approx_init)},
                    {"bias_correction", hp.bias_correction},
                    {"polar", hp.polar == PolarMethod::svd ? "svd" : "newton_schulz"},
                    {"ns_tol", hp.ns_tol},
                    {"ns_max_iter", hp.ns_max_iter},
                    {"decay_bias", !static_cast<bool>(hp.decay_excluded)}};
  if (hp.clip_threshold) j["optimizer"]["clip"] = *hp.clip_threshold;
  else j["optimizer"]["clip"] = "off";

  j["schedule"] = {{"lr", lr_kind_name(cfg.lr.kind)},
                   {"max_lr", cfg.lr.max_lr},
                   {"min_lr", cfg.lr.min_lr},
                   {"warmup_steps", cfg.lr.warmup_steps},
                   {"theory_offset", cfg.lr.theory_offset},
                   {"gamma", gamma_kind_name(cfg.gamma.kind)},
                   {"gamma_value", cfg.gamma.value},
                   {"gamma_start", cfg.gamma.start},
                   {"gamma_end", cfg.gamma.end},
                   {"gamma_window", cfg.gamma.window}};
  if (cfg.lr.decay_start) j["schedule"]["decay_start"] = *cfg.lr.decay_start;

  j["run"] = {{"steps", cfg.steps},
              {"seed", cfg.seed},
              {"record_tracking_error", cfg.record_tracking_error},
              {"threshold", cfg.threshold},
              {"name", cfg.name}};
  if (cfg.out) j["run"]["out"] = cfg.out->string();
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const auto ext = path.extension().string();
  json doc;
  if (ext == ".toml") {
    doc = parse_toml_subset(buf.str());
  } else if (ext == ".json") {
    try {
      doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
  } else {
    throw ConfigError("config must end in .json or .toml: " + path.string());
  }
  return config_from_json(doc);
}

}  // namespace mars
