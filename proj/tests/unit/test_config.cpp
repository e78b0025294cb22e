#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "mars/config.hpp"

using namespace mars;
using nlohmann::json;

namespace {

const std::filesystem::path kConfigs = MARS_CONFIG_DIR;

json minimal() {
  return json::parse(R"({"problem": {"kind": "quadratic"}, "optimizer": {"kind": "mars_adamw"}})");
}

std::string error_of(const json& doc) {
  try {
    config_from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ShippedJsonAndTomlAgree) {
  const auto a = load_config(kConfigs / "quadratic.json");
  const auto b = load_config(kConfigs / "quadratic.toml");
  EXPECT_EQ(config_to_json(a), config_to_json(b));
  EXPECT_EQ(a.optimizer, OptimizerKind::mars_adamw);
  EXPECT_EQ(a.hp.beta1, 0.95);
  EXPECT_EQ(a.hp.beta2, 0.99);
  EXPECT_EQ(a.gamma.value, 0.025);
  EXPECT_EQ(a.lr.kind, LrKind::cosine_warmup);
  EXPECT_EQ(a.lr.total_steps, 2000u);
  EXPECT_EQ(a.problem.dim, 10u);
}

TEST(Config, ShippedMlpLoads) {
  const auto c = load_config(kConfigs / "mlp.json");
  EXPECT_EQ(c.problem.kind, "mlp");
  EXPECT_EQ(c.problem.layers, (std::vector<std::size_t>{4, 16, 3}));
  EXPECT_EQ(c.problem.batch_size, 32u);
}

TEST(Config, Defaults) {
  const auto c = config_from_json(minimal());
  EXPECT_EQ(c.steps, 1000u);
  EXPECT_EQ(*c.hp.clip_threshold, 1.0);
  EXPECT_EQ(c.hp.correction, CorrectionMode::exact);
  EXPECT_EQ(c.label(), "mars_adamw");
  EXPECT_FALSE(c.out.has_value());
}

TEST(Config, PerKindDefaultsApplyBeforeOverrides) {
  auto d = minimal();
  d["optimizer"] = {{"kind", "adamw"}};
  auto c = config_from_json(d);
  EXPECT_EQ(c.hp.beta1, 0.9);
  EXPECT_EQ(c.hp.beta2, 0.95);
  d["optimizer"]["beta2"] = 0.999;
  EXPECT_EQ(config_from_json(d).hp.beta2, 0.999);
}

TEST(Config, RoundTrip) {
  auto c = load_config(kConfigs / "quadratic.json");
  c.hp.clip_threshold.reset();
  c.lr.decay_start = 1500;
  c.lr.kind = LrKind::wsd;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, ClipOff) {
  auto d = minimal();
  d["optimizer"]["clip"] = "off";
  EXPECT_FALSE(config_from_json(d).hp.clip_threshold.has_value());
  d["optimizer"]["clip"] = false;
  EXPECT_FALSE(config_from_json(d).hp.clip_threshold.has_value());
  d["optimizer"]["clip"] = 2.5;
  EXPECT_EQ(*config_from_json(d).hp.clip_threshold, 2.5);
  d["optimizer"]["clip"] = "sometimes";
  EXPECT_NE(error_of(d), "");
}

TEST(Config, NumericScheduleShortcuts) {
  auto d = minimal();
  d["schedule"] = {{"lr", 0.01}, {"gamma", 1.0}};
  const auto c = config_from_json(d);
  EXPECT_EQ(c.lr.kind, LrKind::constant);
  EXPECT_EQ(c.lr.max_lr, 0.01);
  EXPECT_EQ(c.gamma.kind, GammaKind::constant);
  EXPECT_EQ(c.gamma.value, 1.0);
}

TEST(Config, RejectsUnknownKeysAndSections) {
  auto d = minimal();
  d["optimizer"]["betta1"] = 0.9;
  EXPECT_NE(error_of(d).find("optimizer.betta1"), std::string::npos);
  auto e = minimal();
  e["extras"] = json::object();
  EXPECT_NE(error_of(e).find("extras"), std::string::npos);
}

TEST(Config, RejectsBadValues) {
  auto bad = [](const char* section, const char* key, json value) {
    auto d = minimal();
    d[section][key] = std::move(value);
    return error_of(d);
  };
  EXPECT_NE(bad("optimizer", "beta1", 1.0), "");
  EXPECT_NE(bad("optimizer", "beta1", "high"), "");
  EXPECT_NE(bad("optimizer", "kind", "adam"), "");
  EXPECT_NE(bad("problem", "kind", "cifar"), "");
  EXPECT_NE(bad("problem", "dim", -3), "");
  EXPECT_NE(bad("problem", "sigma", -1.0), "");
  EXPECT_NE(bad("schedule", "gamma_value", 1.5), "");
  EXPECT_NE(bad("schedule", "lr", "linear"), "");
  EXPECT_NE(bad("run", "steps", 0), "");
  EXPECT_NE(bad("run", "threshold", 0.0), "");
  EXPECT_NE(bad("schedule", "warmup_steps", 5000), "");
}

TEST(Config, StormNeedsExactCorrection) {
  auto d = minimal();
  d["optimizer"] = {{"kind", "storm"}, {"correction", "approx"}};
  EXPECT_NE(error_of(d), "");
}

TEST(Config, MissingFileAndUnknownExtension) {
  EXPECT_THROW(load_config("/nonexistent/run.json"), ConfigError);
  const auto tmp = std::filesystem::temp_directory_path() / "mars_cfg_test.yaml";
  std::ofstream(tmp) << "problem: {}\n";
  EXPECT_THROW(load_config(tmp), ConfigError);
  std::filesystem::remove(tmp);
}

TEST(Config, MalformedJson) {
  const auto tmp = std::filesystem::temp_directory_path() / "mars_cfg_test.json";
  std::ofstream(tmp) << "{\"problem\": {";
  EXPECT_THROW(load_config(tmp), ConfigError);
  std::filesystem::remove(tmp);
}

TEST(TomlSubset, Scalars) {
  const auto j = parse_toml_subset(R"(
# top comment
[a]
i = 42
neg = -7
f = 1.5e-3
big = 1_000_000
t = true
f2 = false
s = "hi \"there\"\n"  # trailing comment
arr = [1, 2, 3]
mixed = [ "x", "y", ]
)");
  EXPECT_EQ(j["a"]["i"], 42);
  EXPECT_TRUE(j["a"]["i"].is_number_unsigned());
  EXPECT_EQ(j["a"]["neg"], -7);
  EXPECT_EQ(j["a"]["f"], 1.5e-3);
  EXPECT_EQ(j["a"]["big"], 1000000);
  EXPECT_EQ(j["a"]["t"], true);
  EXPECT_EQ(j["a"]["f2"], false);
  EXPECT_EQ(j["a"]["s"], "hi \"there\"\n");
  EXPECT_EQ(j["a"]["arr"], json::array({1, 2, 3}));
  EXPECT_EQ(j["a"]["mixed"], json::array({"x", "y"}));
}

TEST(TomlSubset, Errors) {
  EXPECT_THROW(parse_toml_subset("[a]\nx = 1\nx = 2\n"), ConfigError);
  EXPECT_THROW(parse_toml_subset("[a]\n[a]\n"), ConfigError);
  EXPECT_THROW(parse_toml_subset("[a]\nx = \n"), ConfigError);
  EXPECT_THROW(parse_toml_subset("[a]\nx = \"open\n"), ConfigError);
  EXPECT_THROW(parse_toml_subset("[a\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_toml_subset("[a]\nx = 1.2.3\n"), ConfigError);
  EXPECT_THROW(parse_toml_subset("[a]\njust words\n"), ConfigError);
}
