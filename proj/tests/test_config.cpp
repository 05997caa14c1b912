#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "elegant/config.hpp"
#include "elegant/runner.hpp"
#include "testutil.hpp"

using namespace elegant;

namespace {

nlohmann::json tiny_config_json(const std::string& method = "pretrained") {
  nlohmann::json j = {
      {"schema_version", 1},
      {"mixture",
       {{"components",
         {{{"weight", 0.5}, {"mean", {-2.0}}, {"variance", 0.25}},
          {{"weight", 0.5}, {"mean", {2.0}}, {"variance", 0.25}}}}}},
      {"horizon", 5.0},
      {"n_steps", 30},
      {"alpha", 1.0},
      {"reward", {{"kind", "linear"}, {"coeffs", {1.0}}}},
      {"method", {{"name", method}}},
      {"evaluation",
       {{"n", 200}, {"seed", 7}, {"histogram_bins", 20}, {"bootstrap_resamples", 50}}},
      {"output_dir", "test_out/run"},
  };
  return j;
}

}  // namespace

TEST_CASE("config: parse -> serialize -> parse is the identity", "[config]") {
  ExperimentConfig cfg = parse_config(tiny_config_json());
  ExperimentConfig cfg2 = parse_config(serialize_config(cfg));
  REQUIRE(serialize_config(cfg) == serialize_config(cfg2));
  REQUIRE(config_hash(cfg) == config_hash(cfg2));
}

TEST_CASE("config: unknown keys error with field paths", "[config]") {
  nlohmann::json j = tiny_config_json();
  j["sigma"] = 2.0;
  try {
    parse_config(j);
    FAIL("expected unknown-key error");
  } catch (const ConfigError& e) {
    REQUIRE(std::string(e.what()).find("sigma") != std::string::npos);
  }
  j = tiny_config_json();
  j["stage1"] = {{"batch", 8}, {"learning_rate", 0.1}};
  try {
    parse_config(j);
    FAIL("expected unknown-key error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("config.stage1") != std::string::npos);
    REQUIRE(msg.find("learning_rate") != std::string::npos);
  }
}

TEST_CASE("config: schema version and field validation", "[config]") {
  nlohmann::json j = tiny_config_json();
  j["schema_version"] = 2;
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);

  j = tiny_config_json();
  j.erase("alpha");
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);

  j = tiny_config_json();
  j["alpha"] = -1.0;
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);

  j = tiny_config_json();
  j["mixture"]["components"][0]["weight"] = 0.7;  // no longer sums to 1
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);

  j = tiny_config_json();
  j["method"]["name"] = "unknown_method";
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);

  j = tiny_config_json();
  j["reward"] = {{"kind", "fit_from_genuine"}};  // requires genuine_reward
  REQUIRE_THROWS_AS(parse_config(j), ConfigError);
}

TEST_CASE("config: hash is stable and sensitive", "[config]") {
  ExperimentConfig a = parse_config(tiny_config_json());
  ExperimentConfig b = parse_config(tiny_config_json());
  REQUIRE(config_hash(a) == config_hash(b));
  b.alpha = 0.5;
  REQUIRE(config_hash(a) != config_hash(b));
}

TEST_CASE("config: overrides rewrite every seed and the eval count", "[config]") {
  ExperimentConfig cfg = parse_config(tiny_config_json());
  apply_seed_override(cfg, 1000);
  REQUIRE(cfg.value_fit.seed == 1001);
  REQUIRE(cfg.stage1.seed == 1002);
  REQUIRE(cfg.stage2.seed == 1003);
  REQUIRE(cfg.evaluation.seed == 1004);
  apply_n_override(cfg, 321);
  REQUIRE(cfg.evaluation.n == 321);
  REQUIRE_THROWS_AS(apply_n_override(cfg, 1), ConfigError);
}

TEST_CASE("runner: pretrained method end to end, deterministic reports", "[config]") {
  std::filesystem::remove_all("test_out");
  ExperimentConfig cfg = parse_config(tiny_config_json());
  RunManifest manifest = cmd_finetune(cfg);
  REQUIRE(manifest.method == "pretrained");
  REQUIRE(std::filesystem::exists("test_out/run/manifest.json"));
  REQUIRE(std::filesystem::exists("test_out/run/config.json"));

  EvaluateResult ev1 = cmd_evaluate("test_out/run/manifest.json");
  REQUIRE(ev1.report.kl_total == 0.0);
  REQUIRE(ev1.report.n == 200);
  REQUIRE(std::filesystem::exists("test_out/run/report.json"));
  REQUIRE(std::filesystem::exists("test_out/run/histogram_nominal.csv"));
  REQUIRE(std::filesystem::exists("test_out/run/histogram.svg"));

  // byte-identical rerun
  std::ifstream in1("test_out/run/report.json");
  std::string r1((std::istreambuf_iterator<char>(in1)), std::istreambuf_iterator<char>());
  cmd_evaluate("test_out/run/manifest.json");
  std::ifstream in2("test_out/run/report.json");
  std::string r2((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
  REQUIRE(r1 == r2);

  // n override respected exactly
  EvaluateResult ev3 = cmd_evaluate("test_out/run/manifest.json", std::nullopt, 64);
  REQUIRE(ev3.report.n == 64);
  std::filesystem::remove_all("test_out");
}

TEST_CASE("runner: elegant method produces three checkpoints", "[config]") {
  std::filesystem::remove_all("test_out_e");
  nlohmann::json j = tiny_config_json("elegant");
  j["output_dir"] = "test_out_e/run";
  j["n_steps"] = 20;
  j["value_fit"] = {{"variant", "soft"}, {"probes", 16}, {"rollouts", 8},
                    {"hidden", {8, 8}},  {"epochs", 10}, {"batch", 8},
                    {"lr", 0.01},        {"seed", 3}};
  j["stage1"] = {{"batch", 8}, {"epochs", 2}, {"steps_per_epoch", 2}, {"lr", 0.01},
                 {"hidden", {8, 8}}, {"seed", 4}};
  j["stage2"] = {{"batch", 8}, {"epochs", 2}, {"steps_per_epoch", 2}, {"lr", 0.01},
                 {"hidden", {8, 8}}, {"seed", 5}};
  j["evaluation"] = {{"n", 100}, {"seed", 7}, {"histogram_bins", 10},
                     {"bootstrap_resamples", 20}};
  ExperimentConfig cfg = parse_config(j);
  RunManifest manifest = cmd_finetune(cfg);
  REQUIRE(manifest.artifacts.count("value") == 1);
  REQUIRE(manifest.artifacts.count("q") == 1);
  REQUIRE(manifest.artifacts.count("u") == 1);
  for (const auto& [name, path] : manifest.artifacts) REQUIRE(std::filesystem::exists(path));

  // rerun: identical config hash and bit-identical metrics
  RunManifest manifest2 = cmd_finetune(cfg);
  REQUIRE(manifest.config_hash == manifest2.config_hash);
  EvaluateResult e1 = cmd_evaluate("test_out_e/run/manifest.json");
  EvaluateResult e2 = cmd_evaluate("test_out_e/run/manifest.json");
  REQUIRE(e1.report.reward_mean == e2.report.reward_mean);
  REQUIRE(e1.report.kl_total == e2.report.kl_total);
  std::filesystem::remove_all("test_out_e");
}

TEST_CASE("runner: evaluate on a missing artifact names it", "[config]") {
  try {
    cmd_evaluate("nowhere/manifest.json");
    FAIL("expected missing-artifact error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("manifest.json") != std::string::npos);
  }
}

TEST_CASE("oracle-check passes on a fresh tree and lists the identities", "[config]") {
  OracleCheckResult res = cmd_oracle_check();
  REQUIRE(res.pass);
  REQUIRE(res.report.at("identities").size() >= 6);
}

TEST_CASE("runner: sample subcommand dumps CSV", "[config]") {
  std::filesystem::remove_all("test_out_s");
  nlohmann::json j = tiny_config_json();
  j["output_dir"] = "test_out_s/run";
  j["evaluation"]["n"] = 50;
  ExperimentConfig cfg = parse_config(j);
  const std::string path = cmd_sample(cfg, cfg.output_dir);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "x_1");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  REQUIRE(rows == 50);
  std::filesystem::remove_all("test_out_s");
}
