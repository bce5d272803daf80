#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "mnv2/config.hpp"
#include "mnv2/error.hpp"
#include "oracles.hpp"

using namespace mnv2;

TEST_CASE("defaults validate and serialize every key") {
  const RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const nlohmann::json j = to_json(cfg);
  CHECK(j.size() == config_keys().size());
  for (const auto& k : config_keys()) CHECK(j.contains(k));
  CHECK(j["lr0"] == 1e-3);
  CHECK(j["sizes"] == nlohmann::json::array({32, 64, 128, 256}));
  CHECK(j["threads"].is_null());
}

TEST_CASE("to_json and apply_json are inverse") {
  RunConfig a;
  a.train.epochs = 7;
  a.augment.brightness = {0.7, 1.1};
  a.threads = 3;
  a.cache_dir = "/tmp/c";
  RunConfig b;
  apply_json(b, to_json(a));
  CHECK(to_json(b) == to_json(a));
  CHECK(config_hash(b) == config_hash(a));
  CHECK(config_hash(a) != config_hash(RunConfig{}));
  CHECK(config_hash(RunConfig{}).size() == 16);
}

TEST_CASE("flags override the file which overrides defaults") {
  const auto dir = oracle::temp_dir("config");
  const auto file = dir / "run.json";
  std::ofstream(file) << R"({"epochs": 12, "lr0": 0.01, "sizes": [64, 128]})";
  const RunConfig cfg = layered_config(file, {{"epochs", 3}});
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.train.lr0 == 0.01);
  CHECK(cfg.sizes == std::vector<std::size_t>{64, 128});
  CHECK(cfg.train.momentum == 0.9);
  CHECK(layered_config(std::nullopt, nullptr).train.epochs == 30);
}

TEST_CASE("bad configs are rejected") {
  RunConfig cfg;
  CHECK_THROWS_AS(apply_json(cfg, {{"learning_rate", 1}}), ConfigError);
  CHECK_THROWS_AS(apply_json(cfg, {{"epochs", -1}}), ConfigError);
  CHECK_THROWS_AS(apply_json(cfg, {{"epochs", "ten"}}), ConfigError);
  CHECK_THROWS_AS(apply_json(cfg, {{"nesterov", 1}}), ConfigError);
  CHECK_THROWS_AS(apply_json(cfg, {{"brightness", {1.0}}}), ConfigError);
  CHECK_THROWS_AS(apply_json(cfg, {{"train", {{"epochs", 2}}}}), ConfigError);
  CHECK_THROWS_AS(apply_json(cfg, nlohmann::json::array()), ConfigError);
  CHECK_THROWS_AS(layered_config(std::nullopt, {{"sizes", {64, 32}}}), ConfigError);
  CHECK_THROWS_AS(layered_config(std::nullopt, {{"sizes", {16}}}), ConfigError);
  CHECK_THROWS_AS(layered_config(std::nullopt, {{"fraction", 0.0}}), ConfigError);
  CHECK_THROWS_AS(layered_config(std::nullopt, {{"bench_timed", 2}}), ConfigError);
  CHECK_THROWS_AS(layered_config(std::nullopt, {{"threads", 0}}), ConfigError);
  CHECK_THROWS_AS(layered_config(std::nullopt, {{"lr_step", 0}}), ConfigError);
  CHECK_THROWS_AS(read_json_file("/nonexistent/x.json"), ConfigError);

  const auto dir = oracle::temp_dir("config_bad");
  std::ofstream(dir / "broken.json") << "{not json";
  CHECK_THROWS_AS(read_json_file(dir / "broken.json"), ConfigError);
}

TEST_CASE("thread resolution") {
  RunConfig cfg;
  cfg.threads = 4;
  CHECK(resolve_threads(cfg) == 4);
  cfg.threads.reset();
  setenv("MNV2_THREADS", "3", 1);
  CHECK(resolve_threads(cfg) == 3);
  setenv("MNV2_THREADS", "zero", 1);
  CHECK(resolve_threads(cfg) == 1);
  unsetenv("MNV2_THREADS");
  CHECK(resolve_threads(cfg) == 1);
  apply_json(cfg, {{"threads", 2}});
  CHECK(*cfg.threads == 2);
  apply_json(cfg, {{"threads", nullptr}});
  CHECK_FALSE(cfg.threads.has_value());
}
