#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "gem/cli.hpp"
#include "support.hpp"

using namespace gem;
using namespace gem::cli;
using testing_support::data_dir;
using testing_support::TempDir;

namespace {

json toy_config() {
  std::ifstream in(data_dir() / "toy-config.json");
  return json::parse(in);
}

std::filesystem::path write_config(const TempDir& dir, json j) {
  j["dataset"]["path"] = (data_dir() / "reviews.jsonl").string();
  j["cache_dir"] = (dir.path() / "cache").string();
  const auto p = dir.path() / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

struct Io {
  std::ostringstream out, err;
  CommonArgs common(std::optional<std::filesystem::path> cfg) {
    CommonArgs c;
    c.config = std::move(cfg);
    c.out = &out;
    c.err = &err;
    return c;
  }
};

}  // namespace

TEST(Config, SeedIsMandatory) {
  EXPECT_THROW(RunConfig::from_json(json{{"backends", json::object()}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json(json{{"seed", "7"}}), ConfigError);
  EXPECT_NO_THROW(RunConfig::from_json(json{{"seed", 7}}));
}

TEST(Config, RejectsBadFields) {
  json j = toy_config();
  j["roles"]["evaluation"]["backend"] = "missing";
  EXPECT_THROW(RunConfig::from_json(j), ConfigError);
  j = toy_config();
  j["roles"]["judge"] = {{"backend", "toy"}};
  EXPECT_THROW(RunConfig::from_json(j), ConfigError);
  j = toy_config();
  j["metrics"] = {"gem-s:"};
  EXPECT_THROW(RunConfig::from_json(j), ConfigError);
  j = toy_config();
  j["bootstrap"]["resamples"] = 500;
  EXPECT_THROW(RunConfig::from_json(j), ConfigError);
  j = toy_config();
  j["bootstrap"]["sd"] = "pooled";
  EXPECT_THROW(RunConfig::from_json(j), ConfigError);
}

TEST(Config, RelativePathsFollowConfigFile) {
  const auto c = RunConfig::load(data_dir() / "toy-config.json");
  EXPECT_EQ(*c.dataset, (data_dir() / "reviews.jsonl").lexically_normal());
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.resamples, 2000u);
}

TEST(Config, SnapshotRedactsKeysAndHashIsStable) {
  json j = toy_config();
  j["backends"]["remote"] = {{"type", "openai"}, {"base_url", "http://h"}, {"api_key", "secret"}};
  const auto c = RunConfig::from_json(j);
  EXPECT_EQ(c.snapshot()["backends"]["remote"]["api_key"], "<redacted>");
  EXPECT_EQ(c.hash(), RunConfig::from_json(j).hash());
  j["seed"] = 8;
  EXPECT_NE(c.hash(), RunConfig::from_json(j).hash());
}

TEST(Config, OpenAiBackendNeedsUrl) {
  if (std::getenv("GEM_BACKEND_URL")) GTEST_SKIP() << "GEM_BACKEND_URL is set";
  EXPECT_THROW(make_backend("b", json{{"type", "openai"}}), ConfigError);
  EXPECT_THROW(make_backend("b", json{{"type", "bogus"}}), ConfigError);
  EXPECT_THROW(make_backend("b", json{{"type", "oracle"}}), ConfigError);
}

TEST(Cli, MissingConfigIsExitTwo) {
  Io io;
  EXPECT_EQ(cmd_score(io.common("/nonexistent/config.json"), {}), kExitConfig);
  EXPECT_NE(io.err.str().find("config file not found"), std::string::npos);
  EXPECT_EQ(cmd_score(io.common(std::nullopt), {}), kExitConfig);
}

TEST(Cli, EmptyDatasetIsExitTwo) {
  TempDir dir("cli-empty");
  const auto cfg = write_config(dir, toy_config());
  std::ofstream(dir.path() / "empty.jsonl") << "";
  Io io;
  ScoreArgs a;
  a.dataset = dir.path() / "empty.jsonl";
  a.out = dir.path() / "scores.jsonl";
  EXPECT_EQ(cmd_score(io.common(cfg), a), kExitConfig);
}

TEST(Cli, MissingSeedIsExitTwo) {
  TempDir dir("cli-seed");
  json j = toy_config();
  j.erase("seed");
  Io io;
  EXPECT_EQ(cmd_score(io.common(write_config(dir, j)), {}), kExitConfig);
  EXPECT_NE(io.err.str().find("seed"), std::string::npos);
}

TEST(Cli, ScoreRougeOnToyConfig) {
  TempDir dir("cli-score");
  const auto cfg = write_config(dir, toy_config());
  Io io;
  ScoreArgs a;
  a.metrics = {"rouge-l"};
  a.out = dir.path() / "scores.jsonl";
  auto common = io.common(cfg);
  common.json_output = true;
  ASSERT_EQ(cmd_score(common, a), kExitOk) << io.err.str();
  const auto summary = json::parse(io.out.str());
  EXPECT_EQ(summary["metrics"][0]["metric"], "rouge-l");
  EXPECT_GT(summary["tuples"].get<std::size_t>(), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "scores.jsonl.config.json"));
}

TEST(Cli, OracleCheckPassesOnShippedStructures) {
  Io io;
  OracleCheckArgs a;
  a.n = 2000;
  a.structures = 2;
  a.garblings = 4;
  a.structure_dir = data_dir() / "structures";
  TempDir dir("cli-oracle");
  a.report = dir.path() / "oracle.json";
  EXPECT_EQ(cmd_oracle_check(io.common(std::nullopt), a), kExitOk) << io.out.str();
  const auto text = io.out.str();
  EXPECT_NE(text.find("PASS bsc-exact"), std::string::npos);
  EXPECT_NE(text.find("consistency/bsc.txt"), std::string::npos);
  std::ifstream in(*a.report);
  EXPECT_TRUE(json::parse(in)["pass"].get<bool>());
  a.n = 0;
  EXPECT_EQ(cmd_oracle_check(io.common(std::nullopt), a), kExitConfig);
}

TEST(Cli, CacheInspectAndClear) {
  TempDir dir("cli-cache");
  lm::GatewayOptions o;
  o.cache_dir = dir.path() / "toy";
  {
    lm::Gateway gw(std::make_shared<lm::ToyBackend>(), o);
    lm::PromptBundle b;
    b.user = "context";
    b.forced_output = "abc";
    b.params.model_id = "toy-lm";
    gw.score_forced(b);
  }
  Io io;
  auto common = io.common(std::nullopt);
  common.json_output = true;
  ASSERT_EQ(cmd_cache(common, "inspect", dir.path()), kExitOk);
  EXPECT_EQ(json::parse(io.out.str())["entries"], 1);
  io.out.str("");
  ASSERT_EQ(cmd_cache(common, "clear", dir.path()), kExitOk);
  EXPECT_EQ(json::parse(io.out.str())["entries"], 0);
  EXPECT_EQ(cmd_cache(common, "purge", dir.path()), kExitConfig);
}
