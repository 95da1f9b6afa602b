#pragma once

// Run configuration (one JSON file) and the runtime that turns it into
// backends, gateways and scorers.
//
// {
//   "seed": 7,
//   "backends": {"local": {"type": "openai", "base_url": "http://localhost:8000", "chat_template": "llama3"},
//                "toy": {"type": "toy"}},
//   "roles": {"evaluation": {"backend": "local", "model": "llama-3.1-8b-instruct"}, ...},
//   "dataset": {"path": "reviews.jsonl", "format": "review-jsonl", "policy": "each-vs-rest"},
//   "metrics": ["gem", "gem-s:abstract"],
//   "bootstrap": {"resamples": 10000, "level": 0.95, "sd": "population"},
//   "cache_dir": ".gem-cache", "max_in_flight": 8, "workers": 4
// }
//
// Relative paths resolve against the config file's directory. Environment
// variables only fill endpoint and key fields an openai backend leaves empty.

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gem/core/data.hpp"
#include "gem/error.hpp"
#include "gem/lm/gateway.hpp"
#include "gem/lm/openai_backend.hpp"
#include "gem/lm/toy_backend.hpp"
#include "gem/metrics.hpp"
#include "gem/oracle.hpp"
#include "gem/perturb.hpp"
#include "gem/pmi.hpp"
#include "gem/preprocess.hpp"
#include "gem/stats.hpp"
#include "gem/util/hash.hpp"

namespace gem {

inline const std::vector<std::string>& known_roles() {
  static const std::vector<std::string> roles = {"evaluation", "preprocessing", "perturbation",
                                                 "examiner",   "embedding",     "generation"};
  return roles;
}

struct RoleConfig {
  std::string backend;
  std::string model;
};

struct RunConfig {
  std::uint64_t seed = 0;
  json backends = json::object();  // name -> {"type": ..., options}
  std::map<std::string, RoleConfig> roles;
  std::optional<std::filesystem::path> dataset;
  DatasetFormat format = DatasetFormat::review_jsonl;
  PairingPolicy policy = PairingPolicy::each_vs_rest;
  std::vector<std::string> metrics;
  std::size_t resamples = 10000;
  double level = 0.95;
  stats::SdConvention sd = stats::SdConvention::population;
  std::optional<std::filesystem::path> cache_dir;
  std::size_t max_in_flight = 8;
  std::size_t workers = 1;
  double bleu_epsilon = 0.1;
  std::size_t abstract_max_words = 250;
  std::optional<std::filesystem::path> prompt_dir;
  StrategyModels strategy_models;
  std::vector<std::string> bench_models;
  std::vector<std::string> bench_variants = {"gem", "gem-s:abstract", "gem-s:assw"};
  double bench_level = 0.90;

  static RunConfig from_json(const json& j, const std::filesystem::path& base_dir = ".") {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    if (!j.contains("seed") || !j["seed"].is_number_integer())
      throw ConfigError("config: 'seed' is mandatory and must be an integer");
    c.seed = j["seed"].get<std::uint64_t>();
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : (base_dir / path).lexically_normal();
    };
    try {
      if (j.contains("backends")) c.backends = j["backends"];
      for (auto& [name, b] : c.backends.items()) {
        if (!b.contains("type")) throw ConfigError("backend '" + name + "' has no type");
        if (b.contains("structure")) b["structure"] = resolve(b["structure"].get<std::string>()).string();
      }
      if (j.contains("roles"))
        for (const auto& [role, r] : j["roles"].items()) {
          if (std::find(known_roles().begin(), known_roles().end(), role) == known_roles().end())
            throw ConfigError("unknown role '" + role + "'");
          RoleConfig rc{r.at("backend").get<std::string>(), r.value("model", std::string())};
          if (!c.backends.contains(rc.backend))
            throw ConfigError("role '" + role + "' refers to undefined backend '" + rc.backend + "'");
          c.roles[role] = rc;
        }
      if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        if (d.contains("path")) c.dataset = resolve(d["path"].get<std::string>());
        if (d.contains("format")) c.format = parse_format(d["format"].get<std::string>());
        if (d.contains("policy")) c.policy = parse_policy(d["policy"].get<std::string>());
      }
      if (j.contains("metrics")) c.metrics = j["metrics"].get<std::vector<std::string>>();
      for (const auto& m : c.metrics) (void)MetricSpec::parse(m);
      if (j.contains("bootstrap")) {
        const auto& b = j["bootstrap"];
        c.resamples = b.value("resamples", c.resamples);
        c.level = b.value("level", c.level);
        const auto sd = b.value("sd", std::string("population"));
        if (sd == "population") c.sd = stats::SdConvention::population;
        else if (sd == "sample") c.sd = stats::SdConvention::sample;
        else throw ConfigError("bootstrap.sd must be 'population' or 'sample'");
      }
      if (j.contains("cache_dir") && !j["cache_dir"].is_null()) c.cache_dir = resolve(j["cache_dir"].get<std::string>());
      c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
      c.workers = j.value("workers", c.workers);
      c.bleu_epsilon = j.value("bleu_epsilon", c.bleu_epsilon);
      c.abstract_max_words = j.value("abstract_max_words", c.abstract_max_words);
      if (j.contains("prompt_dir") && !j["prompt_dir"].is_null()) c.prompt_dir = resolve(j["prompt_dir"].get<std::string>());
      if (j.contains("strategy_models")) {
        const auto& s = j["strategy_models"];
        c.strategy_models.completion = s.value("deletion-completion", c.strategy_models.completion);
        c.strategy_models.abstract_only = s.value("abstract-only", c.strategy_models.abstract_only);
        c.strategy_models.rephrase_a = s.value("rephrase-a", c.strategy_models.rephrase_a);
        c.strategy_models.rephrase_b = s.value("rephrase-b", c.strategy_models.rephrase_b);
        c.strategy_models.elongation = s.value("elongation", c.strategy_models.elongation);
      }
      if (j.contains("bench")) {
        const auto& b = j["bench"];
        if (b.contains("models")) c.bench_models = b["models"].get<std::vector<std::string>>();
        if (b.contains("variants")) c.bench_variants = b["variants"].get<std::vector<std::string>>();
        c.bench_level = b.value("level", c.bench_level);
        for (const auto& m : c.bench_variants) (void)MetricSpec::parse(m);
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.resamples < 1000) throw ConfigError("bootstrap.resamples must be at least 1000");
    if (!(c.level > 0 && c.level < 1) || !(c.bench_level > 0 && c.bench_level < 1))
      throw ConfigError("confidence levels must be in (0, 1)");
    if (c.workers == 0 || c.max_in_flight == 0) throw ConfigError("workers and max_in_flight must be positive");
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    auto dir = path.parent_path();
    return from_json(j, dir.empty() ? std::filesystem::path(".") : dir);
  }

  /// Resolved configuration; written next to every report.
  json snapshot() const {
    json j;
    j["seed"] = seed;
    j["backends"] = backends;
    for (auto& [name, b] : j["backends"].items())
      if (b.contains("api_key")) b["api_key"] = "<redacted>";
    json roles_j = json::object();
    for (const auto& [r, rc] : roles) roles_j[r] = {{"backend", rc.backend}, {"model", rc.model}};
    j["roles"] = roles_j;
    j["dataset"] = {{"path", dataset ? json(dataset->string()) : json(nullptr)},
                    {"format", format == DatasetFormat::review_jsonl ? "review-jsonl" : "grading-jsonl"},
                    {"policy", policy == PairingPolicy::each_vs_rest ? "each-vs-rest" : "fixed-candidate"}};
    j["metrics"] = metrics;
    j["bootstrap"] = {{"resamples", resamples}, {"level", level}, {"sd", std::string(stats::to_string(sd))}};
    j["cache_dir"] = cache_dir ? json(cache_dir->string()) : json(nullptr);
    j["max_in_flight"] = max_in_flight;
    j["workers"] = workers;
    j["bleu_epsilon"] = bleu_epsilon;
    j["abstract_max_words"] = abstract_max_words;
    j["prompt_dir"] = prompt_dir ? json(prompt_dir->string()) : json(nullptr);
    j["strategy_models"] = {{"deletion-completion", strategy_models.completion},
                            {"abstract-only", strategy_models.abstract_only},
                            {"rephrase-a", strategy_models.rephrase_a},
                            {"rephrase-b", strategy_models.rephrase_b},
                            {"elongation", strategy_models.elongation}};
    j["bench"] = {{"models", bench_models}, {"variants", bench_variants}, {"level", bench_level}};
    j["prompt_version"] = std::string(prompts::kVersion);
    return j;
  }

  std::string hash() const { return util::sha256_hex(snapshot().dump()); }

  stats::CiSpec ci() const { return {seed, resamples, level, workers}; }
};

inline std::string env_or(const char* name, const std::string& fallback = "") {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

inline std::shared_ptr<lm::Backend> make_backend(const std::string& name, const json& b) {
  const auto type = b.at("type").get<std::string>();
  if (type == "toy") {
    lm::ToyOptions o;
    o.context_limit_bytes = b.value("context_limit_bytes", o.context_limit_bytes);
    o.copy_bonus = b.value("copy_bonus", o.copy_bonus);
    return std::make_shared<lm::ToyBackend>(o);
  }
  if (type == "openai") {
    lm::OpenAiOptions o;
    o.base_url = b.value("base_url", env_or("GEM_BACKEND_URL"));
    o.api_key = b.value("api_key", env_or("GEM_BACKEND_KEY"));
    o.embed_url = b.value("embed_url", env_or("GEM_EMBED_URL"));
    o.chat_template = lm::parse_chat_template(b.value("chat_template", std::string("llama3")));
    o.scoring_max_tokens = b.value("scoring_max_tokens", 0);
    o.timeout = std::chrono::seconds(b.value("timeout_seconds", 600));
    if (o.base_url.empty())
      throw ConfigError("backend '" + name + "': no base_url and GEM_BACKEND_URL is not set");
    return std::make_shared<lm::OpenAiBackend>(o);
  }
  if (type == "oracle") {
    if (!b.contains("structure")) throw ConfigError("oracle backend '" + name + "' needs a structure file");
    oracle::OracleOptions o;
    o.noise_kl = b.value("noise_kl", 0.0);
    o.noise_seed = b.value("noise_seed", std::uint64_t{0});
    return std::make_shared<oracle::OracleBackend>(oracle::read_structure_file(b["structure"].get<std::string>()), o);
  }
  throw ConfigError("backend '" + name + "' has unknown type '" + type + "'");
}

/// Live objects for one run. Backends and gateways are built lazily so a
/// command only needs the roles it uses.
class Runtime {
 public:
  explicit Runtime(RunConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.prompt_dir) prompts_ = prompts::PromptSet(*cfg_.prompt_dir);
  }

  const RunConfig& config() const { return cfg_; }
  const prompts::PromptSet& prompts() const { return prompts_; }

  bool has_role(const std::string& role) const { return cfg_.roles.count(role) > 0; }

  const RoleConfig& role(const std::string& role) const {
    auto it = cfg_.roles.find(role);
    if (it == cfg_.roles.end()) throw ConfigError("config has no '" + role + "' role");
    return it->second;
  }

  lm::Gateway& gateway_for(const std::string& role_name) { return gateway(role(role_name).backend); }

  lm::Gateway& gateway(const std::string& backend_name) {
    std::lock_guard lock(mu_);
    if (auto it = gateways_.find(backend_name); it != gateways_.end()) return *it->second;
    if (!cfg_.backends.contains(backend_name)) throw ConfigError("undefined backend '" + backend_name + "'");
    lm::GatewayOptions o;
    if (cfg_.cache_dir) o.cache_dir = *cfg_.cache_dir / backend_name;
    o.max_in_flight = cfg_.max_in_flight;
    auto gw = std::make_unique<lm::Gateway>(make_backend(backend_name, cfg_.backends[backend_name]), o);
    return *gateways_.emplace(backend_name, std::move(gw)).first->second;
  }

  PmiEngine& evaluation_engine() {
    if (!engine_) {
      auto& r = role("evaluation");
      engine_ = std::make_unique<PmiEngine>(gateway(r.backend), r.model, PmiOptions{true, cfg_.workers});
    }
    return *engine_;
  }

  /// Scorer wired for the given metrics; only the roles they need must exist.
  Scorer scorer(const std::vector<MetricSpec>& metrics) {
    MetricContext ctx;
    ctx.seed = static_cast<std::int64_t>(cfg_.seed);
    ctx.bleu_epsilon = cfg_.bleu_epsilon;
    for (const auto& m : metrics) {
      if (m.needs_logprobs()) ctx.evaluation = &evaluation_engine();
      if (m.needs_embeddings()) {
        ctx.embedding = &gateway_for("embedding");
        ctx.embedding_model = role("embedding").model;
      }
      if (m.needs_examiner()) {
        ctx.examiner = &gateway_for("examiner");
        ctx.examiner_model = role("examiner").model;
      }
    }
    return Scorer(std::move(ctx));
  }

  Preprocessor& preprocessor() {
    if (!prep_) {
      auto& r = role("preprocessing");
      PreprocessOptions o;
      o.model_id = r.model;
      o.abstract_max_words = cfg_.abstract_max_words;
      o.seed = static_cast<std::int64_t>(cfg_.seed);
      prep_ = std::make_unique<Preprocessor>(gateway(r.backend), o, prompts_);
    }
    return *prep_;
  }

  Preprocessor* preprocessor_if_configured() { return has_role("preprocessing") ? &preprocessor() : nullptr; }

  std::unique_ptr<Transform> transform(const std::string& strategy) {
    lm::Gateway* gw = has_role("perturbation") ? &gateway_for("perturbation") : nullptr;
    return make_transform(strategy, gw, cfg_.strategy_models, static_cast<std::int64_t>(cfg_.seed));
  }

 private:
  RunConfig cfg_;
  prompts::PromptSet prompts_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<lm::Gateway>> gateways_;
  std::unique_ptr<PmiEngine> engine_;
  std::unique_ptr<Preprocessor> prep_;
};

}  // namespace gem
