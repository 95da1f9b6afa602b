#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "gem/lm/cache.hpp"
#include "gem/lm/types.hpp"
#include "gem/util/hash.hpp"
#include "gem/util/log.hpp"

namespace gem::lm {

struct GatewayOptions {
  std::optional<std::filesystem::path> cache_dir;
  bool memory_cache = true;
  std::size_t max_in_flight = 8;
  int max_attempts = 5;
  std::chrono::milliseconds backoff_base{200};
};

/// Uniform front for a backend: precondition and integrity checks, caching,
/// bounded retries on transport failures, and a cap on in-flight requests.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions opts = {})
      : backend_(std::move(backend)),
        opts_(std::move(opts)),
        slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, opts_.max_in_flight))) {
    if (!backend_) throw ConfigError("gateway needs a backend");
    if (opts_.cache_dir) disk_ = std::make_unique<DiskCache>(*opts_.cache_dir);
  }

  Backend& backend() { return *backend_; }
  const GatewayOptions& options() const { return opts_; }
  DiskCache* disk_cache() { return disk_.get(); }

  /// Number of requests that actually reached the backend (cache misses).
  std::size_t backend_calls() const { return backend_calls_.load(); }

  std::string complete(const PromptBundle& bundle) {
    if (bundle.forced_output) throw PreconditionError("complete: bundle carries forced_output; use score_forced");
    const json req = request_json("complete", bundle.canonical());
    return cached(req, [&] { return json(invoke([&] { return backend_->complete(bundle); })); })
        .get<std::string>();
  }

  std::vector<TokenScore> score_forced(const PromptBundle& bundle) {
    if (!bundle.forced_output || bundle.forced_output->empty())
      throw PreconditionError("score_forced: forced_output must be present and non-empty");
    if (bundle.params.temperature != 0.0) throw PreconditionError("score_forced: scoring requires temperature 0");
    // The request document is only needed as a cache key.
    const bool keyed = opts_.memory_cache || disk_;
    const json req = keyed ? request_json("score", bundle.canonical()) : json();
    const json res = cached(req, [&] {
      auto toks = invoke([&] { return backend_->score(bundle); });
      check_tokens(toks, *bundle.forced_output);
      json arr = json::array();
      for (const auto& t : toks) arr.push_back(to_json(t));
      return arr;
    });
    std::vector<TokenScore> out;
    out.reserve(res.size());
    for (const auto& j : res) out.push_back(token_from_json(j));
    return out;
  }

  std::vector<double> embed(const std::string& text, const std::string& model_id) {
    if (text.empty()) throw PreconditionError("embed: empty text");
    const json req = request_json("embed", json{{"model_id", model_id}, {"text", text}});
    return cached(req, [&] { return json(invoke([&] { return backend_->embed(text, model_id); })); })
        .get<std::vector<double>>();
  }

  /// Scores `bundle` twice straight against the backend. False means the
  /// backend is not deterministic for scoring and PMI results would drift.
  bool self_test(const PromptBundle& bundle) {
    auto a = invoke([&] { return backend_->score(bundle); });
    auto b = invoke([&] { return backend_->score(bundle); });
    if (a != b) {
      log::warn("backend '" + backend_->name() + "' returned different log-probabilities for identical requests");
      return false;
    }
    return true;
  }

  /// Validates a backend answer against the scoring contract.
  static void check_tokens(std::vector<TokenScore>& toks, const std::string& forced) {
    std::string joined;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      auto& t = toks[i];
      if (t.position != i) throw IntegrityError("token positions are not contiguous from 0");
      if (!(t.logprob <= 0.0)) {
        if (t.logprob > 1e-9 || std::isnan(t.logprob))
          throw IntegrityError("backend returned log-probability " + std::to_string(t.logprob) + " > 0");
        t.logprob = 0.0;
      }
      joined += t.token_text;
    }
    if (joined != forced) throw IntegrityError("scored tokens do not reconstruct forced_output byte-exactly");
  }

 private:
  json request_json(const char* op, json payload) const {
    payload["op"] = op;
    payload["backend"] = backend_->name();
    return payload;
  }

  template <typename Produce>
  json cached(const json& req, Produce&& produce) {
    const bool use_cache = opts_.memory_cache || disk_;
    std::string key;
    if (use_cache) {
      key = util::sha256_hex(req.dump());
      if (opts_.memory_cache) {
        std::shared_lock lock(mem_mu_);
        if (auto it = mem_.find(key); it != mem_.end()) return it->second;
      }
      if (disk_) {
        if (auto hit = disk_->get(key)) {
          remember(key, *hit);
          return *hit;
        }
      }
    }
    json value = produce();
    if (use_cache) {
      if (disk_) disk_->put(key, req, value);
      remember(key, value);
    }
    return value;
  }

  void remember(const std::string& key, const json& value) {
    if (!opts_.memory_cache) return;
    std::unique_lock lock(mem_mu_);
    mem_.emplace(key, value);
  }

  template <typename Call>
  auto invoke(Call&& call) -> decltype(call()) {
    for (int attempt = 1;; ++attempt) {
      slots_.acquire();
      try {
        backend_calls_.fetch_add(1);
        auto result = call();
        slots_.release();
        return result;
      } catch (const TransportError& e) {
        slots_.release();
        if (attempt >= opts_.max_attempts) throw;
        const auto delay = opts_.backoff_base * (1 << (attempt - 1));
        log::warn(std::string("transport error (attempt ") + std::to_string(attempt) + "): " + e.what());
        std::this_thread::sleep_for(delay);
      } catch (...) {
        slots_.release();
        throw;
      }
    }
  }

  std::shared_ptr<Backend> backend_;
  GatewayOptions opts_;
  std::unique_ptr<DiskCache> disk_;
  std::counting_semaphore<> slots_;
  std::atomic<std::size_t> backend_calls_{0};
  std::shared_mutex mem_mu_;
  std::unordered_map<std::string, json> mem_;
};

}  // namespace gem::lm
