#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gem/error.hpp"
#include "gem/util/hash.hpp"

namespace gem::lm {

using json = nlohmann::json;

struct GenParams {
  std::string model_id;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;
};

/// A chat-shaped request. Scoring calls carry `forced_output`, the text whose
/// tokens are scored under teacher forcing. `assistant_prefix` is text already
/// present at the start of the assistant turn; it conditions the forced
/// tokens but is not scored (used to split one scoring call into segments).
struct PromptBundle {
  std::string system;
  std::string user;
  std::optional<std::string> assistant_prefix;
  std::optional<std::string> forced_output;
  GenParams params;

  bool is_scoring() const { return forced_output.has_value(); }

  /// Canonical serialization; keys are sorted so equal bundles hash equally.
  json canonical() const {
    json j;
    j["system"] = system;
    j["user"] = user;
    j["assistant_prefix"] = assistant_prefix ? json(*assistant_prefix) : json(nullptr);
    j["forced_output"] = forced_output ? json(*forced_output) : json(nullptr);
    j["model_id"] = params.model_id;
    j["temperature"] = params.temperature;
    j["max_tokens"] = params.max_tokens;
    j["seed"] = params.seed ? json(*params.seed) : json(nullptr);
    return j;
  }

  /// Hash of the assembled prompt (audit trail and cache key preimage).
  std::string hash() const { return util::sha256_hex(canonical().dump()); }

  /// Context-only view of a scoring bundle (same prompt, nothing forced).
  PromptBundle context_only() const {
    PromptBundle b = *this;
    b.forced_output.reset();
    return b;
  }
};

struct TokenScore {
  std::string token_text;
  double logprob = 0.0;  // natural log
  std::size_t position = 0;

  bool operator==(const TokenScore&) const = default;
};

inline json to_json(const TokenScore& t) { return json{{"t", t.token_text}, {"lp", t.logprob}, {"i", t.position}}; }

inline TokenScore token_from_json(const json& j) {
  return TokenScore{j.at("t").get<std::string>(), j.at("lp").get<double>(), j.at("i").get<std::size_t>()};
}

/// Inference backend. Implementations only need to override what they
/// support; the defaults raise CapabilityError naming the backend.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;

  virtual std::string complete(const PromptBundle& bundle) {
    (void)bundle;
    throw CapabilityError("backend '" + name() + "' does not support text generation");
  }

  /// One TokenScore per backend token of forced_output, prompt tokens excluded.
  virtual std::vector<TokenScore> score(const PromptBundle& bundle) {
    (void)bundle;
    throw CapabilityError("backend '" + name() + "' does not expose per-token log-probabilities");
  }

  virtual std::vector<double> embed(const std::string& text, const std::string& model_id) {
    (void)text;
    (void)model_id;
    throw CapabilityError("backend '" + name() + "' has no embedding endpoint");
  }
};

}  // namespace gem::lm
