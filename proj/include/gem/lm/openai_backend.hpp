#pragma once

// Client for OpenAI-compatible inference servers (vLLM, llama.cpp server,
// TGI, hosted APIs). Generation goes through /v1/chat/completions; scoring
// uses /v1/completions with echo + logprobs over a locally rendered chat
// template, keeping only the tokens that fall inside the forced output.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <regex>
#include <string>
#include <vector>

#include "gem/lm/types.hpp"
#include "gem/util/text.hpp"

namespace gem::lm {

enum class ChatTemplate { llama3, chatml, plain };

inline ChatTemplate parse_chat_template(std::string_view s) {
  if (s == "llama3") return ChatTemplate::llama3;
  if (s == "chatml") return ChatTemplate::chatml;
  if (s == "plain") return ChatTemplate::plain;
  throw ConfigError("unknown chat template '" + std::string(s) + "'");
}

/// Text preceding the first assistant token for (system, user).
inline std::string render_chat_prefix(ChatTemplate t, const std::string& system, const std::string& user) {
  switch (t) {
    case ChatTemplate::llama3:
      return "<|begin_of_text|><|start_header_id|>system<|end_header_id|>\n\n" + system +
             "<|eot_id|><|start_header_id|>user<|end_header_id|>\n\n" + user +
             "<|eot_id|><|start_header_id|>assistant<|end_header_id|>\n\n";
    case ChatTemplate::chatml:
      return "<|im_start|>system\n" + system + "<|im_end|>\n<|im_start|>user\n" + user +
             "<|im_end|>\n<|im_start|>assistant\n";
    case ChatTemplate::plain:
      return system + "\n\n" + user + "\n\n";
  }
  return {};
}

struct OpenAiOptions {
  std::string base_url;  // e.g. http://localhost:8000 or https://host/v1
  std::string api_key;
  std::string embed_url;  // defaults to base_url
  std::string embed_key;  // defaults to api_key
  ChatTemplate chat_template = ChatTemplate::llama3;
  /// Some servers reject max_tokens=0 with echo; 1 works everywhere and the
  /// generated token is ignored.
  int scoring_max_tokens = 0;
  std::chrono::seconds timeout{600};
};

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

inline Endpoint split_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("invalid backend URL '" + url + "'");
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

inline std::string api_path(const Endpoint& ep, const std::string& route) {
  // route is "/chat/completions" etc.; "/v1" is added unless already present.
  if (ep.prefix.size() >= 3 && ep.prefix.compare(ep.prefix.size() - 3, 3, "/v1") == 0) return ep.prefix + route;
  return ep.prefix + "/v1" + route;
}

inline bool mentions_context_limit(const std::string& body) {
  const auto lower = util::to_lower_ascii(body);
  return lower.find("context length") != std::string::npos || lower.find("context_length") != std::string::npos ||
         lower.find("maximum context") != std::string::npos || lower.find("context window") != std::string::npos;
}

/// Pulls "<n> tokens" figures out of a context-overflow message: the first
/// is taken as the limit, the largest of the rest as the request size.
inline std::pair<std::size_t, std::size_t> context_numbers(const std::string& body) {
  static const std::regex re(R"((\d+)\s*tokens)");
  std::vector<std::size_t> nums;
  for (auto it = std::sregex_iterator(body.begin(), body.end(), re); it != std::sregex_iterator(); ++it)
    nums.push_back(std::stoull((*it)[1].str()));
  std::size_t limit = nums.empty() ? 0 : nums.front();
  std::size_t requested = 0;
  for (std::size_t i = 1; i < nums.size(); ++i) requested = std::max(requested, nums[i]);
  return {requested, limit};
}

}  // namespace detail

class OpenAiBackend : public Backend {
 public:
  explicit OpenAiBackend(OpenAiOptions opts) : opts_(std::move(opts)) {
    if (opts_.base_url.empty()) throw ConfigError("OpenAI backend needs a base URL (GEM_BACKEND_URL)");
    if (opts_.embed_url.empty()) opts_.embed_url = opts_.base_url;
    if (opts_.embed_key.empty()) opts_.embed_key = opts_.api_key;
    main_ = detail::split_url(opts_.base_url);
    embed_ep_ = detail::split_url(opts_.embed_url);
  }

  std::string name() const override { return "openai:" + opts_.base_url; }

  std::string complete(const PromptBundle& b) override {
    json req = {{"model", b.params.model_id},
                {"messages",
                 json::array({{{"role", "system"}, {"content", b.system}}, {{"role", "user"}, {"content", b.user}}})},
                {"temperature", b.params.temperature},
                {"max_tokens", b.params.max_tokens}};
    if (b.params.seed) req["seed"] = *b.params.seed;
    const json res = post(main_, "/chat/completions", req, opts_.api_key);
    try {
      const auto& content = res.at("choices").at(0).at("message").at("content");
      if (content.is_null()) throw ParseError("chat completion returned null content");
      return content.get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("unexpected chat completion payload: ") + e.what());
    }
  }

  std::vector<TokenScore> score(const PromptBundle& b) override {
    const std::string context =
        render_chat_prefix(opts_.chat_template, b.system, b.user) + b.assistant_prefix.value_or("");
    const std::string& forced = *b.forced_output;
    const std::string full = context + forced;
    json req = {{"model", b.params.model_id}, {"prompt", full},          {"max_tokens", opts_.scoring_max_tokens},
                {"temperature", 0.0},         {"logprobs", 1},           {"echo", true}};
    const json res = post(main_, "/completions", req, opts_.api_key);
    json tokens, lps;
    try {
      const auto& lp = res.at("choices").at(0).at("logprobs");
      if (lp.is_null()) throw CapabilityError("backend '" + name() + "' returned no logprobs for echo scoring");
      tokens = lp.at("tokens");
      lps = lp.at("token_logprobs");
    } catch (const json::exception&) {
      throw CapabilityError("backend '" + name() + "' does not support echo+logprobs scoring on /v1/completions");
    }
    return select_forced(tokens, lps, context.size(), full);
  }

  std::vector<double> embed(const std::string& text, const std::string& model_id) override {
    const json res = post(embed_ep_, "/embeddings", json{{"model", model_id}, {"input", text}}, opts_.embed_key);
    try {
      return res.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception&) {
      throw CapabilityError("backend '" + opts_.embed_url + "' returned no embedding");
    }
  }

  /// Maps an echoed token stream onto the forced span [context_bytes, full.size()).
  static std::vector<TokenScore> select_forced(const json& tokens, const json& lps, std::size_t context_bytes,
                                               const std::string& full) {
    if (!tokens.is_array() || !lps.is_array() || tokens.size() != lps.size())
      throw IntegrityError("echo logprobs: token and logprob arrays disagree");
    std::vector<TokenScore> out;
    std::size_t offset = 0;
    std::string rebuilt;
    for (std::size_t i = 0; i < tokens.size() && offset < full.size(); ++i) {
      const auto text = tokens[i].get<std::string>();
      const std::size_t begin = offset, end = offset + text.size();
      rebuilt += text;
      offset = end;
      if (end <= context_bytes) continue;
      if (begin < context_bytes)
        throw IntegrityError("a backend token straddles the prompt/forced-output boundary");
      if (end > full.size()) throw IntegrityError("echoed tokens overrun the forced output");
      if (lps[i].is_null()) throw IntegrityError("missing log-probability for a forced token");
      out.push_back(TokenScore{text, lps[i].get<double>(), out.size()});
    }
    if (rebuilt != full) throw IntegrityError("echoed tokens do not reproduce the submitted prompt");
    return out;
  }

 private:
  json post(const detail::Endpoint& ep, const std::string& route, const json& body, const std::string& key) const {
    httplib::Client cli(ep.origin);
    cli.set_connection_timeout(std::chrono::seconds(30));
    cli.set_read_timeout(opts_.timeout);
    cli.set_write_timeout(opts_.timeout);
    httplib::Headers headers;
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    const auto path = detail::api_path(ep, route);
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("POST " + ep.origin + path + " failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
      throw TransportError("POST " + path + " returned HTTP " + std::to_string(res->status));
    if (res->status < 200 || res->status >= 300) {
      if (detail::mentions_context_limit(res->body)) {
        auto [requested, limit] = detail::context_numbers(res->body);
        throw ContextLengthError("context length exceeded: " + res->body, requested, limit);
      }
      throw Error("POST " + path + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("backend returned invalid JSON: ") + e.what());
    }
  }

  OpenAiOptions opts_;
  detail::Endpoint main_;
  detail::Endpoint embed_ep_;
};

}  // namespace gem::lm
