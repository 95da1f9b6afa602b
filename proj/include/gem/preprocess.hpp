#pragma once

// LLM preprocessing: judgment normalization and synopsis construction.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gem/core/data.hpp"
#include "gem/error.hpp"
#include "gem/lm/gateway.hpp"
#include "gem/prompts.hpp"
#include "gem/util/hash.hpp"
#include "gem/util/log.hpp"
#include "gem/util/text.hpp"

namespace gem {

inline constexpr std::array<std::string_view, 4> kJudgmentPrefixes = {
    "The reviewer appreciates", "The reviewer criticizes", "The reviewer questions", "The reviewer suggests"};

/// Line starts with exactly one allowed prefix followed by a space (or ends).
inline bool is_judgment_line(std::string_view line) {
  for (auto p : kJudgmentPrefixes) {
    if (line.substr(0, p.size()) != p) continue;
    return line.size() == p.size() || line[p.size()] == ' ';
  }
  return false;
}

struct JudgmentList {
  std::vector<std::string> lines;
  std::string source_hash;

  /// Newline-joined, as embedded in scoring prompts.
  std::string text() const {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) out += (i ? "\n" : "") + lines[i];
    return out;
  }
};

/// Keeps conforming lines of a model output; `dropped` receives the count of
/// non-empty lines that were discarded.
inline std::vector<std::string> conforming_lines(std::string_view output, std::size_t* dropped = nullptr) {
  std::vector<std::string> kept;
  std::size_t bad = 0;
  for (auto line : util::split_lines(output)) {
    auto t = util::trim(line);
    if (t.empty()) continue;
    if (is_judgment_line(t)) kept.emplace_back(t);
    else ++bad;
  }
  if (dropped) *dropped = bad;
  return kept;
}

class NormalizationError : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};

struct TagBlock {
  std::string body;  // text between the tags, untrimmed
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the closing tag
};

/// Finds <tag>...</tag>. The first opening tag is paired with the closing tag
/// that balances it, so nested copies stay inside the body; later duplicate
/// blocks are ignored with a warning.
inline std::optional<TagBlock> extract_tag(std::string_view text, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  const auto start = text.find(open);
  if (start == std::string_view::npos) return std::nullopt;
  std::size_t depth = 1, pos = start + open.size();
  bool nested = false;
  while (depth > 0) {
    const auto o = text.find(open, pos);
    const auto c = text.find(close, pos);
    if (c == std::string_view::npos) return std::nullopt;
    if (o != std::string_view::npos && o < c) {
      ++depth;
      nested = true;
      pos = o + open.size();
    } else {
      --depth;
      pos = c + close.size();
    }
  }
  TagBlock b;
  b.begin = start;
  b.end = pos;
  b.body = std::string(text.substr(start + open.size(), pos - close.size() - start - open.size()));
  if (nested || text.find(open, pos) != std::string_view::npos)
    log::warn("tag <" + std::string(tag) + "> is nested or repeated; using the first outermost block");
  return b;
}

struct PreprocessOptions {
  std::string model_id = "gpt-4o";
  std::size_t abstract_max_words = 250;
  std::optional<std::int64_t> seed = 0;
};

class Preprocessor {
 public:
  Preprocessor(lm::Gateway& gw, PreprocessOptions opts = {}, prompts::PromptSet prompts = {})
      : gw_(gw), opts_(std::move(opts)), prompts_(std::move(prompts)) {}

  JudgmentList normalize(const Response& r) {
    if (util::trim(r.raw_text).empty()) throw PreconditionError("normalize: empty raw_text");
    const auto out = gw_.complete(bundle(prompts_.preprocess(), r.raw_text));
    std::size_t dropped = 0;
    JudgmentList jl;
    jl.lines = conforming_lines(out, &dropped);
    jl.source_hash = util::sha256_hex(r.raw_text);
    if (dropped > 0)
      log::warn("normalize " + r.task_id + "/" + r.author_id + ": dropped " + std::to_string(dropped) +
                " non-conforming line(s)");
    if (jl.lines.empty())
      throw NormalizationError("normalize " + r.task_id + "/" + r.author_id + ": no conforming judgment lines");
    return jl;
  }

  /// Fills `preprocessed_text` in place.
  void preprocess(Response& r) { r.preprocessed_text = normalize(r).text(); }

  std::string make_abstract(const std::string& full_text) {
    if (util::trim(full_text).empty()) throw PreconditionError("make_abstract: empty input");
    auto out = std::string(util::trim(gw_.complete(bundle(prompts_.abstract(), full_text))));
    return cap_words(out, opts_.abstract_max_words);
  }

  /// Author-stated strengths and weaknesses as the two tagged blocks. One
  /// retry (seed + 1) when a block is missing.
  std::string summarize_assw(const std::string& full_text) {
    if (util::trim(full_text).empty()) throw PreconditionError("summarize_assw: empty input");
    for (int attempt = 0; attempt < 2; ++attempt) {
      auto b = bundle(prompts_.assw(), full_text);
      if (attempt > 0 && b.params.seed) b.params.seed = *b.params.seed + 1;
      if (attempt > 0 && !b.params.seed) b.params.seed = 1;
      const auto out = gw_.complete(b);
      auto s = extract_tag(out, "strengths_claimed_by_the_paper");
      auto w = extract_tag(out, "weaknesses_claimed_by_the_paper");
      if (s && w)
        return "<strengths_claimed_by_the_paper>" + s->body + "</strengths_claimed_by_the_paper>\n\n" +
               "<weaknesses_claimed_by_the_paper>" + w->body + "</weaknesses_claimed_by_the_paper>";
      log::warn("summarize_assw: missing tag block (attempt " + std::to_string(attempt + 1) + ")");
    }
    throw ExtractionError("summarize_assw: output lacks a strengths or weaknesses block after retry");
  }

  /// Adds missing synopses of the requested kinds to a task.
  void ensure_synopses(Task& t, const std::vector<std::string>& kinds) {
    for (const auto& k : kinds) {
      if (t.synopsis_text(k)) continue;
      if (k == "abstract") {
        t.abstract = make_abstract(t.full_text);
      } else if (k == "assw") {
        if (t.abstract.empty()) t.abstract = make_abstract(t.full_text);
        t.synopses["assw"] = summarize_assw(t.full_text);
      } else {
        throw ConfigError("no generator for synopsis kind '" + k + "'");
      }
    }
  }

  static std::string cap_words(const std::string& text, std::size_t max_words) {
    std::size_t words = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
      const bool sp = util::is_space(text[i]);
      if (!sp && !in_word && ++words > max_words) return std::string(util::trim_right(text.substr(0, i)));
      in_word = !sp;
    }
    return text;
  }

 private:
  lm::PromptBundle bundle(const std::string& system, const std::string& user) const {
    lm::PromptBundle b;
    b.system = system;
    b.user = user;
    b.params.model_id = opts_.model_id;
    b.params.temperature = 0.0;
    b.params.seed = opts_.seed;
    return b;
  }

  lm::Gateway& gw_;
  PreprocessOptions opts_;
  prompts::PromptSet prompts_;
};

}  // namespace gem
