#pragma once

// Sentence splitting and the four-section review layout.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gem/error.hpp"
#include "gem/util/text.hpp"

namespace gem {

/// Sentences of a text plus the separators around them, so that
/// gaps[0] + sentences[0] + gaps[1] + ... + sentences[n-1] + gaps[n] == text.
struct SentenceSplit {
  std::vector<std::string> sentences;
  std::vector<std::string> gaps;

  std::string join() const {
    std::string out = gaps.empty() ? "" : gaps[0];
    for (std::size_t i = 0; i < sentences.size(); ++i) out += sentences[i] + gaps[i + 1];
    return out;
  }

  /// Rebuilds the text from a subset of sentences (in order). Each kept
  /// sentence is followed by the separator that followed it originally,
  /// except the last, which takes the trailing gap.
  std::string join_subset(const std::vector<std::size_t>& keep, const std::vector<std::string>& replacement = {}) const {
    std::string out = gaps.empty() ? "" : gaps[0];
    for (std::size_t k = 0; k < keep.size(); ++k) {
      out += replacement.empty() ? sentences[keep[k]] : replacement[k];
      out += k + 1 == keep.size() ? gaps.back() : gaps[keep[k] + 1];
    }
    if (keep.empty()) out = gaps.empty() ? "" : gaps[0] + (gaps.size() > 1 ? gaps.back() : "");
    return out;
  }
};

inline bool is_sentence_end(char c) { return c == '.' || c == '?' || c == '!'; }

/// Splits at periods, question marks, exclamation points and line breaks.
/// A run of terminators stays with its sentence ("Why?!"). Abbreviations are
/// not special-cased.
inline SentenceSplit split_sentences_with_gaps(std::string_view text) {
  SentenceSplit out;
  std::string gap;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && util::is_space(text[i])) gap.push_back(text[i++]);
    if (i >= text.size()) break;
    out.gaps.push_back(std::move(gap));
    gap.clear();
    const std::size_t start = i;
    while (i < text.size() && text[i] != '\n' && !is_sentence_end(text[i])) ++i;
    while (i < text.size() && is_sentence_end(text[i])) ++i;
    auto sentence = util::trim_right(text.substr(start, i - start));
    out.sentences.emplace_back(sentence);
    gap.assign(text.substr(start + sentence.size(), i - start - sentence.size()));
  }
  out.gaps.push_back(std::move(gap));
  return out;
}

inline std::vector<std::string> split_sentences(std::string_view text) { return split_sentences_with_gaps(text).sentences; }

// --- sectioned reviews -------------------------------------------------------

inline constexpr std::array<std::string_view, 4> kReviewSections = {
    "Summary Of The Paper", "Strengths And Weaknesses", "Clarity, Quality, Novelty And Reproducibility",
    "Summary Of The Review"};

/// Index into kReviewSections for a header line, accepting the singular
/// "Strength And Weaknesses" spelling, any case and an optional colon.
inline std::optional<std::size_t> section_index(std::string_view line) {
  auto t = util::trim(line);
  if (!t.empty() && t.back() == ':') t.remove_suffix(1);
  t = util::trim(t);
  for (std::size_t i = 0; i < kReviewSections.size(); ++i)
    if (util::iequals(t, kReviewSections[i])) return i;
  if (util::iequals(t, "Strength And Weaknesses")) return 1;
  return std::nullopt;
}

struct ReviewSection {
  std::string header;  // header line as written, without its newline; empty for headerless text
  std::optional<std::size_t> kind;  // index into kReviewSections
  std::string body;  // everything up to the next header line, newlines included

  bool operator==(const ReviewSection&) const = default;
};

struct SectionedReview {
  std::string preamble;  // text before the first header
  std::vector<ReviewSection> sections;

  std::string serialize() const {
    std::string out = preamble;
    for (const auto& s : sections) out += s.header + s.body;
    return out;
  }

  bool has_all_sections() const {
    std::array<bool, 4> seen{};
    for (const auto& s : sections)
      if (s.kind) seen[*s.kind] = true;
    for (bool b : seen)
      if (!b) return false;
    return true;
  }

  /// Parses header lines. Text with no recognizable header becomes one
  /// headerless section; `strict` instead requires all four sections.
  static SectionedReview parse(std::string_view text, bool strict = false) {
    SectionedReview r;
    std::size_t pos = 0;
    ReviewSection* cur = nullptr;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      const auto end = nl == std::string_view::npos ? text.size() : nl;
      const auto line = text.substr(pos, end - pos);
      if (auto k = section_index(line)) {
        r.sections.push_back({std::string(line), k, ""});
        cur = &r.sections.back();
        pos = end;
        continue;
      }
      const auto chunk = text.substr(pos, (nl == std::string_view::npos ? text.size() : nl + 1) - pos);
      (cur ? cur->body : r.preamble) += chunk;
      pos += chunk.size();
    }
    if (r.sections.empty()) {
      if (strict) throw ParseError("review has no section headers");
      r.sections.push_back({"", std::nullopt, std::move(r.preamble)});
      r.preamble.clear();
    }
    if (strict && !r.has_all_sections()) {
      for (std::size_t i = 0; i < kReviewSections.size(); ++i) {
        bool found = false;
        for (const auto& s : r.sections) found = found || s.kind == i;
        if (!found) throw ParseError("review lacks section '" + std::string(kReviewSections[i]) + "'");
      }
    }
    return r;
  }
};

}  // namespace gem
