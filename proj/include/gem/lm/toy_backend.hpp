#pragma once

// Deterministic offline backend. It is not a language model of any quality;
// it exists so the whole pipeline (and its caches and reports) can run and be
// tested without network access.
//
// Scoring is a byte-level autoregressive model: every byte is a token whose
// distribution depends on the previous three bytes of the full context and
// gets a bonus when it continues a 4-gram seen in the user prompt. That makes
// PMI positive when the forced output overlaps the conditioning text, and it
// satisfies the chain rule exactly (splitting the forced output across calls
// with an assistant prefix gives the same token scores).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "gem/lm/types.hpp"
#include "gem/prompts.hpp"
#include "gem/util/rng.hpp"
#include "gem/util/text.hpp"

namespace gem::lm {

struct ToyOptions {
  std::size_t context_limit_bytes = std::size_t{1} << 22;
  double copy_bonus = 4.0;
  std::size_t embedding_dim = 64;
};

class ToyBackend : public Backend {
 public:
  explicit ToyBackend(ToyOptions opts = {}) : opts_(opts) {}

  std::string name() const override { return "toy"; }

  std::string complete(const PromptBundle& b) override {
    check_context(b.system.size() + b.user.size());
    const auto& s = b.system;
    if (s == prompts::kPreprocessSystem) return preprocess(b.user);
    if (s == prompts::kCompletionSystem) return util::replace_all(b.user, prompts::kMissingSentence, "This aspect is also worth noting.");
    if (s == prompts::kAbstractOnlySystem) return abstract_review(b.user);
    if (s == prompts::kRephraseSystem) return rephrase(b.user);
    if (s.rfind("You are given a peer review of a scientific paper, please identify two key", 0) == 0)
      return s.find("weaknesses") != std::string::npos ? "limited baselines and missing ablations"
                                                       : "clear presentation and thorough experiments";
    if (s == prompts::kReviewGenerationSystem) return review(b.user, b.params.model_id);
    if (s == prompts::kAsswSystem) return assw(b.user);
    if (s == prompts::kExaminerSystem) return examine(b.user);
    if (s == prompts::kAbstractSystem) return first_sentences(b.user, 3);
    return b.user.substr(0, std::min<std::size_t>(200, b.user.size()));
  }

  std::vector<TokenScore> score(const PromptBundle& b) override {
    const std::string context = b.system + "\n" + b.user + "\n" + b.assistant_prefix.value_or("");
    check_context(context.size() + b.forced_output->size());
    std::unordered_set<std::uint32_t> grams;
    for (std::size_t i = 0; i + 4 <= b.user.size(); ++i) grams.insert(pack4(b.user.data() + i));

    std::string window = context.size() >= 3 ? context.substr(context.size() - 3) : std::string(3 - context.size(), '\0') + context;
    std::vector<TokenScore> out;
    const std::string& forced = *b.forced_output;
    out.reserve(forced.size());
    std::vector<double> logits(256);
    for (std::size_t pos = 0; pos < forced.size(); ++pos) {
      const auto key3 = (static_cast<std::uint32_t>(static_cast<unsigned char>(window[0])) << 16) |
                        (static_cast<std::uint32_t>(static_cast<unsigned char>(window[1])) << 8) |
                        static_cast<std::uint32_t>(static_cast<unsigned char>(window[2]));
      double mx = -1e300;
      for (int v = 0; v < 256; ++v) {
        double l = base_logit(static_cast<unsigned char>(v));
        l += static_cast<double>(util::splitmix64((std::uint64_t{key3} << 8) | static_cast<unsigned>(v)) >> 11) *
             0x1.0p-53;
        if (grams.count((key3 << 8) | static_cast<unsigned>(v))) l += opts_.copy_bonus;
        logits[v] = l;
        mx = std::max(mx, l);
      }
      double z = 0;
      for (double l : logits) z += std::exp(l - mx);
      const auto c = static_cast<unsigned char>(forced[pos]);
      const double lp = std::min(0.0, logits[c] - mx - std::log(z));
      out.push_back(TokenScore{std::string(1, forced[pos]), lp, pos});
      window.erase(0, 1);
      window.push_back(forced[pos]);
    }
    return out;
  }

  std::vector<double> embed(const std::string& text, const std::string& model_id) override {
    (void)model_id;
    std::vector<double> v(opts_.embedding_dim, 0.0);
    auto words = util::word_tokens(text);
    if (words.empty()) words.push_back(text);
    for (const auto& w : words) {
      const auto h = util::splitmix64(std::hash<std::string>{}(w));
      v[h % v.size()] += (h >> 63) ? 1.0 : 0.5;
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  }

 private:
  static std::uint32_t pack4(const char* p) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(p[3]));
  }

  static double base_logit(unsigned char v) {
    if (v >= 0x20 && v < 0x7f) return (std::isalpha(v) || v == ' ') ? 2.5 : 1.5;
    if (v == '\n') return 1.0;
    return -4.0;
  }

  void check_context(std::size_t bytes) const {
    if (bytes > opts_.context_limit_bytes)
      throw ContextLengthError("toy backend context exceeded", bytes / 4, opts_.context_limit_bytes / 4);
  }

  static std::vector<std::string> sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
      if (c == '\n') {
        if (!util::trim(cur).empty()) out.emplace_back(util::trim(cur));
        cur.clear();
        continue;
      }
      cur.push_back(c);
      if (c == '.' || c == '?' || c == '!') {
        if (!util::trim(cur).empty()) out.emplace_back(util::trim(cur));
        cur.clear();
      }
    }
    if (!util::trim(cur).empty()) out.emplace_back(util::trim(cur));
    return out;
  }

  static std::string first_sentences(const std::string& text, std::size_t k) {
    std::string out;
    auto ss = sentences(text);
    for (std::size_t i = 0; i < ss.size() && i < k; ++i) out += (i ? " " : "") + ss[i];
    return out;
  }

  static std::string preprocess(const std::string& review) {
    std::string out;
    for (const auto& s : sentences(review)) {
      if (s.size() < 12 || s.back() == ':') continue;  // headers and fragments
      const auto lower = util::to_lower_ascii(s);
      const char* verb = "appreciates";
      if (s.back() == '?') verb = "questions";
      else if (lower.find("should") != std::string::npos || lower.find("suggest") != std::string::npos ||
               lower.find("could") != std::string::npos)
        verb = "suggests";
      else if (lower.find("not ") != std::string::npos || lower.find("lack") != std::string::npos ||
               lower.find("weak") != std::string::npos || lower.find("unclear") != std::string::npos)
        verb = "criticizes";
      std::string body;
      for (const auto& w : util::word_tokens(s)) body += (body.empty() ? "" : " ") + w;
      out += std::string("The reviewer ") + verb + " " + body + "\n";
    }
    return out;
  }

  static std::string abstract_review(const std::string& abstract) {
    const auto lead = first_sentences(abstract, 2);
    return "Summary Of The Paper:\n\n" + lead +
           "\n\nStrength And Weaknesses:\n\nThe idea is interesting. The evaluation may be limited.\n\n"
           "Clarity, Quality, Novelty And Reproducibility:\n\nThe abstract is clear.\n\n"
           "Summary Of The Review:\n\nA promising submission.\n";
  }

  static std::string rephrase(const std::string& text) {
    auto out = util::replace_all(text, " paper", " work");
    out = util::replace_all(out, " good", " solid");
    return util::replace_all(out, " very ", " highly ");
  }

  static std::string review(const std::string& paper, const std::string& model) {
    auto ss = sentences(paper);
    if (ss.empty()) ss.push_back("The paper is empty.");
    const auto h = util::splitmix64(std::hash<std::string>{}(model));
    auto pick = [&](std::size_t k) { return ss[(h + k) % ss.size()]; };
    std::string out = "<summary>\n" + pick(0) + "\n</summary>\n<strengths>\n";
    for (int i = 1; i <= 4; ++i) out += std::to_string(i) + ". " + pick(i) + "\n";
    out += "</strengths>\n<weaknesses>\n";
    for (int i = 1; i <= 4; ++i) out += std::to_string(i) + ". The paper does not fully justify: " + pick(i + 4) + "\n";
    out += "</weaknesses>\n<questions>\nHow does the method scale?\n</questions>\n";
    return out;
  }

  static std::string assw(const std::string& paper) {
    const auto ss = sentences(paper);
    std::string s = ss.empty() ? "None stated." : ss.front();
    std::string w = ss.size() > 1 ? ss.back() : "None stated.";
    return "<strengths_claimed_by_the_paper>\n\n" + s + "\n\n</strengths_claimed_by_the_paper>\n\n"
           "<weaknesses_claimed_by_the_paper>\n\n" + w + "\n\n</weaknesses_claimed_by_the_paper>\n";
  }

  static std::string examine(const std::string& user) {
    const auto pos = user.rfind("[Review]");
    const auto review = pos == std::string::npos ? user : user.substr(pos);
    const auto words = util::word_tokens(review).size();
    const int score = static_cast<int>(std::min<std::size_t>(10, 2 + words / 25));
    return "<analysis>\nThe review is assessed on four criteria.\n</analysis>\n<overall_assessment>\nAdequate.\n"
           "</overall_assessment>\n<overall_score>\n" + std::to_string(score) + "\n</overall_score>\n";
  }

  ToyOptions opts_;
};

}  // namespace gem::lm
