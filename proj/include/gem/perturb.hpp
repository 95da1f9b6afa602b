#pragma once

// Response transforms (degradations and manipulations) and the paired
// pre/post scoring workflow used to validate a metric.

#include <algorithm>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gem/core/data.hpp"
#include "gem/error.hpp"
#include "gem/lm/gateway.hpp"
#include "gem/metrics.hpp"
#include "gem/preprocess.hpp"
#include "gem/prompts.hpp"
#include "gem/review.hpp"
#include "gem/stats.hpp"
#include "gem/util/log.hpp"
#include "gem/util/parallel.hpp"

namespace gem {

// --- pure transforms ---------------------------------------------------------

/// Keeps sentences at odd 1-based positions in every section.
inline SectionedReview sentence_deletion(const SectionedReview& in) {
  SectionedReview out = in;
  for (auto& s : out.sections) {
    const auto split = split_sentences_with_gaps(s.body);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < split.sentences.size(); i += 2) keep.push_back(i);
    if (!split.sentences.empty()) s.body = split.join_subset(keep);
  }
  return out;
}

/// Replaces sentences at even 1-based positions with the placeholder.
/// Returns the number of placeholders inserted through `placeholders`.
inline SectionedReview deletion_intermediate(const SectionedReview& in, std::size_t* placeholders = nullptr) {
  SectionedReview out = in;
  std::size_t count = 0;
  for (auto& s : out.sections) {
    const auto split = split_sentences_with_gaps(s.body);
    if (split.sentences.size() < 2) continue;
    std::vector<std::size_t> all(split.sentences.size());
    std::iota(all.begin(), all.end(), 0);
    auto repl = split.sentences;
    for (std::size_t i = 1; i < repl.size(); i += 2) {
      repl[i] = prompts::kMissingSentence;
      ++count;
    }
    s.body = split.join_subset(all, repl);
  }
  if (placeholders) *placeholders = count;
  return out;
}

/// Sentences that survive deletion (odd positions), in order.
inline std::vector<std::string> retained_sentences(const SectionedReview& in) {
  std::vector<std::string> out;
  for (const auto& s : in.sections) {
    const auto ss = split_sentences(s.body);
    for (std::size_t i = 0; i < ss.size(); i += 2) out.push_back(ss[i]);
  }
  return out;
}

inline bool retains_verbatim(const std::string& output, const std::vector<std::string>& sentences) {
  std::size_t from = 0;
  for (const auto& s : sentences) {
    const auto at = output.find(s, from);
    if (at == std::string::npos) return false;
    from = at + s.size();
  }
  return output.find(prompts::kMissingSentence) == std::string::npos;
}

/// Fixed lead-in text for a section kind, with the two summaries filled in.
inline std::string elongation_lead(std::size_t kind, const std::string& strength_summary,
                                   const std::string& weakness_summary) {
  switch (kind) {
    case 0: return prompts::kElongationPaperSummary;
    case 1:
      return prompts::fill_template(prompts::kElongationStrengths,
                                    {{"strength_summary", strength_summary}, {"weakness_summary", weakness_summary}});
    case 2: return prompts::kElongationClarity;
    default: return prompts::kElongationReviewSummary;
  }
}

/// Inserts the lead-in at the start of every section's content (after the
/// blank lines that follow the header).
inline SectionedReview elongate_with(const SectionedReview& in, const std::string& strength_summary,
                                     const std::string& weakness_summary) {
  SectionedReview out = in;
  for (auto& s : out.sections) {
    if (!s.kind) throw PreconditionError("elongation needs the four-section review layout");
    std::size_t lead_ws = 0;
    while (lead_ws < s.body.size() && util::is_space(s.body[lead_ws])) ++lead_ws;
    s.body.insert(lead_ws, elongation_lead(*s.kind, strength_summary, weakness_summary));
  }
  return out;
}

/// Inverse of elongate_with given the same summaries.
inline SectionedReview strip_elongation(const SectionedReview& in, const std::string& strength_summary,
                                        const std::string& weakness_summary) {
  SectionedReview out = in;
  for (auto& s : out.sections) {
    if (!s.kind) throw PreconditionError("elongation needs the four-section review layout");
    const auto lead = elongation_lead(*s.kind, strength_summary, weakness_summary);
    std::size_t lead_ws = 0;
    while (lead_ws < s.body.size() && util::is_space(s.body[lead_ws])) ++lead_ws;
    if (s.body.compare(lead_ws, lead.size(), lead) != 0)
      throw ValidationError("section '" + s.header + "' does not start with the elongation text");
    s.body.erase(lead_ws, lead.size());
  }
  return out;
}

/// Replaces the bodies of `original` with those of `generated`, matched by
/// section kind, so header lines stay byte-identical.
inline SectionedReview rebuild_with_headers(const SectionedReview& original, const std::string& generated) {
  const bool headerless = original.sections.size() == 1 && !original.sections[0].kind;
  SectionedReview out = original;
  if (headerless) {
    out.sections[0].body = generated;
    return out;
  }
  const auto parsed = SectionedReview::parse(generated);
  for (auto& s : out.sections) {
    if (!s.kind) continue;
    auto it = std::find_if(parsed.sections.begin(), parsed.sections.end(),
                           [&](const ReviewSection& p) { return p.kind == s.kind; });
    if (it == parsed.sections.end())
      throw ParseError("rewritten review lacks section '" + std::string(kReviewSections[*s.kind]) + "'");
    s.body = it->body;
  }
  return out;
}

// --- strategy interface ------------------------------------------------------

class Transform {
 public:
  virtual ~Transform() = default;
  virtual std::string name() const = 0;
  /// x' for candidate x of task w. The result is raw text; preprocessing
  /// happens afterwards.
  virtual Response apply(const Task& w, const Response& x) = 0;

 protected:
  Response derived(const Response& x, std::string text) const {
    Response out = x;
    out.raw_text = std::move(text);
    out.preprocessed_text.reset();
    out.extra["strategy"] = name();
    return out;
  }
};

class IdentityTransform : public Transform {
 public:
  std::string name() const override { return "identity"; }
  Response apply(const Task&, const Response& x) override {
    Response out = x;
    out.extra["strategy"] = name();
    return out;
  }
};

class SentenceDeletionTransform : public Transform {
 public:
  std::string name() const override { return "sentence-deletion"; }
  Response apply(const Task&, const Response& x) override {
    return derived(x, sentence_deletion(SectionedReview::parse(x.raw_text)).serialize());
  }
};

/// Shared plumbing for LLM-backed strategies.
class LlmTransform : public Transform {
 public:
  LlmTransform(lm::Gateway& gw, std::string model, std::optional<std::int64_t> seed)
      : gw_(gw), model_(std::move(model)), seed_(seed) {}

 protected:
  std::string generate(const std::string& system, const std::string& user, int attempt) {
    lm::PromptBundle b;
    b.system = system;
    b.user = user;
    b.params.model_id = model_;
    b.params.temperature = 0.0;
    b.params.seed = seed_;
    if (attempt > 0) b.params.seed = seed_.value_or(0) + attempt;
    return gw_.complete(b);
  }

  lm::Gateway& gw_;
  std::string model_;
  std::optional<std::int64_t> seed_;
};

class DeletionCompletionTransform : public LlmTransform {
 public:
  using LlmTransform::LlmTransform;
  std::string name() const override { return "deletion-completion"; }

  Response apply(const Task&, const Response& x) override {
    const auto review = SectionedReview::parse(x.raw_text);
    std::size_t holes = 0;
    const auto intermediate = deletion_intermediate(review, &holes);
    if (holes == 0) return derived(x, x.raw_text);
    const auto keep = retained_sentences(review);
    for (int attempt = 0; attempt < 2; ++attempt) {
      const auto out = generate(prompts::kCompletionSystem, intermediate.serialize(), attempt);
      if (retains_verbatim(out, keep)) {
        try {
          return derived(x, rebuild_with_headers(review, out).serialize());
        } catch (const ParseError& e) {
          log::warn(std::string("deletion-completion: ") + e.what());
          continue;
        }
      }
      log::warn("deletion-completion: output for " + x.task_id + "/" + x.author_id +
                " does not keep the retained sentences verbatim (attempt " + std::to_string(attempt + 1) + ")");
    }
    throw IntegrityError("deletion-completion: retained sentences not preserved after retry for " + x.task_id + "/" +
                         x.author_id);
  }
};

class AbstractOnlyTransform : public LlmTransform {
 public:
  using LlmTransform::LlmTransform;
  std::string name() const override { return "abstract-only"; }

  Response apply(const Task& w, const Response& x) override {
    auto abstract = w.synopsis_text("abstract");
    if (!abstract) throw PreconditionError("abstract-only: task '" + w.id + "' has no abstract");
    for (int attempt = 0;; ++attempt) {
      const auto out = generate(prompts::kAbstractOnlySystem, *abstract, attempt);
      try {
        return derived(x, SectionedReview::parse(out, true).serialize());
      } catch (const ParseError& e) {
        if (attempt >= 1) throw;
        log::warn(std::string("abstract-only: ") + e.what() + "; retrying once");
      }
    }
  }
};

class RephraseTransform : public LlmTransform {
 public:
  RephraseTransform(std::string label, lm::Gateway& gw, std::string model, std::optional<std::int64_t> seed)
      : LlmTransform(gw, std::move(model), seed), label_(std::move(label)) {}
  std::string name() const override { return label_; }

  Response apply(const Task&, const Response& x) override {
    if (util::trim(x.raw_text).empty()) return derived(x, x.raw_text);
    const auto review = SectionedReview::parse(x.raw_text);
    for (int attempt = 0;; ++attempt) {
      const auto out = generate(prompts::kRephraseSystem, x.raw_text, attempt);
      try {
        return derived(x, rebuild_with_headers(review, out).serialize());
      } catch (const ParseError& e) {
        if (attempt >= 1) throw;
        log::warn(std::string(label_ + ": ") + e.what() + "; retrying once");
      }
    }
  }

 private:
  std::string label_;
};

class ElongationTransform : public LlmTransform {
 public:
  using LlmTransform::LlmTransform;
  std::string name() const override { return "elongation"; }

  /// One-line "A and B" summary of the review's strengths or weaknesses.
  std::string summary(const std::string& review, const std::string& kind) {
    const auto out = generate(prompts::fill_template(prompts::kElongationSummarySystem, {{"kind", kind}}), review, 0);
    for (auto line : util::split_lines(out)) {
      auto t = util::trim(line);
      while (!t.empty() && t.back() == '.') t.remove_suffix(1);
      if (!t.empty()) return std::string(t);
    }
    throw Error("elongation: empty " + kind + " summary");
  }

  Response apply(const Task&, const Response& x) override {
    const auto review = SectionedReview::parse(x.raw_text);
    const auto s = summary(x.raw_text, "strengths");
    const auto w = summary(x.raw_text, "weaknesses");
    auto out = derived(x, elongate_with(review, s, w).serialize());
    out.extra["elongation"] = {{"strength_summary", s}, {"weakness_summary", w}};
    return out;
  }
};

/// Models used by the LLM strategies. The abstract-only review comes from a
/// different model than the completion step by default.
struct StrategyModels {
  std::string completion = "gpt-4o";
  std::string abstract_only = "claude-3-sonnet";
  std::string rephrase_a = "gpt-4o";
  std::string rephrase_b = "llama-3.1-8b-instruct";
  std::string elongation = "gpt-4o";
};

inline const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names = {"sentence-deletion", "deletion-completion", "abstract-only",
                                                 "rephrase-a",        "rephrase-b",          "elongation",
                                                 "identity"};
  return names;
}

inline std::unique_ptr<Transform> make_transform(const std::string& name, lm::Gateway* gw,
                                                 const StrategyModels& models = {},
                                                 std::optional<std::int64_t> seed = 0) {
  if (name == "identity") return std::make_unique<IdentityTransform>();
  if (name == "sentence-deletion") return std::make_unique<SentenceDeletionTransform>();
  if (std::find(strategy_names().begin(), strategy_names().end(), name) == strategy_names().end())
    throw ConfigError("unknown strategy '" + name + "'");
  if (!gw) throw ConfigError("strategy '" + name + "' needs a perturbation backend");
  if (name == "deletion-completion") return std::make_unique<DeletionCompletionTransform>(*gw, models.completion, seed);
  if (name == "abstract-only") return std::make_unique<AbstractOnlyTransform>(*gw, models.abstract_only, seed);
  if (name == "rephrase-a") return std::make_unique<RephraseTransform>(name, *gw, models.rephrase_a, seed);
  if (name == "rephrase-b") return std::make_unique<RephraseTransform>(name, *gw, models.rephrase_b, seed);
  return std::make_unique<ElongationTransform>(*gw, models.elongation, seed);
}

// --- validation workflow -----------------------------------------------------

struct ValidationFailure {
  std::size_t index = 0;
  std::string tuple_id;
  std::string message;
};

struct ValidationResult {
  std::string metric;
  std::string strategy;
  stats::PairedScores pairs;  // sorted by tuple id
  stats::SmdReport smd;
  stats::Significance significance = stats::Significance::none;
  std::vector<ValidationFailure> failures;
  std::size_t tuples = 0;
};

struct ValidationOptions {
  stats::CiSpec ci;
  stats::SdConvention convention = stats::SdConvention::population;
  std::size_t workers = 1;
};

/// Fills missing preprocessed forms of a tuple in place.
inline void preprocess_tuple(EvalTuple& t, Preprocessor& prep) {
  if (!t.candidate.preprocessed_text) prep.preprocess(t.candidate);
  for (auto& r : t.references)
    if (!r.preprocessed_text) prep.preprocess(r);
}

/// s_i = f(w_i, x_i, y_i) and s'_i = f(w_i, x'_i, y_i) with x'_i = M(x_i), per
/// tuple, then the standardized mean difference of s' against s.
inline ValidationResult run_validation(std::vector<EvalTuple> tuples, Scorer& scorer, const MetricSpec& metric,
                                       Transform& strategy, Preprocessor* prep, const ValidationOptions& opts) {
  if (tuples.empty()) throw PreconditionError("run_validation: no tuples");
  if (metric.needs_preprocessing() && !prep)
    for (const auto& t : tuples)
      if (!t.candidate.preprocessed_text) throw PipelineOrderError("metric " + metric.label() + " needs preprocessing");
  struct Row {
    std::optional<double> pre, post;
    std::string error;
  };
  std::vector<Row> rows(tuples.size());
  util::parallel_for(tuples.size(), opts.workers, [&](std::size_t i) {
    auto& t = tuples[i];
    try {
      if (metric.needs_preprocessing() && prep) preprocess_tuple(t, *prep);
      const auto pre = score_tuple(scorer, metric, t);
      if (!pre.value) throw Error(pre.failures.empty() ? "no score" : pre.failures.front());
      EvalTuple moved = t;
      moved.candidate = strategy.apply(*t.task, t.candidate);
      if (metric.needs_preprocessing() && !moved.candidate.preprocessed_text) {
        if (!prep) throw PipelineOrderError("transformed response needs preprocessing");
        prep->preprocess(moved.candidate);
      }
      const auto post = score_tuple(scorer, metric, moved);
      if (!post.value) throw Error(post.failures.empty() ? "no score" : post.failures.front());
      rows[i].pre = pre.value;
      rows[i].post = post.value;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      rows[i].error = e.what();
    }
  });

  ValidationResult res;
  res.metric = metric.label();
  res.strategy = strategy.name();
  res.tuples = tuples.size();
  std::vector<std::size_t> order(tuples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return tuples[a].id() < tuples[b].id(); });
  for (auto i : order) {
    if (rows[i].pre && rows[i].post) {
      res.pairs.ids.push_back(tuples[i].id());
      res.pairs.pre.push_back(*rows[i].pre);
      res.pairs.post.push_back(*rows[i].post);
    } else {
      res.failures.push_back({i, tuples[i].id(), rows[i].error});
    }
  }
  if (!res.failures.empty())
    log::warn("validation: " + std::to_string(res.failures.size()) + " of " + std::to_string(tuples.size()) +
              " tuples failed");
  if (res.pairs.size() < 2) throw Error("validation: fewer than 2 tuples scored successfully");
  if (res.pairs.pre == res.pairs.post) {
    // No change at all: d is 0 by definition even when the scores have no spread.
    res.smd.n = res.pairs.size();
    res.smd.mu = res.smd.mu_prime = stats::mean(res.pairs.pre);
    res.smd.sigma = res.smd.sigma_prime = stats::stddev(res.pairs.pre, opts.convention);
    res.smd.convention = opts.convention;
    res.smd.ci = opts.ci;
  } else {
    res.smd = stats::smd(res.pairs, opts.ci, opts.convention);
  }
  res.significance = stats::significance(res.smd);
  return res;
}

}  // namespace gem
