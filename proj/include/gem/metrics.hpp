#pragma once

// Evaluation metrics: the GEM family plus the BLEU, ROUGE-L, BERTScore,
// BARTScore and LM-examiner baselines, behind one scoring entry point.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gem/core/data.hpp"
#include "gem/error.hpp"
#include "gem/lm/gateway.hpp"
#include "gem/pmi.hpp"
#include "gem/preprocess.hpp"
#include "gem/prompts.hpp"
#include "gem/review.hpp"
#include "gem/stats.hpp"
#include "gem/util/parallel.hpp"
#include "gem/util/text.hpp"

namespace gem {

enum class MetricName {
  gem,
  gem_raw,
  gem_s,
  bleu,
  rouge_l,
  bertscore,
  bartscore_precision,
  bartscore_recall,
  bartscore_f1,
  lm_examiner
};

/// Which inputs a metric reads: task + both responses, the two responses,
/// or task + candidate only.
enum class MetricInputs { wxy, xy, wx };

struct MetricSpec {
  MetricName name = MetricName::gem;
  std::optional<std::string> synopsis_kind;  // gem-s only

  /// "gem", "gem-raw", "gem-s:abstract", "bleu", "rouge-l", "bertscore",
  /// "bartscore-precision", "bartscore-recall", "bartscore-f1", "lm-examiner".
  static MetricSpec parse(std::string_view text) {
    static const std::map<std::string, MetricName, std::less<>> names = {
        {"gem", MetricName::gem},
        {"gem-raw", MetricName::gem_raw},
        {"gem-s", MetricName::gem_s},
        {"bleu", MetricName::bleu},
        {"rouge-l", MetricName::rouge_l},
        {"bertscore", MetricName::bertscore},
        {"bartscore-precision", MetricName::bartscore_precision},
        {"bartscore-recall", MetricName::bartscore_recall},
        {"bartscore-f1", MetricName::bartscore_f1},
        {"lm-examiner", MetricName::lm_examiner}};
    MetricSpec s;
    auto colon = text.find(':');
    auto it = names.find(text.substr(0, colon));
    if (it == names.end()) throw ConfigError("unknown metric '" + std::string(text) + "'");
    s.name = it->second;
    if (colon != std::string_view::npos) {
      if (s.name != MetricName::gem_s) throw ConfigError("only gem-s takes a synopsis kind: '" + std::string(text) + "'");
      s.synopsis_kind = std::string(text.substr(colon + 1));
      if (s.synopsis_kind->empty()) throw ConfigError("empty synopsis kind in '" + std::string(text) + "'");
    }
    if (s.name == MetricName::gem_s && !s.synopsis_kind)
      throw ConfigError("gem-s requires a synopsis kind, e.g. gem-s:abstract");
    return s;
  }

  std::string label() const {
    switch (name) {
      case MetricName::gem: return "gem";
      case MetricName::gem_raw: return "gem-raw";
      case MetricName::gem_s: return "gem-s:" + synopsis_kind.value_or("?");
      case MetricName::bleu: return "bleu";
      case MetricName::rouge_l: return "rouge-l";
      case MetricName::bertscore: return "bertscore";
      case MetricName::bartscore_precision: return "bartscore-precision";
      case MetricName::bartscore_recall: return "bartscore-recall";
      case MetricName::bartscore_f1: return "bartscore-f1";
      case MetricName::lm_examiner: return "lm-examiner";
    }
    return "?";
  }

  MetricInputs inputs() const {
    switch (name) {
      case MetricName::gem_s: return MetricInputs::wxy;
      case MetricName::lm_examiner: return MetricInputs::wx;
      default: return MetricInputs::xy;
    }
  }

  bool needs_preprocessing() const { return name == MetricName::gem || name == MetricName::gem_s; }
  bool needs_logprobs() const {
    return name == MetricName::gem || name == MetricName::gem_raw || name == MetricName::gem_s ||
           name == MetricName::bartscore_precision || name == MetricName::bartscore_recall ||
           name == MetricName::bartscore_f1;
  }
  bool needs_embeddings() const { return name == MetricName::bertscore; }
  bool needs_examiner() const { return name == MetricName::lm_examiner; }

  bool operator==(const MetricSpec&) const = default;
};

// --- lexical baselines -------------------------------------------------------

/// Sentence-level BLEU of `candidate` against one reference on lowercase
/// word tokens: up to 4-grams, uniform weights, brevity penalty. An order
/// with matches m_n = 0 uses epsilon / t_n; orders the candidate is too short
/// to have are left out. No unigram overlap gives 0.
inline double bleu(std::string_view candidate, std::string_view reference, double epsilon = 0.1) {
  const auto c = util::word_tokens(candidate);
  const auto r = util::word_tokens(reference);
  if (c.empty() || r.empty()) throw PreconditionError("bleu: empty input");
  double log_sum = 0;
  int orders = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    if (c.size() < n) break;
    std::map<std::vector<std::string>, std::size_t> ref_counts, cand_counts;
    for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[{r.begin() + i, r.begin() + i + n}];
    for (std::size_t i = 0; i + n <= c.size(); ++i) ++cand_counts[{c.begin() + i, c.begin() + i + n}];
    std::size_t matches = 0;
    for (const auto& [g, k] : cand_counts)
      if (auto it = ref_counts.find(g); it != ref_counts.end()) matches += std::min(k, it->second);
    const double total = static_cast<double>(c.size() - n + 1);
    if (n == 1 && matches == 0) return 0.0;
    log_sum += std::log(matches > 0 ? static_cast<double>(matches) / total : epsilon / total);
    ++orders;
  }
  const double bp = c.size() > r.size() ? 1.0 : std::exp(1.0 - static_cast<double>(r.size()) / static_cast<double>(c.size()));
  return std::clamp(bp * std::exp(log_sum / orders), 0.0, 1.0);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// ROUGE-L F-measure (beta = 1) on lowercase word tokens.
inline double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = util::word_tokens(candidate);
  const auto r = util::word_tokens(reference);
  if (c.empty() || r.empty()) throw PreconditionError("rouge-l: empty input");
  const auto l = static_cast<double>(lcs_length(c, r));
  if (l == 0) return 0.0;
  const double p = l / static_cast<double>(c.size()), rec = l / static_cast<double>(r.size());
  return 2 * p * rec / (p + rec);
}

// --- embedding baseline ------------------------------------------------------

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw IntegrityError("embedding dimensions differ");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

struct BertScoreParts {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Greedy matching over sentence embeddings: each candidate sentence takes
/// its best reference cosine (precision) and vice versa (recall); cosines
/// below zero count as zero.
inline BertScoreParts bertscore_from_embeddings(const std::vector<std::vector<double>>& cand,
                                                const std::vector<std::vector<double>>& ref) {
  if (cand.empty() || ref.empty()) throw PreconditionError("bertscore: no sentences");
  std::vector<std::vector<double>> sim(cand.size(), std::vector<double>(ref.size()));
  for (std::size_t i = 0; i < cand.size(); ++i)
    for (std::size_t j = 0; j < ref.size(); ++j) sim[i][j] = std::max(0.0, cosine(cand[i], ref[j]));
  BertScoreParts p;
  for (std::size_t i = 0; i < cand.size(); ++i) p.precision += *std::max_element(sim[i].begin(), sim[i].end());
  p.precision /= static_cast<double>(cand.size());
  for (std::size_t j = 0; j < ref.size(); ++j) {
    double best = 0;
    for (std::size_t i = 0; i < cand.size(); ++i) best = std::max(best, sim[i][j]);
    p.recall += best;
  }
  p.recall /= static_cast<double>(ref.size());
  p.f1 = p.precision + p.recall > 0 ? 2 * p.precision * p.recall / (p.precision + p.recall) : 0.0;
  p.precision = std::min(p.precision, 1.0);
  p.recall = std::min(p.recall, 1.0);
  p.f1 = std::min(p.f1, 1.0);
  return p;
}

// --- examiner parsing --------------------------------------------------------

/// Reads the number inside <overall_score>; ParseError when missing or not a
/// number, RangeError outside [0, 10].
inline double parse_examiner_score(std::string_view output) {
  auto block = extract_tag(output, "overall_score");
  if (!block) throw ParseError("examiner output has no <overall_score> block");
  const std::string body(util::trim(block->body));
  double v = 0;
  std::size_t used = 0;
  try {
    v = std::stod(body, &used);
  } catch (const std::exception&) {
    throw ParseError("examiner score '" + body + "' is not a number");
  }
  if (used != body.size() || !std::isfinite(v)) throw ParseError("examiner score '" + body + "' is not a number");
  if (v < 0 || v > 10) throw RangeError("examiner score " + body + " outside [0, 10]");
  return v;
}

// --- scorer ------------------------------------------------------------------

/// Backends a metric may need, each with the model it should use. Pointers
/// may be null when no configured metric needs that role.
struct MetricContext {
  PmiEngine* evaluation = nullptr;  // GEM family and BARTScore
  lm::Gateway* embedding = nullptr;
  std::string embedding_model;
  lm::Gateway* examiner = nullptr;
  std::string examiner_model;
  std::optional<std::int64_t> seed = 0;
  double bleu_epsilon = 0.1;
  ScoringTemplate judgment_template = ScoringTemplate::judgment_prediction();
  ScoringTemplate bart_template = ScoringTemplate::bart();
};

class Scorer {
 public:
  explicit Scorer(MetricContext ctx) : ctx_(std::move(ctx)) {}

  const MetricContext& context() const { return ctx_; }

  /// f(w, x, y) for one candidate x and one reference y.
  ScoreRecord score(const MetricSpec& m, const Task& w, const Response& x, const Response& y) {
    ScoreRecord r;
    r.tuple_id = x.task_id + "::" + x.author_id;
    r.reference_author = y.author_id;
    r.metric_name = m.label();
    switch (m.name) {
      case MetricName::gem:
        fill_pmi(r, engine().pmi(judgments(x), judgments(y), ctx_.judgment_template));
        break;
      case MetricName::gem_raw:
        fill_pmi(r, engine().pmi(nonempty(x.raw_text), nonempty(y.raw_text), ctx_.judgment_template));
        break;
      case MetricName::gem_s: {
        auto z = w.synopsis_text(*m.synopsis_kind);
        if (!z) throw ValidationError("task '" + w.id + "' has no synopsis of kind '" + *m.synopsis_kind + "'");
        fill_pmi(r, engine().conditional_pmi(judgments(x), judgments(y), *z, ctx_.judgment_template));
        break;
      }
      case MetricName::bleu:
        r.value = bleu(x.raw_text, y.raw_text, ctx_.bleu_epsilon);
        break;
      case MetricName::rouge_l:
        r.value = rouge_l(x.raw_text, y.raw_text);
        break;
      case MetricName::bertscore: {
        const auto p = bertscore_parts(x.raw_text, y.raw_text);
        r.value = p.f1;
        r.components = {{"precision", p.precision}, {"recall", p.recall}};
        r.model_id = ctx_.embedding_model;
        break;
      }
      case MetricName::bartscore_precision:
      case MetricName::bartscore_recall:
      case MetricName::bartscore_f1: {
        const double rec = mean_token_logprob(x.raw_text, y.raw_text, r);
        const double prec = mean_token_logprob(y.raw_text, x.raw_text, r);
        r.components = {{"precision", prec}, {"recall", rec}};
        r.value = m.name == MetricName::bartscore_precision ? prec
                  : m.name == MetricName::bartscore_recall  ? rec
                                                            : (prec + rec) / 2;
        r.model_id = engine().model_id();
        break;
      }
      case MetricName::lm_examiner: {
        r.reference_author.clear();
        r.value = examine(w, x, r);
        r.model_id = ctx_.examiner_model;
        break;
      }
    }
    return r;
  }

  /// Mean per-token log P(y | x) under the BARTScore template.
  double mean_token_logprob(const std::string& x, const std::string& y, ScoreRecord& audit) {
    auto bundle = engine().assemble(ctx_.bart_template, nonempty(x), "", nonempty(y));
    const auto [lp, n] = engine().log_prob_counted(y, bundle);
    audit.prompt_hashes.push_back(bundle.hash());
    return lp / static_cast<double>(n);
  }

  BertScoreParts bertscore_parts(const std::string& x, const std::string& y) {
    if (!ctx_.embedding) throw ConfigError("bertscore needs an embedding backend");
    auto embed_all = [&](const std::string& text) {
      std::vector<std::vector<double>> out;
      for (const auto& s : split_sentences(nonempty(text))) out.push_back(ctx_.embedding->embed(s, ctx_.embedding_model));
      return out;
    };
    return bertscore_from_embeddings(embed_all(x), embed_all(y));
  }

  double examine(const Task& w, const Response& x, ScoreRecord& audit) {
    if (!ctx_.examiner) throw ConfigError("lm-examiner needs an examiner backend");
    if (w.full_text.empty()) throw PreconditionError("lm-examiner: task '" + w.id + "' has no full text");
    lm::PromptBundle b;
    b.system = prompts::kExaminerSystem;
    b.user = prompts::fill_template(prompts::kExaminerUser, {{"paper", w.full_text}, {"review", nonempty(x.raw_text)}});
    b.params.model_id = ctx_.examiner_model;
    b.params.seed = ctx_.seed;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 0) b.params.seed = b.params.seed.value_or(0) + 1;
      const auto out = ctx_.examiner->complete(b);
      try {
        const double v = parse_examiner_score(out);
        audit.audit = out;
        audit.prompt_hashes.push_back(b.hash());
        return v;
      } catch (const RangeError&) {
        throw;
      } catch (const ParseError& e) {
        if (attempt >= 1) throw;
        log::warn(std::string("lm-examiner: ") + e.what() + "; retrying once");
      }
    }
  }

 private:
  PmiEngine& engine() {
    if (!ctx_.evaluation) throw ConfigError("metric needs an evaluation backend with log-probabilities");
    return *ctx_.evaluation;
  }

  static const std::string& nonempty(const std::string& s) {
    if (util::trim(s).empty()) throw PreconditionError("metric input is empty");
    return s;
  }

  static const std::string& judgments(const Response& r) {
    if (!r.preprocessed_text)
      throw PipelineOrderError("response " + r.task_id + "/" + r.author_id + " has not been preprocessed");
    return nonempty(*r.preprocessed_text);
  }

  void fill_pmi(ScoreRecord& r, const PmiResult& p) {
    r.value = p.pmi;
    r.components = {{"conditional_logprob", p.conditional_logprob},
                    {"marginal_logprob", p.marginal_logprob},
                    {"token_count", static_cast<double>(p.token_count)}};
    r.prompt_hashes = {p.conditional_hash, p.marginal_hash};
    r.model_id = engine().model_id();
  }

  MetricContext ctx_;
};

// --- peer scoring ------------------------------------------------------------

struct PeerScore {
  std::string author_id;
  std::optional<double> value;  // mean over successful references
  std::size_t references = 0;
  std::vector<std::string> failures;
};

/// score(j) = mean over k != j of f(x_j, x_k). A failing pair is dropped from
/// that response's average and listed; the sum is order-invariant, so the
/// result does not depend on how the other responses are ordered.
inline std::vector<PeerScore> peer_score(const std::vector<Response>& responses,
                                         const std::function<double(const Response&, const Response&)>& f) {
  if (responses.size() < 2) throw PreconditionError("peer_score needs at least 2 responses");
  std::vector<PeerScore> out;
  for (std::size_t j = 0; j < responses.size(); ++j) {
    PeerScore ps;
    ps.author_id = responses[j].author_id;
    std::vector<double> vals;
    for (std::size_t k = 0; k < responses.size(); ++k) {
      if (k == j) continue;
      try {
        vals.push_back(f(responses[j], responses[k]));
      } catch (const Error& e) {
        ps.failures.push_back(responses[k].author_id + ": " + e.what());
      }
    }
    ps.references = vals.size();
    if (!vals.empty()) ps.value = stats::order_invariant_sum(vals) / static_cast<double>(vals.size());
    out.push_back(std::move(ps));
  }
  return out;
}

/// Scores of one tuple against each of its references.
struct TupleScore {
  std::string tuple_id;
  std::vector<ScoreRecord> records;
  std::vector<std::string> failures;
  std::optional<double> value;  // mean over references
};

inline TupleScore score_tuple(Scorer& scorer, const MetricSpec& m, const EvalTuple& t) {
  TupleScore ts;
  ts.tuple_id = t.id();
  std::vector<double> vals;
  for (const auto& y : t.references) {
    try {
      ts.records.push_back(scorer.score(m, *t.task, t.candidate, y));
      vals.push_back(ts.records.back().value);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      ts.failures.push_back(y.author_id + ": " + e.what());
    }
    if (m.inputs() == MetricInputs::wx) break;  // reference-free: one evaluation is enough
  }
  if (!vals.empty()) ts.value = stats::order_invariant_sum(vals) / static_cast<double>(vals.size());
  return ts;
}

inline std::vector<TupleScore> score_tuples(Scorer& scorer, const MetricSpec& m, const std::vector<EvalTuple>& tuples,
                                            std::size_t workers = 1) {
  std::vector<TupleScore> out(tuples.size());
  util::parallel_for(tuples.size(), workers, [&](std::size_t i) { out[i] = score_tuple(scorer, m, tuples[i]); });
  return out;
}

}  // namespace gem
