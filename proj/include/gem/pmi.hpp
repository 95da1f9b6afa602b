#pragma once

// Log-probabilities, PMI and estimated mutual information from teacher-forced
// token scores.
//
// PMI(x; y | z) = log P_LM(y | x, z) - log P_LM(y | z), where the conditional
// prompt embeds x in the candidate slot and the marginal prompt puts the
// literal "Not Available" there. Unconditional PMI is the same computation
// with "Not Available" in the synopsis slot, so GEM and GEM-S share one code
// path and a null synopsis reproduces GEM prompt-for-prompt.
//
// Scores are sums over tokens; there is no length normalization.

#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "gem/core/data.hpp"
#include "gem/lm/gateway.hpp"
#include "gem/prompts.hpp"
#include "gem/stats.hpp"
#include "gem/util/log.hpp"
#include "gem/util/parallel.hpp"

namespace gem {

/// A scoring prompt: system text plus a user format with {synopsis} and
/// {candidate} slots. `has_marginal_form` is false for templates that are
/// only meant for plain conditional likelihoods.
struct ScoringTemplate {
  std::string id;
  std::string system;
  std::string user_format;
  bool has_marginal_form = true;

  static ScoringTemplate judgment_prediction() {
    return {"judgment-prediction", prompts::kPredictionSystem, prompts::kPredictionUser, true};
  }
  static ScoringTemplate bart() { return {"bart-likelihood", prompts::kBartSystem, prompts::kBartUser, false}; }
};

struct PmiResult {
  double conditional_logprob = 0;
  double marginal_logprob = 0;
  double pmi = 0;
  std::size_t token_count = 0;
  std::string conditional_hash;
  std::string marginal_hash;
};

struct PmiPair {
  std::string x;
  std::string y;
  std::optional<std::string> z;
};

struct PairFailure {
  std::size_t index = 0;
  std::string message;
};

struct MiEstimate {
  double mean_pmi = 0;
  std::size_t n = 0;  // successful pairs
  double ci_low = 0;
  double ci_high = 0;
  double std_error = 0;  // sample SD / sqrt(n); 0 when n == 1
  std::vector<std::optional<PmiResult>> per_pair;
  std::vector<PairFailure> failures;

  bool partial() const { return !failures.empty(); }
};

/// Mean, standard error and bootstrap interval for a set of per-unit values.
/// Order-invariant: the same multiset of values gives bit-identical output.
inline MiEstimate summarize_values(const std::vector<double>& values, const stats::CiSpec& ci) {
  if (values.empty()) throw PreconditionError("estimate over zero values");
  MiEstimate est;
  est.n = values.size();
  est.mean_pmi = stats::order_invariant_sum(values) / static_cast<double>(values.size());
  if (values.size() > 1) {
    auto sorted = values;
    std::sort(sorted.begin(), sorted.end());
    est.std_error = stats::stddev(sorted, stats::SdConvention::sample) / std::sqrt(static_cast<double>(values.size()));
  }
  const auto iv = stats::bootstrap_mean_ci(values, ci);
  // The percentile interval of a mean always brackets the sample mean up to
  // rounding; clamp so the documented ordering holds exactly.
  est.ci_low = std::min(iv.low, est.mean_pmi);
  est.ci_high = std::max(iv.high, est.mean_pmi);
  return est;
}

struct PmiOptions {
  /// Reuse log P(y | z) across candidates sharing (y, z).
  bool marginal_cache = true;
  std::size_t workers = 1;
};

class PmiEngine {
 public:
  PmiEngine(lm::Gateway& gateway, std::string model_id, PmiOptions opts = {})
      : gw_(gateway), model_(std::move(model_id)), opts_(opts) {}

  const std::string& model_id() const { return model_; }
  lm::Gateway& gateway() { return gw_; }

  /// Assembled scoring request for `forced` with the given slot contents.
  lm::PromptBundle assemble(const ScoringTemplate& t, std::string_view candidate, std::string_view synopsis,
                            const std::string& forced) const {
    lm::PromptBundle b;
    b.system = t.system;
    b.user = prompts::fill_template(t.user_format,
                                    {{"candidate", std::string(candidate)}, {"synopsis", std::string(synopsis)}});
    b.forced_output = forced;
    b.params.model_id = model_;
    b.params.temperature = 0.0;
    b.params.max_tokens = 1;
    return b;
  }

  /// Sum of token log-probabilities of `y` after the given context.
  double log_prob(const std::string& y, const lm::PromptBundle& context) {
    return log_prob_counted(y, context).first;
  }

  std::pair<double, std::size_t> log_prob_counted(const std::string& y, const lm::PromptBundle& context) {
    if (y.empty()) throw PreconditionError("log_prob: y must be non-empty");
    lm::PromptBundle b = context;
    b.forced_output = y;
    b.params.model_id = model_;
    b.params.temperature = 0.0;
    const auto toks = gw_.score_forced(b);
    double sum = 0;
    for (const auto& t : toks) sum += t.logprob;
    return {sum, toks.size()};
  }

  PmiResult pmi(const std::string& x, const std::string& y, const ScoringTemplate& t) {
    return conditional_pmi(x, y, std::string(kNotAvailable), t);
  }

  PmiResult conditional_pmi(const std::string& x, const std::string& y, const std::string& z,
                            const ScoringTemplate& t) {
    if (!t.has_marginal_form)
      throw ConfigError("template '" + t.id + "' has no marginal form; PMI is undefined for it");
    if (y.empty()) throw PreconditionError("pmi: y must be non-empty");
    const auto cond_bundle = assemble(t, x, z, y);
    const auto marg_bundle = assemble(t, kNotAvailable, z, y);
    PmiResult r;
    std::size_t cond_tokens = 0;
    std::tie(r.conditional_logprob, cond_tokens) = score_sum(cond_bundle);
    std::size_t marg_tokens = 0;
    std::tie(r.marginal_logprob, marg_tokens) = marginal(t, y, z, marg_bundle);
    if (cond_tokens != marg_tokens)
      throw IntegrityError("y tokenized to " + std::to_string(cond_tokens) + " tokens in the conditional prompt but " +
                           std::to_string(marg_tokens) + " in the marginal prompt");
    r.token_count = cond_tokens;
    r.pmi = r.conditional_logprob - r.marginal_logprob;
    r.conditional_hash = cond_bundle.hash();
    r.marginal_hash = marg_bundle.hash();
    return r;
  }

  /// Mean PMI over pairs with a bootstrap interval. Failed pairs are listed in
  /// `failures` and leave an empty slot in `per_pair`; the estimate then
  /// covers the successful pairs and reports itself as partial.
  MiEstimate estimate_mi(const std::vector<PmiPair>& pairs, const ScoringTemplate& t, const stats::CiSpec& ci) {
    if (pairs.empty()) throw PreconditionError("estimate_mi: need at least one pair");
    std::vector<std::optional<PmiResult>> results(pairs.size());
    std::vector<std::optional<std::string>> errors(pairs.size());
    util::parallel_for(pairs.size(), opts_.workers, [&](std::size_t i) {
      try {
        const auto& p = pairs[i];
        results[i] = p.z ? conditional_pmi(p.x, p.y, *p.z, t) : pmi(p.x, p.y, t);
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    });
    std::vector<double> values;
    std::vector<PairFailure> failures;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (results[i]) values.push_back(results[i]->pmi);
      else failures.push_back({i, *errors[i]});
    }
    if (values.empty()) throw Error("estimate_mi: every pair failed (first: " + failures.front().message + ")");
    auto est = summarize_values(values, ci);
    est.per_pair = std::move(results);
    est.failures = std::move(failures);
    if (est.partial())
      log::warn("estimate_mi: " + std::to_string(est.failures.size()) + " of " + std::to_string(pairs.size()) +
                " pairs failed; estimate is partial");
    return est;
  }

  std::size_t marginal_cache_size() const {
    std::shared_lock lock(memo_mu_);
    return memo_.size();
  }

 private:
  std::pair<double, std::size_t> score_sum(const lm::PromptBundle& b) {
    const auto toks = gw_.score_forced(b);
    double sum = 0;
    for (const auto& t : toks) sum += t.logprob;
    return {sum, toks.size()};
  }

  std::pair<double, std::size_t> marginal(const ScoringTemplate& t, const std::string& y, const std::string& z,
                                          const lm::PromptBundle& b) {
    if (!opts_.marginal_cache) return score_sum(b);
    auto key = std::make_tuple(t.id, y, z);
    {
      std::shared_lock lock(memo_mu_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    auto v = score_sum(b);
    std::unique_lock lock(memo_mu_);
    memo_.emplace(std::move(key), v);
    return v;
  }

  lm::Gateway& gw_;
  std::string model_;
  PmiOptions opts_;
  mutable std::shared_mutex memo_mu_;
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, std::size_t>> memo_;
};

}  // namespace gem
