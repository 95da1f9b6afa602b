#include <gtest/gtest.h>

#include <cmath>

#include "gem/oracle.hpp"
#include "gem/pmi.hpp"
#include "gem/lm/toy_backend.hpp"
#include "support.hpp"

using namespace gem;

namespace {

lm::GatewayOptions mem_only() {
  lm::GatewayOptions o;
  o.memory_cache = true;
  return o;
}

const ScoringTemplate kT = ScoringTemplate::judgment_prediction();
const stats::CiSpec kCi{3, 1000, 0.95, 1};

// Exact log P(y | given) straight from the structure tables, by Bayes.
double analytic_logp(const oracle::DiscreteStructure& s, std::size_t y, std::optional<std::size_t> x,
                     std::optional<std::size_t> z) {
  double num = 0, den = 0;
  for (std::size_t w = 0; w < s.tasks(); ++w) {
    double v = s.prior[w];
    if (x) v *= s.candidate[w][*x];
    if (z) v *= (*s.synopsis)[w][*z];
    den += v;
    num += v * s.reference[w][y];
  }
  return std::log(num / den);
}

}  // namespace

TEST(Pmi, ValueIsExactDifferenceOfLogprobs) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>(), mem_only());
  PmiEngine eng(gw, "toy");
  const auto r = eng.pmi("The novelty is limited. The experiments are thorough.",
                         "The experiments are thorough but novelty is limited.", kT);
  EXPECT_EQ(r.pmi, r.conditional_logprob - r.marginal_logprob);
  EXPECT_GT(r.token_count, 0u);
  EXPECT_NE(r.conditional_hash, r.marginal_hash);
}

TEST(Pmi, NotAvailableCandidateGivesZero) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>(), mem_only());
  PmiEngine eng(gw, "toy");
  const auto r = eng.pmi(std::string(kNotAvailable), "Anything at all.", kT);
  EXPECT_EQ(r.pmi, 0.0);
  EXPECT_EQ(r.conditional_hash, r.marginal_hash);
}

TEST(Pmi, NullSynopsisReproducesUnconditional) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>(), mem_only());
  PmiEngine eng(gw, "toy");
  const std::string x = "Clear writing. Weak baselines.", y = "Baselines are weak.";
  const auto a = eng.pmi(x, y, kT);
  const auto b = eng.conditional_pmi(x, y, std::string(kNotAvailable), kT);
  EXPECT_EQ(a.pmi, b.pmi);
  EXPECT_EQ(a.conditional_logprob, b.conditional_logprob);
  EXPECT_EQ(a.conditional_hash, b.conditional_hash);
  EXPECT_EQ(a.marginal_hash, b.marginal_hash);
}

TEST(Pmi, PositiveWhenCandidateSharesText) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>(), mem_only());
  PmiEngine eng(gw, "toy");
  const std::string y = "The ablation on routing depth is missing.";
  EXPECT_GT(eng.pmi(y, y, kT).pmi, 0.0);
}

TEST(Pmi, OracleMatchesBayes) {
  const auto s = oracle::random_structure({4, 3, 3, 2, 3.0}, 21);
  lm::Gateway gw(std::make_shared<oracle::OracleBackend>(s), mem_only());
  PmiEngine eng(gw, "oracle");
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t y = 0; y < 3; ++y) {
      const auto r = eng.pmi(oracle::symbol('x', x), oracle::symbol('y', y), kT);
      EXPECT_NEAR(r.pmi, analytic_logp(s, y, x, std::nullopt) - analytic_logp(s, y, std::nullopt, std::nullopt), 1e-9);
      for (std::size_t z = 0; z < 2; ++z) {
        const auto c = eng.conditional_pmi(oracle::symbol('x', x), oracle::symbol('y', y), oracle::symbol('z', z), kT);
        EXPECT_NEAR(c.pmi, analytic_logp(s, y, x, z) - analytic_logp(s, y, std::nullopt, z), 1e-9);
      }
    }
}

TEST(Pmi, MeanPmiOverJointIsExactMi) {
  // Weighting each (x, y) PMI by its joint probability gives I(X;Y).
  const auto s = oracle::random_structure({3, 3, 4, 0, 2.0}, 8);
  lm::Gateway gw(std::make_shared<oracle::OracleBackend>(s), mem_only());
  PmiEngine eng(gw, "oracle");
  double mi = 0;
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t y = 0; y < 4; ++y) {
      double p = 0;
      for (std::size_t w = 0; w < 3; ++w) p += s.prior[w] * s.candidate[w][x] * s.reference[w][y];
      mi += p * eng.pmi(oracle::symbol('x', x), oracle::symbol('y', y), kT).pmi;
    }
  EXPECT_NEAR(mi, oracle::exact_mi(s), 1e-12);
}

TEST(EstimateMi, SinglePairHasDegenerateInterval) {
  lm::Gateway gw(std::make_shared<oracle::OracleBackend>(oracle::random_structure({}, 1)), mem_only());
  PmiEngine eng(gw, "oracle");
  const auto est = eng.estimate_mi({{"x0", "y1", std::nullopt}}, kT, kCi);
  EXPECT_EQ(est.n, 1u);
  EXPECT_EQ(est.std_error, 0.0);
  EXPECT_EQ(est.ci_low, est.mean_pmi);
  EXPECT_EQ(est.ci_high, est.mean_pmi);
}

TEST(EstimateMi, PermutationInvariant) {
  const auto s = oracle::random_structure({}, 2);
  lm::Gateway gw(std::make_shared<oracle::OracleBackend>(s), mem_only());
  PmiEngine eng(gw, "oracle");
  std::vector<PmiPair> pairs;
  for (const auto& smp : oracle::sample(s, 60, 5))
    pairs.push_back({oracle::symbol('x', smp.x), oracle::symbol('y', smp.y), std::nullopt});
  const auto a = eng.estimate_mi(pairs, kT, kCi);
  std::reverse(pairs.begin(), pairs.end());
  std::rotate(pairs.begin(), pairs.begin() + 17, pairs.end());
  const auto b = eng.estimate_mi(pairs, kT, kCi);
  EXPECT_EQ(a.mean_pmi, b.mean_pmi);
  EXPECT_EQ(a.ci_low, b.ci_low);
  EXPECT_EQ(a.ci_high, b.ci_high);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(EstimateMi, MarginalCacheDoesNotChangeResults) {
  const auto s = oracle::random_structure({}, 3);
  std::vector<PmiPair> pairs;
  for (const auto& smp : oracle::sample(s, 40, 6))
    pairs.push_back({oracle::symbol('x', smp.x), oracle::symbol('y', smp.y), std::nullopt});
  lm::GatewayOptions nc;
  nc.memory_cache = false;
  auto backend = std::make_shared<oracle::OracleBackend>(s);
  lm::Gateway g1(backend, nc), g2(backend, nc);
  PmiEngine with(g1, "oracle", {true, 1}), without(g2, "oracle", {false, 1});
  const auto a = with.estimate_mi(pairs, kT, kCi), b = without.estimate_mi(pairs, kT, kCi);
  EXPECT_EQ(a.mean_pmi, b.mean_pmi);
  EXPECT_LE(with.marginal_cache_size(), 4u);
  EXPECT_EQ(without.marginal_cache_size(), 0u);
  EXPECT_LT(g1.backend_calls(), g2.backend_calls());
}

TEST(EstimateMi, FailuresMakeEstimatePartial) {
  lm::Gateway gw(std::make_shared<oracle::OracleBackend>(oracle::random_structure({}, 4)), mem_only());
  PmiEngine eng(gw, "oracle");
  const auto est = eng.estimate_mi({{"x0", "y1", std::nullopt}, {"x0", "y99", std::nullopt}}, kT, kCi);
  EXPECT_TRUE(est.partial());
  EXPECT_EQ(est.n, 1u);
  ASSERT_EQ(est.failures.size(), 1u);
  EXPECT_EQ(est.failures[0].index, 1u);
  EXPECT_FALSE(est.per_pair[1].has_value());
  EXPECT_THROW(eng.estimate_mi({}, kT, kCi), PreconditionError);
}

TEST(Pmi, TemplateWithoutMarginalFormRejected) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>(), mem_only());
  PmiEngine eng(gw, "toy");
  EXPECT_THROW(eng.pmi("a", "b", ScoringTemplate::bart()), ConfigError);
  EXPECT_THROW(eng.pmi("a", "", kT), PreconditionError);
}

TEST(Pmi, TokenCountMismatchIsIntegrityError) {
  auto be = std::make_shared<testing_support::ScriptedBackend>();
  // Tokenize differently depending on whether the marginal placeholder is present.
  be->on_score = [](const lm::PromptBundle& b) {
    const std::string& y = *b.forced_output;
    if (b.user.find(kNotAvailable) != std::string::npos && b.user.find("real") == std::string::npos)
      return std::vector<lm::TokenScore>{{y, -1.0, 0}};
    std::vector<lm::TokenScore> out;
    for (std::size_t i = 0; i < y.size(); ++i) out.push_back({std::string(1, y[i]), -0.1, i});
    return out;
  };
  lm::Gateway gw(be, mem_only());
  PmiEngine eng(gw, "m");
  EXPECT_THROW(eng.pmi("real", "yy", kT), IntegrityError);
}

TEST(Pmi, LogProbSumsTokens) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>(), mem_only());
  PmiEngine eng(gw, "toy");
  const auto ctx = eng.assemble(kT, "x", "z", "unused");
  const auto [lp, n] = eng.log_prob_counted("hello", ctx);
  EXPECT_EQ(n, 5u);
  lm::PromptBundle b = ctx;
  b.forced_output = "hello";
  double sum = 0;
  for (const auto& t : gw.score_forced(b)) sum += t.logprob;
  EXPECT_EQ(lp, sum);
  EXPECT_LT(lp, 0.0);
}
