#include <gtest/gtest.h>

#include <regex>

#include "gem/lm/toy_backend.hpp"
#include "gem/oracle.hpp"
#include "gem/perturb.hpp"
#include "support.hpp"

using namespace gem;
using testing_support::kToyAfterDeletion;
using testing_support::kToyReview;
using testing_support::response;
using testing_support::ScriptedBackend;

namespace {

// Sentence and placeholder units of a layout, whitespace-collapsed and with
// terminal punctuation removed, for comparisons that ignore spacing slips.
std::vector<std::string> units(const std::string& text) {
  std::vector<std::string> out;
  const std::string ph(prompts::kMissingSentence);
  std::string rest = text;
  std::size_t at;
  while ((at = rest.find(ph)) != std::string::npos) {
    for (auto& s : split_sentences(rest.substr(0, at))) out.push_back(s);
    out.push_back(ph);
    rest = rest.substr(at + ph.size());
  }
  for (auto& s : split_sentences(rest)) out.push_back(s);
  for (auto& u : out) {
    u = std::regex_replace(u, std::regex("\\s+"), " ");
    while (!u.empty() && (is_sentence_end(u.back()) || u.back() == ' ')) u.pop_back();
  }
  return out;
}

}  // namespace

TEST(SentenceSplit, Terminators) {
  EXPECT_EQ(split_sentences("A. B? C!"), (std::vector<std::string>{"A.", "B?", "C!"}));
  EXPECT_EQ(split_sentences("A\nB"), (std::vector<std::string>{"A", "B"}));
  EXPECT_TRUE(split_sentences("").empty());
  EXPECT_TRUE(split_sentences("  \n ").empty());
  EXPECT_EQ(split_sentences("Why?! Yes."), (std::vector<std::string>{"Why?!", "Yes."}));
  EXPECT_EQ(split_sentences("No end"), (std::vector<std::string>{"No end"}));
}

TEST(SentenceSplit, GapsReassemble) {
  for (const std::string t : {"  A.  B?\n\nC!  ", "", "x", "A.B.", kToyReview.c_str()}) {
    const auto s = split_sentences_with_gaps(t);
    EXPECT_EQ(s.join(), t);
    EXPECT_EQ(s.gaps.size(), s.sentences.size() + 1);
  }
}

TEST(SectionedReview, ParseAndSerializeRoundTrip) {
  const auto r = SectionedReview::parse(kToyReview, true);
  ASSERT_EQ(r.sections.size(), 4u);
  EXPECT_EQ(r.serialize(), kToyReview);
  EXPECT_EQ(*r.sections[2].kind, 2u);
  EXPECT_EQ(SectionedReview::parse("strength and weaknesses\nbody").sections[0].kind, 1u);
}

TEST(SectionedReview, StrictParsingNeedsAllSections) {
  EXPECT_THROW(SectionedReview::parse("plain text", true), ParseError);
  const std::string three = "Summary Of The Paper:\nA.\nStrengths And Weaknesses:\nB.\n"
                            "Clarity, Quality, Novelty And Reproducibility:\nC.\n";
  EXPECT_THROW(SectionedReview::parse(three, true), ParseError);
  const auto loose = SectionedReview::parse("plain text");
  ASSERT_EQ(loose.sections.size(), 1u);
  EXPECT_FALSE(loose.sections[0].kind);
}

TEST(SentenceDeletion, ToyReviewByteExact) {
  EXPECT_EQ(sentence_deletion(SectionedReview::parse(kToyReview)).serialize(), kToyAfterDeletion);
  SentenceDeletionTransform t;
  Task w;
  const auto out = t.apply(w, response("p", "a", kToyReview, "pre"));
  EXPECT_EQ(out.raw_text, kToyAfterDeletion);
  EXPECT_FALSE(out.preprocessed_text);
  EXPECT_EQ(out.extra.at("strategy"), "sentence-deletion");
}

TEST(SentenceDeletion, HeaderlessTextAndSingleSentence) {
  EXPECT_EQ(sentence_deletion(SectionedReview::parse("One. Two. Three.")).serialize(), "One. Three.");
  EXPECT_EQ(sentence_deletion(SectionedReview::parse("Only one.")).serialize(), "Only one.");
}

TEST(DeletionCompletion, IntermediateLayout) {
  std::size_t holes = 0;
  const auto mid = deletion_intermediate(SectionedReview::parse(kToyReview), &holes);
  EXPECT_EQ(holes, 4u);  // 1 + 2 + 0 + 1
  const auto& s = mid.sections;
  EXPECT_EQ(units(s[0].body), (std::vector<std::string>{"This is the first sentence", "[There is one missing sentence]",
                                                         "This is the third sentence"}));
  EXPECT_EQ(units(s[1].body),
            (std::vector<std::string>{"This is the first sentence", "[There is one missing sentence]",
                                      "This is the third sentence", "[There is one missing sentence]"}));
  EXPECT_EQ(s[2].body, "\n\nThis is the first sentence.\n\n");
  EXPECT_EQ(units(s[3].body), (std::vector<std::string>{"This is the first sentence", "[There is one missing sentence]"}));
  EXPECT_EQ(s[0].header, "Summary Of The Paper:");
}

TEST(DeletionCompletion, OneSentenceReviewUnchanged) {
  auto be = std::make_shared<ScriptedBackend>();
  lm::Gateway gw(be);
  DeletionCompletionTransform t(gw, "m", 0);
  Task w;
  const auto out = t.apply(w, response("p", "a", "Only one sentence."));
  EXPECT_EQ(out.raw_text, "Only one sentence.");
  EXPECT_EQ(be->calls.load(), 0);
}

TEST(DeletionCompletion, FillsHolesAndKeepsHeaders) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>());
  DeletionCompletionTransform t(gw, "m", 0);
  Task w;
  const auto out = t.apply(w, response("p", "a", kToyReview));
  EXPECT_EQ(out.raw_text.find(prompts::kMissingSentence), std::string::npos);
  EXPECT_NE(out.raw_text.find("This aspect is also worth noting."), std::string::npos);
  EXPECT_TRUE(retains_verbatim(out.raw_text, retained_sentences(SectionedReview::parse(kToyReview))));
  EXPECT_TRUE(SectionedReview::parse(out.raw_text, true).has_all_sections());
}

TEST(DeletionCompletion, RetriesThenIntegrityError) {
  auto be = std::make_shared<ScriptedBackend>();
  be->on_complete = [](const lm::PromptBundle&) { return std::string("Something else entirely."); };
  lm::Gateway gw(be);
  DeletionCompletionTransform t(gw, "m", 0);
  Task w;
  EXPECT_THROW(t.apply(w, response("p", "a", "One. Two. Three.")), IntegrityError);
  EXPECT_EQ(be->calls.load(), 2);
}

TEST(Elongation, ToyReviewByteExact) {
  const std::string s = "clear presentation and thorough experiments", w = "limited baselines and missing ablations";
  const auto review = SectionedReview::parse(kToyReview);
  const auto out = elongate_with(review, s, w);
  EXPECT_EQ(out.serialize(), testing_support::toy_elongated(s, w));
  EXPECT_EQ(strip_elongation(out, s, w).serialize(), kToyReview);
  EXPECT_THROW(strip_elongation(review, s, w), ValidationError);
}

TEST(Elongation, TransformUsesModelSummaries) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>());
  ElongationTransform t(gw, "m", 0);
  Task w;
  const auto out = t.apply(w, response("p", "a", kToyReview));
  EXPECT_EQ(out.raw_text, testing_support::toy_elongated("clear presentation and thorough experiments",
                                                         "limited baselines and missing ablations"));
  // Applying twice stacks a second lead-in that strips off again.
  const auto twice = t.apply(w, out);
  const auto once_more =
      strip_elongation(SectionedReview::parse(twice.raw_text), out.extra["elongation"]["strength_summary"],
                       out.extra["elongation"]["weakness_summary"]);
  EXPECT_EQ(once_more.serialize(), out.raw_text);
}

TEST(Elongation, HeaderlessReviewRejected) {
  EXPECT_THROW(elongate_with(SectionedReview::parse("plain."), "a", "b"), PreconditionError);
}

TEST(AbstractOnly, NeedsFullLayout) {
  auto be = std::make_shared<ScriptedBackend>();
  be->on_complete = [](const lm::PromptBundle&) {
    return std::string("Summary Of The Paper:\n\nA.\n\nStrengths And Weaknesses:\n\nB.\n\n"
                       "Clarity, Quality, Novelty And Reproducibility:\n\nC.\n");
  };
  lm::Gateway gw(be);
  AbstractOnlyTransform t(gw, "m", 0);
  Task w;
  w.id = "p";
  w.abstract = "An abstract.";
  EXPECT_THROW(t.apply(w, response("p", "a", kToyReview)), ParseError);
  EXPECT_EQ(be->calls.load(), 2);
  Task bare;
  EXPECT_THROW(t.apply(bare, response("p", "a", kToyReview)), PreconditionError);
}

TEST(AbstractOnly, ToyBackendReview) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>());
  AbstractOnlyTransform t(gw, "m", 0);
  Task w;
  w.abstract = "We study sparse attention. It is fast.";
  const auto out = t.apply(w, response("p", "a", kToyReview));
  EXPECT_TRUE(SectionedReview::parse(out.raw_text, true).has_all_sections());
}

TEST(Rephrase, HeadersPreservedAndEmptyBodyUnchanged) {
  auto be = std::make_shared<ScriptedBackend>();
  be->on_complete = [](const lm::PromptBundle&) {
    return std::string("summary of the paper\n\nRephrased one.\n\nStrengths and weaknesses\n\nRephrased two.\n\n"
                       "Clarity, quality, novelty and reproducibility\n\nRephrased three.\n\n"
                       "summary of the review\n\nRephrased four.\n");
  };
  lm::Gateway gw(be);
  RephraseTransform t("rephrase-a", gw, "m", 0);
  Task w;
  const auto out = t.apply(w, response("p", "a", kToyReview));
  const auto parsed = SectionedReview::parse(out.raw_text, true);
  const auto orig = SectionedReview::parse(kToyReview);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(parsed.sections[i].header, orig.sections[i].header);
  EXPECT_EQ(parsed.sections[1].body, "\n\nRephrased two.\n\n");
  EXPECT_EQ(t.apply(w, response("p", "a", "   ")).raw_text, "   ");
  EXPECT_EQ(t.name(), "rephrase-a");
}

TEST(MakeTransform, NamesAndBackends) {
  for (const auto& n : strategy_names()) {
    lm::Gateway gw(std::make_shared<lm::ToyBackend>());
    EXPECT_EQ(make_transform(n, &gw)->name(), n);
  }
  EXPECT_THROW(make_transform("shuffle", nullptr), ConfigError);
  EXPECT_THROW(make_transform("rephrase-a", nullptr), ConfigError);
  EXPECT_NO_THROW(make_transform("sentence-deletion", nullptr));
}

// --- validation workflow -----------------------------------------------------

namespace {

struct OracleRig {
  oracle::DiscreteStructure s;
  oracle::Matrix gamma;
  std::shared_ptr<oracle::OracleBackend> backend;
  lm::Gateway gw;
  PmiEngine eng;
  Scorer scorer;

  explicit OracleRig(std::uint64_t seed)
      : s(oracle::random_structure({4, 4, 4, 0, 6.0}, seed)),
        gamma(oracle::random_garbling(4, seed, 0.8, 0.95)),
        backend(std::make_shared<oracle::OracleBackend>(s)),
        gw(backend),
        eng(gw, "oracle"),
        scorer([this] {
          MetricContext c;
          c.evaluation = &eng;
          return c;
        }()) {
    backend->add_channel('g', oracle::compose(s.candidate, gamma));
  }
};

}  // namespace

TEST(Validation, IdentityGivesZero) {
  OracleRig rig(3);
  const auto tuples = oracle::oracle_tuples(oracle::sample(rig.s, 50, 1));
  IdentityTransform id;
  const auto res = run_validation(tuples, rig.scorer, MetricSpec::parse("gem"), id, nullptr,
                                  {stats::CiSpec{1, 1000, 0.95, 1}, stats::SdConvention::population, 1});
  EXPECT_EQ(res.smd.d, 0.0);
  EXPECT_EQ(res.significance, stats::Significance::none);
  EXPECT_EQ(res.pairs.size(), 50u);
  EXPECT_TRUE(std::is_sorted(res.pairs.ids.begin(), res.pairs.ids.end()));
}

TEST(Validation, GarblingLowersGem) {
  OracleRig rig(5);
  const auto tuples = oracle::oracle_tuples(oracle::sample(rig.s, 300, 2));
  oracle::GarbleTransform g(rig.gamma, 9);
  const auto res = run_validation(tuples, rig.scorer, MetricSpec::parse("gem"), g, nullptr,
                                  {stats::CiSpec{1, 1000, 0.95, 1}, stats::SdConvention::population, 1});
  EXPECT_LT(res.smd.d, 0.0);
  EXPECT_EQ(res.significance, stats::Significance::decrease);
  EXPECT_TRUE(res.failures.empty());
}

TEST(Validation, WorkerCountDoesNotChangeResult) {
  OracleRig rig(6);
  const auto tuples = oracle::oracle_tuples(oracle::sample(rig.s, 40, 3));
  oracle::GarbleTransform g(rig.gamma, 9);
  const ValidationOptions one{stats::CiSpec{1, 1000, 0.95, 1}, stats::SdConvention::population, 1};
  auto four = one;
  four.workers = 4;
  const auto a = run_validation(tuples, rig.scorer, MetricSpec::parse("gem"), g, nullptr, one);
  const auto b = run_validation(tuples, rig.scorer, MetricSpec::parse("gem"), g, nullptr, four);
  EXPECT_EQ(a.pairs.pre, b.pairs.pre);
  EXPECT_EQ(a.pairs.post, b.pairs.post);
  EXPECT_EQ(a.smd.d, b.smd.d);
  EXPECT_EQ(a.smd.ci_low, b.smd.ci_low);
}

TEST(Validation, MissingPreprocessingIsPipelineOrderError) {
  lm::Gateway gw(std::make_shared<lm::ToyBackend>());
  PmiEngine eng(gw, "toy");
  MetricContext c;
  c.evaluation = &eng;
  Scorer sc(c);
  auto task = std::make_shared<Task>();
  task->id = "p";
  std::vector<EvalTuple> tuples = {{task, response("p", "a", "A."), {response("p", "b", "B.")}}};
  IdentityTransform id;
  EXPECT_THROW(run_validation(tuples, sc, MetricSpec::parse("gem"), id, nullptr, {}), PipelineOrderError);
  EXPECT_THROW(run_validation({}, sc, MetricSpec::parse("gem"), id, nullptr, {}), PreconditionError);
}
