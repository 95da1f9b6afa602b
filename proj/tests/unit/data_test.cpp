#include <gtest/gtest.h>

#include <sstream>

#include "gem/core/data.hpp"
#include "support.hpp"

using namespace gem;
using testing_support::response;

namespace {

std::shared_ptr<const Task> task(const std::string& id) {
  auto t = std::make_shared<Task>();
  t->id = id;
  t->abstract = "abs";
  return t;
}

Dataset parse(const std::string& text, DatasetFormat f = DatasetFormat::review_jsonl) {
  std::istringstream in(text);
  return read_dataset(in, f);
}

size_t error_line(const std::string& text, DatasetFormat f = DatasetFormat::review_jsonl) {
  try {
    parse(text, f);
  } catch (const DatasetError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Pairing, EachVsRestBuildsOneTuplePerResponse) {
  const auto t = task("p");
  const std::vector<Response> rs = {response("p", "a", "A"), response("p", "b", "B"), response("p", "c", "C")};
  const auto tuples = pair_responses(t, rs, PairingPolicy::each_vs_rest);
  ASSERT_EQ(tuples.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(tuples[i].candidate.author_id, rs[i].author_id);
    ASSERT_EQ(tuples[i].references.size(), 2u);
    for (const auto& r : tuples[i].references) EXPECT_NE(r.author_id, rs[i].author_id);
  }
  EXPECT_EQ(tuples[1].id(), "p::b");
}

TEST(Pairing, FixedCandidateByRoleOrAuthor) {
  const auto t = task("p");
  std::vector<Response> rs = {response("p", "a", "A"), response("p", "b", "B"), response("p", "c", "C")};
  rs[1].role = ResponseRole::candidate;
  auto tuples = pair_responses(t, rs, PairingPolicy::fixed_candidate);
  ASSERT_EQ(tuples.size(), 1u);
  EXPECT_EQ(tuples[0].candidate.author_id, "b");
  EXPECT_EQ(tuples[0].references.size(), 2u);
  tuples = pair_responses(t, rs, PairingPolicy::fixed_candidate, "c");
  EXPECT_EQ(tuples[0].candidate.author_id, "c");
}

TEST(Pairing, FixedCandidateNeedsExactlyOne) {
  const auto t = task("p");
  std::vector<Response> rs = {response("p", "a", "A"), response("p", "b", "B")};
  EXPECT_THROW(pair_responses(t, rs, PairingPolicy::fixed_candidate), ValidationError);
  rs[0].role = rs[1].role = ResponseRole::candidate;
  EXPECT_THROW(pair_responses(t, rs, PairingPolicy::fixed_candidate), ValidationError);
}

TEST(Pairing, NeedsTwoResponses) {
  EXPECT_THROW(pair_responses(task("p"), {response("p", "a", "A")}, PairingPolicy::each_vs_rest), PreconditionError);
}

TEST(Pairing, TaskMismatchRejected) {
  std::vector<Response> rs = {response("p", "a", "A"), response("q", "b", "B")};
  EXPECT_THROW(pair_responses(task("p"), rs, PairingPolicy::each_vs_rest), ValidationError);
}

TEST(Dataset, RoundTripPreservesUnknownFields) {
  const std::string text =
      R"({"kind":"task","id":"p1","full_text":"F","abstract":"A","synopses":{"assw":"S"},"venue":"x"})"
      "\n"
      R"({"kind":"response","task_id":"p1","author_id":"r1","raw_text":"one","role":"candidate","score":6})"
      "\n"
      R"({"kind":"response","task_id":"p1","author_id":"r2","raw_text":"two","preprocessed_text":"2"})"
      "\n";
  const auto ds = parse(text);
  std::ostringstream out;
  write_dataset(ds, out);
  const auto again = parse(out.str());
  ASSERT_EQ(again.tasks.size(), 1u);
  EXPECT_EQ(*again.tasks[0], *ds.tasks[0]);
  EXPECT_EQ(again.tasks[0]->extra.at("venue"), "x");
  EXPECT_EQ(again.responses_of("p1"), ds.responses_of("p1"));
  EXPECT_EQ(again.responses_of("p1")[0].extra.at("score"), 6);
  EXPECT_EQ(*again.responses_of("p1")[1].preprocessed_text, "2");
}

TEST(Dataset, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("{\"kind\":\"task\",\"id\":\"p\"}\n{not json}\n"), 2u);
  EXPECT_EQ(error_line("\n\n{\"kind\":\"task\"}\n"), 3u);
  EXPECT_EQ(error_line("{\"kind\":\"thing\"}\n"), 1u);
  EXPECT_EQ(error_line("[1,2]\n"), 1u);
  EXPECT_EQ(error_line("{\"kind\":\"task\",\"id\":\"p\"}\n"
                       "{\"kind\":\"response\",\"task_id\":\"p\",\"author_id\":\"a\",\"raw_text\":\"\"}\n"),
            2u);
}

TEST(Dataset, DuplicatesRejected) {
  EXPECT_EQ(error_line("{\"kind\":\"task\",\"id\":\"p\"}\n{\"kind\":\"task\",\"id\":\"p\"}\n"), 2u);
  EXPECT_EQ(error_line("{\"kind\":\"task\",\"id\":\"p\"}\n"
                       "{\"kind\":\"response\",\"task_id\":\"p\",\"author_id\":\"a\",\"raw_text\":\"x\"}\n"
                       "{\"kind\":\"response\",\"task_id\":\"p\",\"author_id\":\"a\",\"raw_text\":\"y\"}\n"),
            3u);
}

TEST(Dataset, DanglingResponseRejected) {
  EXPECT_EQ(error_line("{\"kind\":\"response\",\"task_id\":\"zz\",\"author_id\":\"a\",\"raw_text\":\"x\"}\n"
                       "{\"kind\":\"task\",\"id\":\"p\"}\n"),
            1u);
}

TEST(Dataset, EmptyInputGivesEmptyDataset) {
  const auto ds = parse("");
  EXPECT_TRUE(ds.tasks.empty());
  EXPECT_EQ(ds.response_count(), 0u);
  EXPECT_TRUE(make_tuples(ds, {}).empty());
}

TEST(Dataset, MissingFileIsDatasetError) {
  EXPECT_THROW(read_dataset(std::filesystem::path("/nonexistent.jsonl"), DatasetFormat::review_jsonl), DatasetError);
}

TEST(Dataset, GradingRecordsNeedGrades) {
  const std::string head = "{\"kind\":\"task\",\"id\":\"q\"}\n";
  EXPECT_EQ(error_line(head + "{\"kind\":\"response\",\"task_id\":\"q\",\"author_id\":\"s\",\"raw_text\":\"x\"}\n",
                       DatasetFormat::grading_jsonl),
            2u);
  const auto ds = parse(head + "{\"kind\":\"response\",\"task_id\":\"q\",\"author_id\":\"s\",\"raw_text\":\"x\","
                               "\"grade\":\"B\"}\n",
                        DatasetFormat::grading_jsonl);
  EXPECT_TRUE(ds.responses_of("q")[0].grade().has_value());
}

TEST(Dataset, ShippedSamplesLoad) {
  const auto dir = testing_support::data_dir();
  const auto reviews = load_dataset(dir / "reviews.jsonl", DatasetFormat::review_jsonl, {PairingPolicy::each_vs_rest, {"abstract"}});
  EXPECT_EQ(reviews.size(), 12u);
  const auto grades = read_dataset(dir / "grading.jsonl", DatasetFormat::grading_jsonl);
  EXPECT_EQ(grades.response_count(), 4u);
}

TEST(Task, SynopsisKinds) {
  Task t;
  t.abstract = "abs";
  EXPECT_EQ(*t.synopsis_text("abstract"), "abs");
  EXPECT_FALSE(t.synopsis_text("assw"));
  t.synopses["assw"] = "sw";
  EXPECT_EQ(*t.synopsis_text("assw"), "abs\n\nsw");
  t.synopses["abstract"] = "override";
  EXPECT_EQ(*t.synopsis_text("abstract"), "override");
  EXPECT_THROW(require_synopses(t, {"topic"}), ValidationError);
}

TEST(ScoreRecord, IdentityIsExact) {
  ScoreRecord r;
  r.components = {{"conditional_logprob", -10.3}, {"marginal_logprob", -12.9}};
  r.value = -10.3 - -12.9;
  EXPECT_TRUE(r.pmi_identity_holds());
  r.value = std::nextafter(r.value, 0.0);
  EXPECT_FALSE(r.pmi_identity_holds());
}
