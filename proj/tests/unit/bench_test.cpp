#include <gtest/gtest.h>

#include <sstream>

#include "gem/bench.hpp"
#include "gem/lm/toy_backend.hpp"
#include "gem/oracle.hpp"
#include "support.hpp"

using namespace gem;
using namespace gem::bench;
using testing_support::ScriptedBackend;

namespace {

const std::string kBlocks =
    "<summary>S</summary>\n<strengths>A</strengths>\n<weaknesses>B</weaknesses>\n<questions>Q</questions>";

BenchRun fake_run(const std::vector<std::pair<std::string, double>>& scores) {
  BenchRun run;
  run.variants = {"gem"};
  for (const auto& [m, v] : scores) {
    BenchRow row;
    row.model = m;
    row.human = m == kHumanRow;
    if (!row.human) run.models.push_back(m);
    BenchCell c;
    MiEstimate e;
    e.mean_pmi = v;
    e.ci_low = v - 0.01;
    e.ci_high = v + 0.01;
    c.estimate = e;
    c.tasks_scored = 3;
    row.cells["gem"] = c;
    run.rows.push_back(row);
  }
  return run;
}

}  // namespace

TEST(Blocks, AllFourRequired) {
  EXPECT_NO_THROW(check_review_blocks(kBlocks));
  try {
    check_review_blocks("<summary>S</summary><strengths>A</strengths><weaknesses>B</weaknesses>");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("<questions>"), std::string::npos);
  }
}

TEST(Generate, MissingBlockIsRecordedFailure) {
  auto be = std::make_shared<ScriptedBackend>();
  be->on_complete = [](const lm::PromptBundle& b) {
    return b.params.model_id == "good" ? kBlocks : std::string("<summary>S</summary>");
  };
  lm::Gateway gw(be);
  Task t;
  t.id = "p";
  t.full_text = "Paper.";
  const auto ok = generate_review(gw, "good", t, {}, 0);
  ASSERT_TRUE(ok.review);
  EXPECT_EQ(ok.review->author_id, "model:good");
  const auto bad = generate_review(gw, "bad", t, {}, 0);
  EXPECT_FALSE(bad.review);
  EXPECT_NE(bad.error.find("<strengths>"), std::string::npos);
}

TEST(Generate, ContextOverflowExcludesTaskForAllModels) {
  auto be = std::make_shared<ScriptedBackend>();
  be->on_complete = [](const lm::PromptBundle& b) -> std::string {
    if (b.user.size() > 20 && b.params.model_id == "small") throw ContextLengthError("too long", 30, 20);
    return kBlocks;
  };
  lm::Gateway gw(be);
  std::istringstream in(
      "{\"kind\":\"task\",\"id\":\"long\",\"full_text\":\"a paper body that is long enough\"}\n"
      "{\"kind\":\"task\",\"id\":\"short\",\"full_text\":\"short\"}\n"
      "{\"kind\":\"response\",\"task_id\":\"long\",\"author_id\":\"h1\",\"raw_text\":\"the cat sat\"}\n"
      "{\"kind\":\"response\",\"task_id\":\"long\",\"author_id\":\"h2\",\"raw_text\":\"the cat ran\"}\n"
      "{\"kind\":\"response\",\"task_id\":\"short\",\"author_id\":\"h1\",\"raw_text\":\"the dog sat\"}\n"
      "{\"kind\":\"response\",\"task_id\":\"short\",\"author_id\":\"h2\",\"raw_text\":\"a dog sat\"}\n");
  const auto ds = read_dataset(in, DatasetFormat::review_jsonl);
  MetricContext ctx;
  Scorer sc(ctx);
  BenchOptions opts;
  opts.variants = {MetricSpec::parse("rouge-l")};
  opts.ci = {0, 1000, 0.90, 1};
  const auto run = run_bench(ds, {"small", "large"}, gw, sc, nullptr, opts);
  ASSERT_EQ(run.exclusions.size(), 1u);
  EXPECT_EQ(run.exclusions[0].task_id, "long");
  EXPECT_EQ(run.row("large").cells.at("rouge-l").tasks_scored, 1u);
  EXPECT_EQ(run.row(kHumanRow).cells.at("rouge-l").tasks_scored, 1u);
}

TEST(BenchTasks, CandidateRoleThenFirstAuthor) {
  std::istringstream in(
      "{\"kind\":\"task\",\"id\":\"p\"}\n{\"kind\":\"task\",\"id\":\"q\"}\n{\"kind\":\"task\",\"id\":\"lonely\"}\n"
      "{\"kind\":\"response\",\"task_id\":\"p\",\"author_id\":\"b\",\"raw_text\":\"x\",\"role\":\"candidate\"}\n"
      "{\"kind\":\"response\",\"task_id\":\"p\",\"author_id\":\"a\",\"raw_text\":\"y\"}\n"
      "{\"kind\":\"response\",\"task_id\":\"q\",\"author_id\":\"z\",\"raw_text\":\"x\"}\n"
      "{\"kind\":\"response\",\"task_id\":\"q\",\"author_id\":\"c\",\"raw_text\":\"y\"}\n"
      "{\"kind\":\"response\",\"task_id\":\"lonely\",\"author_id\":\"c\",\"raw_text\":\"y\"}\n");
  const auto bt = bench_tasks(read_dataset(in, DatasetFormat::review_jsonl));
  ASSERT_EQ(bt.size(), 2u);
  EXPECT_EQ(bt[0].human.author_id, "b");
  EXPECT_EQ(bt[1].human.author_id, "c");
  ASSERT_EQ(bt[1].references.size(), 1u);
  EXPECT_EQ(bt[1].references[0].author_id, "z");
}

TEST(Leaderboard, GarbledModelRanksBelowSharpOne) {
  const auto s = oracle::random_structure({4, 4, 4, 0, 6.0}, 17);
  const auto gamma = oracle::random_garbling(4, 17, 0.85, 0.95);
  auto backend = std::make_shared<oracle::OracleBackend>(s);
  backend->add_channel('g', oracle::compose(s.candidate, gamma));
  lm::Gateway gw(backend);
  PmiEngine eng(gw, "oracle");
  MetricContext ctx;
  ctx.evaluation = &eng;
  Scorer sc(ctx);

  const auto tuples = oracle::oracle_tuples(oracle::sample(s, 300, 4));
  oracle::GarbleTransform garble(gamma, 5);
  std::vector<BenchTask> tasks;
  std::map<std::string, std::map<std::string, Response>> cands;
  for (const auto& t : tuples) {
    tasks.push_back({t.task, t.candidate, t.references});
    cands["sharp"][t.task->id] = t.candidate;
    cands["garbled"][t.task->id] = garble.apply(*t.task, t.candidate);
  }
  BenchOptions opts;
  opts.variants = {MetricSpec::parse("gem")};
  opts.ci = {0, 1000, 0.90, 1};
  const auto run = score_bench(tasks, cands, {"garbled", "sharp"}, sc, nullptr, opts);
  const auto rows = sorted_rows(run);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0]->model, "sharp");
  EXPECT_EQ(rows[1]->model, "garbled");
  EXPECT_EQ(rows[2]->model, kHumanRow);
  // The human row plays the same x symbols as "sharp".
  EXPECT_EQ(run.row("sharp").cells.at("gem").estimate->mean_pmi,
            run.row(kHumanRow).cells.at("gem").estimate->mean_pmi);
}

TEST(Leaderboard, MissingCandidatesMarkRowPartial) {
  auto task = std::make_shared<Task>();
  task->id = "p";
  std::vector<BenchTask> tasks = {{task, testing_support::response("p", "h", "the cat sat"),
                                   {testing_support::response("p", "r", "the cat ran")}}};
  MetricContext ctx;
  Scorer sc(ctx);
  BenchOptions opts;
  opts.variants = {MetricSpec::parse("rouge-l")};
  opts.ci = {0, 1000, 0.90, 1};
  const auto run = score_bench(tasks, {}, {"absent"}, sc, nullptr, opts);
  EXPECT_TRUE(run.row("absent").cells.at("rouge-l").partial());
  EXPECT_NE(leaderboard_text(run).find("n/a"), std::string::npos);
  EXPECT_NE(leaderboard_csv(run).find("absent,,,,0,true"), std::string::npos);
}

TEST(Format, ScaledTwoDecimals) {
  EXPECT_EQ(fmt_scaled(0.2577), "25.77");
  EXPECT_EQ(fmt_scaled(-0.01234), "-1.23");
  EXPECT_EQ(fmt_scaled(0.0), "0.00");
}

TEST(Format, TextAndCsvAgree) {
  const auto run = fake_run({{"m1", 0.10}, {"m2", 0.30}, {kHumanRow, 0.20}, {"m3", 0.2577}});
  const auto csv = leaderboard_csv(run);
  const auto text = leaderboard_text(run);
  std::istringstream c(csv), t(text);
  std::string cl, tl;
  std::getline(c, cl);
  std::getline(t, tl);
  std::vector<std::string> order;
  while (std::getline(c, cl)) {
    const auto name = cl.substr(0, cl.find(','));
    const auto value = cl.substr(name.size() + 1, cl.find(',', name.size() + 1) - name.size() - 1);
    order.push_back(name);
    ASSERT_TRUE(std::getline(t, tl));
    EXPECT_EQ(tl.substr(0, name.size()), name);
    EXPECT_NE(tl.find(value), std::string::npos) << tl;
  }
  EXPECT_EQ(order, (std::vector<std::string>{"m2", "m3", "m1", kHumanRow}));
}

TEST(CrossModel, RankAgreement) {
  const auto a = fake_run({{"m1", 0.1}, {"m2", 0.2}, {"m3", 0.3}});
  const auto same = fake_run({{"m1", 1.0}, {"m2", 2.0}, {"m3", 3.0}});
  const auto flipped = fake_run({{"m1", 0.3}, {"m2", 0.2}, {"m3", 0.1}});
  EXPECT_DOUBLE_EQ(cross_model_consistency(a, same).at("gem").rho, 1.0);
  EXPECT_DOUBLE_EQ(cross_model_consistency(a, flipped).at("gem").rho, -1.0);
  const auto other = fake_run({{"m1", 0.1}, {"m2", 0.2}, {"m4", 0.3}});
  EXPECT_THROW(cross_model_consistency(a, other), ValidationError);
}
