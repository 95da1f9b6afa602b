// gem-eval: command-line front end.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "gem/cli.hpp"

int main(int argc, char** argv) {
  using namespace gem::cli;
  CLI::App app{"Mutual-information based evaluation of text responses"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string config;
  bool verbose = false;
  app.add_option("--config", config, "Run configuration (JSON)");
  app.add_flag("--json", common.json_output, "Machine-readable report on stdout");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  ScoreArgs score;
  std::string score_dataset;
  auto* sc = app.add_subcommand("score", "Score every tuple of a dataset");
  sc->add_option("--metric", score.metrics, "Metric (repeatable), e.g. gem, gem-s:abstract, rouge-l");
  sc->add_option("--dataset", score_dataset, "Dataset JSONL (overrides config)");
  sc->add_option("--out", score.out, "Per-record JSONL output")->capture_default_str();

  ValidateArgs validate;
  std::string validate_dataset;
  auto* va = app.add_subcommand("validate", "Pre/post scoring under a degradation or manipulation");
  va->add_option("--metric", validate.metric, "Metric")->required();
  va->add_option("--strategy", validate.strategy, "Strategy")->required();
  va->add_option("--dataset", validate_dataset, "Dataset JSONL (overrides config)");
  va->add_option("--report", validate.report, "Report path")->capture_default_str();

  BenchArgs bench;
  std::string bench_dataset;
  auto* be = app.add_subcommand("bench", "Review-generation benchmark and leaderboard");
  be->add_option("--dataset", bench_dataset, "Dataset JSONL (overrides config)");
  be->add_option("--out", bench.out, "Output directory")->capture_default_str();

  OracleCheckArgs oracle;
  std::string structure_dir, oracle_report;
  auto* oc = app.add_subcommand("oracle-check", "Estimator checks against exact discrete structures");
  oc->add_option("--n", oracle.n, "Samples per structure")->capture_default_str();
  oc->add_option("--seed", oracle.seed, "Seed")->capture_default_str();
  oc->add_option("--eps", oracle.eps, "KL noise levels (repeatable)");
  oc->add_option("--structures", structure_dir, "Directory of structure files");
  oc->add_option("--random", oracle.structures, "Random structures for the consistency check")->capture_default_str();
  oc->add_option("--pairs", oracle.garblings, "Random garbling pairs per noise level")->capture_default_str();
  oc->add_option("--report", oracle_report, "Write the JSON report here");

  std::string cache_action, cache_dir;
  auto* ca = app.add_subcommand("cache", "Inspect or clear the response cache");
  ca->add_option("action", cache_action, "inspect | clear")->required()->check(CLI::IsMember({"inspect", "clear"}));
  ca->add_option("--dir", cache_dir, "Cache directory (default: cache_dir from --config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }
  if (verbose) gem::log::set_level(gem::log::Level::debug);
  if (!config.empty()) common.config = config;

  if (*sc) {
    if (!score_dataset.empty()) score.dataset = score_dataset;
    return cmd_score(common, score);
  }
  if (*va) {
    if (!validate_dataset.empty()) validate.dataset = validate_dataset;
    return cmd_validate(common, validate);
  }
  if (*be) {
    if (!bench_dataset.empty()) bench.dataset = bench_dataset;
    return cmd_bench(common, bench);
  }
  if (*oc) {
    if (!structure_dir.empty()) oracle.structure_dir = structure_dir;
    if (!oracle_report.empty()) oracle.report = oracle_report;
    return cmd_oracle_check(common, oracle);
  }
  if (*ca) {
    std::optional<std::filesystem::path> dir;
    if (!cache_dir.empty()) dir = cache_dir;
    return cmd_cache(common, cache_action, dir);
  }
  return kExitConfig;
}
