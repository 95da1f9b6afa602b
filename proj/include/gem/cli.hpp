#pragma once

// Command implementations behind gem-eval. Each returns a process exit
// code: 0 success, 1 run failure, 2 configuration, I/O or dataset error.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gem/bench.hpp"
#include "gem/config.hpp"
#include "gem/core/data.hpp"
#include "gem/error.hpp"
#include "gem/metrics.hpp"
#include "gem/oracle.hpp"
#include "gem/perturb.hpp"
#include "gem/pmi.hpp"
#include "gem/stats.hpp"
#include "gem/util/log.hpp"

namespace gem::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

struct CommonArgs {
  std::optional<std::filesystem::path> config;
  bool json_output = false;
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
};

/// Runs `body`, mapping library errors to exit codes and messages.
template <typename Body>
int guarded(const CommonArgs& args, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    *args.err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DatasetError& e) {
    *args.err << "error: dataset: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    *args.err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    *args.err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

inline RunConfig load_config(const CommonArgs& args) {
  if (!args.config) throw ConfigError("--config is required");
  if (!std::filesystem::exists(*args.config)) throw ConfigError("config file not found: " + args.config->string());
  return RunConfig::load(*args.config);
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << content;
  if (!f) throw ConfigError("write failed for " + path.string());
}

inline std::string snapshot_text(const RunConfig& cfg) {
  json j = {{"config", cfg.snapshot()}, {"config_hash", cfg.hash()}};
  return j.dump(2) + "\n";
}

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Dataset with synopses generated for every requested kind that is missing.
inline Dataset prepare_dataset(Runtime& rt, const std::vector<MetricSpec>& metrics) {
  const auto& cfg = rt.config();
  if (!cfg.dataset) throw ConfigError("no dataset configured (dataset.path or --dataset)");
  auto ds = read_dataset(*cfg.dataset, cfg.format);
  if (ds.tasks.empty() || ds.response_count() == 0) throw DatasetError(0, "dataset " + cfg.dataset->string() + " is empty");
  std::vector<std::string> kinds;
  for (const auto& m : metrics)
    if (m.synopsis_kind) kinds.push_back(*m.synopsis_kind);
  if (!kinds.empty()) {
    for (auto& t : ds.tasks) {
      bool missing = false;
      for (const auto& k : kinds) missing = missing || !t->synopsis_text(k);
      if (!missing) continue;
      auto copy = std::make_shared<Task>(*t);
      rt.preprocessor().ensure_synopses(*copy, kinds);
      t = copy;
    }
  }
  return ds;
}

// --- score -------------------------------------------------------------------

struct ScoreArgs {
  std::vector<std::string> metrics;  // overrides config
  std::optional<std::filesystem::path> dataset;
  std::filesystem::path out = "scores.jsonl";
};

inline int cmd_score(const CommonArgs& common, const ScoreArgs& args) {
  return guarded(common, [&] {
    auto cfg = load_config(common);
    if (args.dataset) cfg.dataset = *args.dataset;
    if (!args.metrics.empty()) cfg.metrics = args.metrics;
    if (cfg.metrics.empty()) throw ConfigError("no metric given (--metric or config 'metrics')");
    std::vector<MetricSpec> specs;
    for (const auto& m : cfg.metrics) specs.push_back(MetricSpec::parse(m));
    Runtime rt(cfg);
    auto ds = prepare_dataset(rt, specs);
    auto tuples = make_tuples(ds, LoadOptions{cfg.policy, {}});
    if (tuples.empty()) throw DatasetError(0, "dataset has no task with at least two responses");

    bool needs_prep = false;
    for (const auto& s : specs) needs_prep = needs_prep || s.needs_preprocessing();
    std::vector<std::string> prep_failures;
    if (needs_prep) {
      auto& prep = rt.preprocessor();
      // Normalize each distinct response once; tuples share copies.
      std::map<std::pair<std::string, std::string>, std::optional<std::string>> done;
      for (const auto& [tid, rs] : ds.responses)
        for (const auto& r : rs) done[{r.task_id, r.author_id}] = r.preprocessed_text;
      std::vector<std::pair<std::string, std::string>> keys;
      for (const auto& [k, v] : done)
        if (!v) keys.push_back(k);
      std::vector<std::optional<std::string>> texts(keys.size());
      util::parallel_for(keys.size(), cfg.workers, [&](std::size_t i) {
        for (const auto& r : ds.responses_of(keys[i].first))
          if (r.author_id == keys[i].second) {
            try {
              texts[i] = prep.normalize(r).text();
            } catch (const NormalizationError& e) {
              log::warn(e.what());
            }
          }
      });
      for (std::size_t i = 0; i < keys.size(); ++i) {
        done[keys[i]] = texts[i];
        if (!texts[i]) prep_failures.push_back(keys[i].first + "/" + keys[i].second);
      }
      for (auto& t : tuples) {
        t.candidate.preprocessed_text = done[{t.candidate.task_id, t.candidate.author_id}];
        for (auto& r : t.references) r.preprocessed_text = done[{r.task_id, r.author_id}];
      }
    }

    auto scorer = rt.scorer(specs);
    std::ostringstream records;
    json summary = json::object();
    summary["config_hash"] = cfg.hash();
    summary["tuples"] = tuples.size();
    summary["excluded_responses"] = prep_failures;
    json per_metric = json::array();
    bool any_failure = false;
    for (const auto& spec : specs) {
      const auto scores = score_tuples(scorer, spec, tuples, cfg.workers);
      std::vector<double> values;
      std::vector<double> grades, graded_values;
      std::size_t failed = 0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        for (const auto& rec : scores[i].records) {
          if (rec.is_pmi() && !rec.pmi_identity_holds()) throw IntegrityError("PMI identity violated in " + rec.tuple_id);
          records << to_json(rec).dump() << '\n';
        }
        for (const auto& f : scores[i].failures)
          records << json{{"tuple_id", scores[i].tuple_id}, {"metric", spec.label()}, {"error", f}}.dump() << '\n';
        if (!scores[i].value) {
          ++failed;
          continue;
        }
        values.push_back(*scores[i].value);
        if (auto g = tuples[i].candidate.grade()) {
          grades.push_back(*g);
          graded_values.push_back(*scores[i].value);
        }
      }
      json m = {{"metric", spec.label()}, {"scored", values.size()}, {"failed", failed}};
      if (!values.empty()) {
        const auto est = summarize_values(values, cfg.ci());
        m["mean"] = est.mean_pmi;
        m["ci_low"] = est.ci_low;
        m["ci_high"] = est.ci_high;
        m["std_error"] = est.std_error;
        m["level"] = cfg.level;
      }
      if (graded_values.size() >= 3) {
        try {
          const auto c = stats::spearman(graded_values, grades);
          m["spearman_vs_grade"] = {{"rho", c.rho}, {"p", c.p}, {"n", c.n}};
        } catch (const ValidationError& e) {
          m["spearman_vs_grade"] = {{"error", e.what()}};
        }
      }
      any_failure = any_failure || failed > 0;
      per_metric.push_back(m);
    }
    summary["metrics"] = per_metric;
    write_file(args.out, records.str());
    write_file(args.out.string() + ".summary.json", summary.dump(2) + "\n");
    write_file(args.out.string() + ".config.json", snapshot_text(cfg));
    if (common.json_output) {
      *common.out << summary.dump(2) << '\n';
    } else {
      for (const auto& m : per_metric) {
        *common.out << m["metric"].get<std::string>() << ": n=" << m["scored"].get<std::size_t>();
        if (m.contains("mean"))
          *common.out << " mean=" << fixed(m["mean"]) << " CI=[" << fixed(m["ci_low"]) << ", " << fixed(m["ci_high"])
                      << "]";
        if (m["failed"].get<std::size_t>() > 0) *common.out << " failed=" << m["failed"].get<std::size_t>();
        if (m.contains("spearman_vs_grade") && m["spearman_vs_grade"].contains("rho"))
          *common.out << " rho_vs_grade=" << fixed(m["spearman_vs_grade"]["rho"], 3);
        *common.out << '\n';
      }
      *common.out << "records: " << args.out.string() << '\n';
    }
    return any_failure ? kExitFailure : kExitOk;
  });
}

// --- validate ----------------------------------------------------------------

struct ValidateArgs {
  std::string metric;
  std::string strategy;
  std::optional<std::filesystem::path> dataset;
  std::filesystem::path report = "validation.json";
};

inline json to_json(const ValidationResult& r) {
  json pairs = json::array();
  for (std::size_t i = 0; i < r.pairs.size(); ++i)
    pairs.push_back({{"tuple_id", r.pairs.ids[i]}, {"pre", r.pairs.pre[i]}, {"post", r.pairs.post[i]}});
  json failures = json::array();
  for (const auto& f : r.failures) failures.push_back({{"tuple_id", f.tuple_id}, {"error", f.message}});
  return {{"metric", r.metric},
          {"strategy", r.strategy},
          {"n", r.pairs.size()},
          {"tuples", r.tuples},
          {"smd", r.smd.d},
          {"ci_low", r.smd.ci_low},
          {"ci_high", r.smd.ci_high},
          {"ci_level", r.smd.ci.level},
          {"resamples", r.smd.ci.resamples},
          {"mu", r.smd.mu},
          {"mu_prime", r.smd.mu_prime},
          {"sigma", r.smd.sigma},
          {"sigma_prime", r.smd.sigma_prime},
          {"sd_convention", std::string(stats::to_string(r.smd.convention))},
          {"significance", std::string(stats::to_string(r.significance))},
          {"pairs", pairs},
          {"failures", failures}};
}

inline int cmd_validate(const CommonArgs& common, const ValidateArgs& args) {
  return guarded(common, [&] {
    auto cfg = load_config(common);
    if (args.dataset) cfg.dataset = *args.dataset;
    const auto spec = MetricSpec::parse(args.metric);
    Runtime rt(cfg);
    auto ds = prepare_dataset(rt, {spec});
    auto tuples = make_tuples(ds, LoadOptions{cfg.policy, {}});
    if (tuples.empty()) throw DatasetError(0, "dataset has no task with at least two responses");
    auto transform = rt.transform(args.strategy);
    auto scorer = rt.scorer({spec});
    ValidationOptions vo{cfg.ci(), cfg.sd, cfg.workers};
    Preprocessor* prep = spec.needs_preprocessing() ? &rt.preprocessor() : nullptr;
    const auto res = run_validation(tuples, scorer, spec, *transform, prep, vo);
    json report = to_json(res);
    report["config_hash"] = cfg.hash();
    write_file(args.report, report.dump(2) + "\n");
    write_file(args.report.string() + ".config.json", snapshot_text(cfg));
    if (common.json_output) {
      *common.out << report.dump(2) << '\n';
    } else {
      *common.out << res.metric << " under " << res.strategy << ": SMD=" << fixed(res.smd.d, 3) << " "
                  << fixed(cfg.level * 100, 0) << "% CI=[" << fixed(res.smd.ci_low, 3) << ", "
                  << fixed(res.smd.ci_high, 3) << "] n=" << res.pairs.size() << " (" << stats::to_string(res.significance)
                  << ")\n";
    }
    return res.failures.empty() ? kExitOk : kExitFailure;
  });
}

// --- bench -------------------------------------------------------------------

struct BenchArgs {
  std::optional<std::filesystem::path> dataset;
  std::filesystem::path out = "bench-out";
};

inline int cmd_bench(const CommonArgs& common, const BenchArgs& args) {
  return guarded(common, [&] {
    auto cfg = load_config(common);
    if (args.dataset) cfg.dataset = *args.dataset;
    if (cfg.bench_models.empty()) throw ConfigError("bench.models is empty");
    std::vector<MetricSpec> variants;
    for (const auto& v : cfg.bench_variants) variants.push_back(MetricSpec::parse(v));
    Runtime rt(cfg);
    auto ds = prepare_dataset(rt, variants);
    auto scorer = rt.scorer(variants);
    bench::BenchOptions bo;
    bo.variants = variants;
    bo.ci = stats::CiSpec{cfg.seed, cfg.resamples, cfg.bench_level, cfg.workers};
    bo.workers = cfg.workers;
    auto run = bench::run_bench(ds, cfg.bench_models, rt.gateway_for("generation"), scorer,
                                rt.preprocessor_if_configured(), bo, rt.prompts(), static_cast<std::int64_t>(cfg.seed));
    run.config_hash = cfg.hash();
    run.dataset_id = cfg.dataset->filename().string();
    std::ostringstream audit, excl, fails;
    for (const auto& a : run.audit) audit << a.dump() << '\n';
    for (const auto& e : run.exclusions) excl << json{{"task_id", e.task_id}, {"reason", e.reason}}.dump() << '\n';
    for (const auto& f : run.failures)
      fails << json{{"model", f.model}, {"task_id", f.task_id}, {"error", f.error}}.dump() << '\n';
    const auto text = bench::leaderboard_text(run);
    write_file(args.out / "leaderboard.txt", text);
    write_file(args.out / "leaderboard.csv", bench::leaderboard_csv(run));
    write_file(args.out / "audit.jsonl", audit.str());
    write_file(args.out / "exclusions.jsonl", excl.str());
    write_file(args.out / "generation_failures.jsonl", fails.str());
    write_file(args.out / "config.json", snapshot_text(cfg));
    if (common.json_output) {
      json rows = json::array();
      for (const auto* r : bench::sorted_rows(run)) {
        json cells = json::object();
        for (const auto& [v, c] : r->cells)
          cells[v] = c.estimate ? json{{"mean", c.estimate->mean_pmi}, {"ci_low", c.estimate->ci_low},
                                       {"ci_high", c.estimate->ci_high}, {"n", c.tasks_scored}, {"partial", c.partial()}}
                                : json(nullptr);
        rows.push_back({{"model", r->model}, {"cells", cells}});
      }
      *common.out << json{{"rows", rows}, {"excluded", run.exclusions.size()}, {"config_hash", run.config_hash}}.dump(2)
                  << '\n';
    } else {
      *common.out << text;
    }
    return run.failures.empty() ? kExitOk : kExitFailure;
  });
}

// --- oracle-check ------------------------------------------------------------

struct OracleCheckArgs {
  std::size_t n = 10000;
  std::uint64_t seed = 1;
  std::vector<double> eps = {0.0, 0.01, 0.05};
  std::size_t structures = 10;  // random structures for consistency
  std::size_t garblings = 20;   // random (sigma, gamma) pairs per eps
  std::optional<std::filesystem::path> structure_dir;
  std::optional<std::filesystem::path> report;
};

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Mean PMI of (x, y) samples through the scoring pipeline on an oracle
/// backend; `channel` replaces the candidate letter (e.g. 'g').
inline MiEstimate oracle_estimate(std::shared_ptr<lm::Backend> backend,
                                  const std::vector<oracle::Sample>& samples, const stats::CiSpec& ci,
                                  char channel = 'x', const oracle::Matrix* gamma = nullptr,
                                  std::uint64_t garble_seed = 0) {
  lm::GatewayOptions go;
  go.memory_cache = false;
  lm::Gateway gw(std::move(backend), go);
  PmiEngine eng(gw, "oracle");
  std::vector<PmiPair> pairs;
  pairs.reserve(samples.size());
  util::Rng rng(garble_seed, 0x6a);
  for (const auto& s : samples) {
    std::size_t x = s.x;
    if (gamma) x = rng.categorical((*gamma)[s.x]);
    pairs.push_back({oracle::symbol(channel, x), oracle::symbol('y', s.y), std::nullopt});
  }
  return eng.estimate_mi(pairs, ScoringTemplate::judgment_prediction(), ci);
}

inline std::vector<CheckLine> oracle_checks(const OracleCheckArgs& a) {
  std::vector<CheckLine> out;
  stats::CiSpec ci{a.seed, 1000, 0.95, 1};
  // BSC(0.25) exactness.
  {
    oracle::DiscreteStructure bsc{{0.5, 0.5}, {{1, 0}, {0, 1}}, {{0.75, 0.25}, {0.25, 0.75}}, std::nullopt};
    const double h = -0.25 * std::log(0.25) - 0.75 * std::log(0.75);
    const double got = oracle::exact_mi(bsc), want = std::log(2.0) - h;
    out.push_back({"bsc-exact", std::abs(got - want) < 1e-9, "exact=" + fixed(got, 12) + " analytic=" + fixed(want, 12)});
  }
  // Shipped structures plus random ones: estimator within 3 SE.
  std::vector<std::pair<std::string, oracle::DiscreteStructure>> structs;
  if (a.structure_dir && std::filesystem::is_directory(*a.structure_dir)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(*a.structure_dir))
      if (e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) structs.emplace_back(f.filename().string(), oracle::read_structure_file(f.string()));
  }
  for (std::size_t i = 0; i < a.structures; ++i)
    structs.emplace_back("random-" + std::to_string(i), oracle::random_structure({3 + i % 3, 4, 4, 0, 4.0}, a.seed + i));
  for (std::size_t i = 0; i < structs.size(); ++i) {
    const auto& [name, s] = structs[i];
    auto backend = std::make_shared<oracle::OracleBackend>(s);
    const auto samples = oracle::sample(s, a.n, a.seed * 1000 + i);
    const auto est = oracle_estimate(backend, samples, ci);
    const double exact = oracle::exact_mi(s);
    const double gap = std::abs(est.mean_pmi - exact);
    out.push_back({"consistency/" + name, gap <= 3 * est.std_error + 1e-12,
                   "estimate=" + fixed(est.mean_pmi) + " exact=" + fixed(exact) + " se=" + fixed(est.std_error)});
  }
  // Garbling monotonicity under KL-bounded noise.
  for (double eps : a.eps) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < a.garblings; ++i) {
      const auto s = oracle::random_structure({4, 4, 4, 0, 4.0}, a.seed * 7919 + i);
      const auto gamma = oracle::random_garbling(4, a.seed * 104729 + i);
      oracle::OracleOptions oo{eps, a.seed + i};
      auto backend = std::make_shared<oracle::OracleBackend>(s, oo);
      backend->add_channel('g', oracle::compose(s.candidate, gamma));
      const auto samples = oracle::sample(s, a.n, a.seed * 31 + i);
      const auto hi = oracle_estimate(backend, samples, ci);
      const auto lo = oracle_estimate(backend, samples, ci, 'g', &gamma, a.seed + 17 * i);
      const double se = std::sqrt(hi.std_error * hi.std_error + lo.std_error * lo.std_error);
      if (lo.mean_pmi <= hi.mean_pmi + eps + 3 * se) ++ok;
    }
    const std::size_t need = a.garblings - a.garblings / 20;
    out.push_back({"monotonicity/eps=" + fixed(eps, 3), ok >= need,
                   std::to_string(ok) + "/" + std::to_string(a.garblings) + " pairs satisfy the bound (need " +
                       std::to_string(need) + ")"});
  }
  return out;
}

inline int cmd_oracle_check(const CommonArgs& common, const OracleCheckArgs& args) {
  return guarded(common, [&] {
    if (args.n == 0) throw ConfigError("--n must be at least 1");
    const auto lines = oracle_checks(args);
    bool all = true;
    json j = json::array();
    std::ostringstream text;
    for (const auto& l : lines) {
      all = all && l.pass;
      j.push_back({{"check", l.name}, {"pass", l.pass}, {"detail", l.detail}});
      text << (l.pass ? "PASS " : "FAIL ") << l.name << "  " << l.detail << '\n';
    }
    text << (all ? "all checks passed\n" : "some checks failed\n");
    json report = {{"checks", j}, {"pass", all}, {"n", args.n}, {"seed", args.seed}};
    if (args.report) write_file(*args.report, report.dump(2) + "\n");
    *common.out << (common.json_output ? report.dump(2) + "\n" : text.str());
    return all ? kExitOk : kExitFailure;
  });
}

// --- cache -------------------------------------------------------------------

inline int cmd_cache(const CommonArgs& common, const std::string& action, std::optional<std::filesystem::path> dir) {
  return guarded(common, [&] {
    if (!dir) {
      auto cfg = load_config(common);
      if (!cfg.cache_dir) throw ConfigError("config has no cache_dir");
      dir = cfg.cache_dir;
    }
    if (action != "inspect" && action != "clear") throw ConfigError("cache action must be inspect or clear");
    // One tree holds every backend's entries (<dir>/<backend>/<shard>/<key>.json).
    lm::DiskCache cache(*dir);
    if (action == "clear") cache.clear();
    const auto st = cache.inspect();
    const std::size_t entries = st.entries, bytes = st.bytes;
    json j = json::array({{{"cache", dir->string()}, {"entries", entries}, {"bytes", bytes}}});
    if (common.json_output) {
      *common.out << json{{"caches", j}, {"entries", entries}, {"bytes", bytes}}.dump(2) << '\n';
    } else {
      for (const auto& c : j)
        *common.out << c["cache"].get<std::string>() << ": " << c["entries"].get<std::size_t>() << " entries, "
                    << c["bytes"].get<std::size_t>() << " bytes\n";
      *common.out << (action == "clear" ? "cleared; " : "") << "total " << entries << " entries, " << bytes << " bytes\n";
    }
    return kExitOk;
  });
}

}  // namespace gem::cli
