#pragma once

// Review-generation benchmark: candidate models write reviews for each
// paper, the reviews are scored against held-out human references, and
// per-model means with bootstrap intervals form a leaderboard.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gem/core/data.hpp"
#include "gem/error.hpp"
#include "gem/lm/gateway.hpp"
#include "gem/metrics.hpp"
#include "gem/pmi.hpp"
#include "gem/preprocess.hpp"
#include "gem/prompts.hpp"
#include "gem/stats.hpp"
#include "gem/util/log.hpp"
#include "gem/util/parallel.hpp"

namespace gem::bench {

inline constexpr const char* kHumanRow = "human";
inline constexpr double kDisplayScale = 100.0;

inline const std::vector<std::string>& review_blocks() {
  static const std::vector<std::string> blocks = {"summary", "strengths", "weaknesses", "questions"};
  return blocks;
}

struct GeneratedReview {
  std::string model;
  std::string task_id;
  std::optional<Response> review;
  std::string error;
  bool context_exceeded = false;
};

/// Throws ParseError naming the first missing block.
inline void check_review_blocks(const std::string& text) {
  for (const auto& b : review_blocks())
    if (!extract_tag(text, b)) throw ParseError("generated review lacks <" + b + "> block");
}

inline GeneratedReview generate_review(lm::Gateway& gw, const std::string& model, const Task& task,
                                       const prompts::PromptSet& prompts, std::optional<std::int64_t> seed) {
  GeneratedReview g;
  g.model = model;
  g.task_id = task.id;
  try {
    if (task.full_text.empty()) throw PreconditionError("task '" + task.id + "' has no full text");
    lm::PromptBundle b;
    b.system = prompts.review_generation();
    b.user = task.full_text;
    b.params.model_id = model;
    b.params.temperature = 0.0;
    b.params.seed = seed;
    b.params.max_tokens = 4096;
    auto text = gw.complete(b);
    check_review_blocks(text);
    Response r;
    r.task_id = task.id;
    r.author_id = "model:" + model;
    r.raw_text = std::move(text);
    r.role = ResponseRole::candidate;
    g.review = std::move(r);
  } catch (const ContextLengthError& e) {
    g.context_exceeded = true;
    g.error = e.what();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    g.error = e.what();
  }
  return g;
}

inline std::vector<GeneratedReview> generate_reviews(lm::Gateway& gw, const std::string& model,
                                                     const std::vector<std::shared_ptr<const Task>>& tasks,
                                                     const prompts::PromptSet& prompts = {},
                                                     std::optional<std::int64_t> seed = 0, std::size_t workers = 1) {
  std::vector<GeneratedReview> out(tasks.size());
  util::parallel_for(tasks.size(), workers,
                     [&](std::size_t i) { out[i] = generate_review(gw, model, *tasks[i], prompts, seed); });
  return out;
}

/// Human candidate and references of a task: the response marked as
/// candidate (else the first author in sorted order) plays the human
/// candidate; the rest are references shared by every model.
struct BenchTask {
  std::shared_ptr<const Task> task;
  Response human;
  std::vector<Response> references;
};

inline std::vector<BenchTask> bench_tasks(const Dataset& ds) {
  std::vector<BenchTask> out;
  for (const auto& t : ds.tasks) {
    auto rs = ds.responses_of(t->id);
    if (rs.size() < 2) {
      log::warn("bench: task '" + t->id + "' has fewer than 2 human reviews; skipped");
      continue;
    }
    std::sort(rs.begin(), rs.end(), [](const Response& a, const Response& b) { return a.author_id < b.author_id; });
    auto cand = std::find_if(rs.begin(), rs.end(), [](const Response& r) { return r.role == ResponseRole::candidate; });
    if (cand == rs.end()) cand = rs.begin();
    BenchTask bt;
    bt.task = t;
    bt.human = *cand;
    for (auto it = rs.begin(); it != rs.end(); ++it)
      if (it != cand) bt.references.push_back(*it);
    out.push_back(std::move(bt));
  }
  return out;
}

struct BenchCell {
  std::optional<MiEstimate> estimate;
  std::size_t tasks_scored = 0;
  std::size_t tasks_failed = 0;
  bool partial() const { return tasks_failed > 0 || !estimate; }
};

struct BenchRow {
  std::string model;
  bool human = false;
  std::map<std::string, BenchCell> cells;  // by variant label
};

struct Exclusion {
  std::string task_id;
  std::string reason;
};

struct BenchRun {
  std::string dataset_id;
  std::vector<std::string> models;
  std::vector<std::string> variants;
  std::vector<BenchRow> rows;  // models in input order, then the human baseline
  std::vector<Exclusion> exclusions;
  std::vector<GeneratedReview> failures;
  std::vector<json> audit;
  std::string config_hash;

  const BenchRow& row(const std::string& model) const {
    for (const auto& r : rows)
      if (r.model == model) return r;
    throw PreconditionError("no leaderboard row for '" + model + "'");
  }
};

struct BenchOptions {
  std::vector<MetricSpec> variants;
  stats::CiSpec ci{0, 10000, 0.90, 1};
  std::size_t workers = 1;
};

/// Scores already generated candidates. `candidates[model][task_id]` is the
/// model's review; tasks missing for a model count as failures for that row.
inline BenchRun score_bench(const std::vector<BenchTask>& tasks,
                            const std::map<std::string, std::map<std::string, Response>>& candidates,
                            const std::vector<std::string>& models, Scorer& scorer, Preprocessor* prep,
                            const BenchOptions& opts) {
  if (tasks.empty()) throw PreconditionError("bench: no tasks");
  if (opts.variants.empty()) throw PreconditionError("bench: no metric variants");
  BenchRun run;
  run.models = models;
  for (const auto& v : opts.variants) run.variants.push_back(v.label());

  bool needs_prep = false;
  for (const auto& v : opts.variants) needs_prep = needs_prep || v.needs_preprocessing();

  // References are shared by every row; preprocess them once.
  std::vector<BenchTask> prepared = tasks;
  std::vector<std::string> prep_errors(prepared.size());
  if (needs_prep && !prep) {
    bool missing = false;
    for (const auto& bt : prepared) {
      missing = missing || !bt.human.preprocessed_text;
      for (const auto& r : bt.references) missing = missing || !r.preprocessed_text;
    }
    for (const auto& [m, by_task] : candidates)
      for (const auto& [id, r] : by_task) missing = missing || !r.preprocessed_text;
    if (missing) throw PipelineOrderError("bench: variants need preprocessing but no preprocessor is configured");
  } else if (needs_prep) {
    util::parallel_for(prepared.size(), opts.workers, [&](std::size_t i) {
      try {
        for (auto& r : prepared[i].references)
          if (!r.preprocessed_text) prep->preprocess(r);
        if (!prepared[i].human.preprocessed_text) prep->preprocess(prepared[i].human);
      } catch (const Error& e) {
        prep_errors[i] = e.what();
      }
    });
  }

  auto score_row = [&](const std::string& label, bool human) {
    BenchRow row;
    row.model = label;
    row.human = human;
    for (const auto& v : opts.variants) {
      std::vector<std::optional<double>> values(prepared.size());
      std::vector<std::vector<json>> audits(prepared.size());
      util::parallel_for(prepared.size(), opts.workers, [&](std::size_t i) {
        const auto& bt = prepared[i];
        if (!prep_errors[i].empty()) return;
        std::optional<Response> cand;
        if (human) {
          cand = bt.human;
        } else {
          auto m = candidates.find(label);
          if (m == candidates.end()) return;
          auto c = m->second.find(bt.task->id);
          if (c == m->second.end()) return;
          cand = c->second;
        }
        try {
          if (v.needs_preprocessing() && !cand->preprocessed_text) prep->preprocess(*cand);
          EvalTuple t{bt.task, *cand, bt.references};
          const auto ts = score_tuple(scorer, v, t);
          values[i] = ts.value;
          for (const auto& rec : ts.records) {
            auto j = to_json(rec);
            j["row"] = label;
            audits[i].push_back(std::move(j));
          }
        } catch (const ConfigError&) {
          throw;
        } catch (const Error& e) {
          log::warn("bench: " + label + " on " + bt.task->id + ": " + e.what());
        }
      });
      BenchCell cell;
      std::vector<double> ok;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i]) ok.push_back(*values[i]);
        else ++cell.tasks_failed;
        for (auto& j : audits[i]) run.audit.push_back(std::move(j));
      }
      cell.tasks_scored = ok.size();
      if (!ok.empty()) cell.estimate = summarize_values(ok, opts.ci);
      row.cells[v.label()] = std::move(cell);
    }
    return row;
  };

  for (const auto& m : models) run.rows.push_back(score_row(m, false));
  run.rows.push_back(score_row(kHumanRow, true));
  return run;
}

/// Generation plus scoring. Tasks that exceed any model's context are
/// dropped for every model, keeping one common task set.
inline BenchRun run_bench(const Dataset& ds, const std::vector<std::string>& models, lm::Gateway& generator,
                          Scorer& scorer, Preprocessor* prep, const BenchOptions& opts,
                          const prompts::PromptSet& prompts = {}, std::optional<std::int64_t> seed = 0) {
  if (models.empty()) throw PreconditionError("bench: no candidate models");
  auto tasks = bench_tasks(ds);
  std::vector<std::shared_ptr<const Task>> task_ptrs;
  for (const auto& t : tasks) task_ptrs.push_back(t.task);

  std::map<std::string, std::vector<GeneratedReview>> generated;
  std::set<std::string> excluded;
  std::vector<Exclusion> exclusions;
  for (const auto& m : models) {
    generated[m] = generate_reviews(generator, m, task_ptrs, prompts, seed, opts.workers);
    for (const auto& g : generated[m])
      if (g.context_exceeded && excluded.insert(g.task_id).second)
        exclusions.push_back({g.task_id, "context length exceeded for " + m + ": " + g.error});
  }
  std::erase_if(tasks, [&](const BenchTask& t) { return excluded.count(t.task->id) > 0; });

  std::map<std::string, std::map<std::string, Response>> candidates;
  std::vector<GeneratedReview> failures;
  for (const auto& m : models)
    for (auto& g : generated[m]) {
      if (excluded.count(g.task_id)) continue;
      if (g.review) candidates[m][g.task_id] = *g.review;
      else failures.push_back(g);
    }
  auto run = score_bench(tasks, candidates, models, scorer, prep, opts);
  run.exclusions = std::move(exclusions);
  run.failures = std::move(failures);
  return run;
}

// --- presentation ------------------------------------------------------------

inline std::string fmt_scaled(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v * kDisplayScale);
  return buf;
}

/// Rows sorted by the first variant (descending, ties by name); the human
/// baseline always comes last.
inline std::vector<const BenchRow*> sorted_rows(const BenchRun& run) {
  std::vector<const BenchRow*> rows;
  for (const auto& r : run.rows)
    if (!r.human) rows.push_back(&r);
  const std::string key = run.variants.empty() ? "" : run.variants.front();
  auto score = [&](const BenchRow* r) {
    auto it = r->cells.find(key);
    return it != r->cells.end() && it->second.estimate ? it->second.estimate->mean_pmi : -1e300;
  };
  std::sort(rows.begin(), rows.end(), [&](auto a, auto b) {
    if (score(a) != score(b)) return score(a) > score(b);
    return a->model < b->model;
  });
  for (const auto& r : run.rows)
    if (r.human) rows.push_back(&r);
  return rows;
}

inline std::string leaderboard_text(const BenchRun& run) {
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> head = {"model"};
  for (const auto& v : run.variants) head.push_back(v + " (90% CI)");
  table.push_back(head);
  for (const auto* r : sorted_rows(run)) {
    std::vector<std::string> line = {r->model};
    for (const auto& v : run.variants) {
      const auto& c = r->cells.at(v);
      if (!c.estimate) {
        line.push_back("n/a");
        continue;
      }
      line.push_back(fmt_scaled(c.estimate->mean_pmi) + " [" + fmt_scaled(c.estimate->ci_low) + ", " +
                     fmt_scaled(c.estimate->ci_high) + "]" + (c.partial() ? " *" : ""));
    }
    table.push_back(line);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& l : table)
    for (std::size_t i = 0; i < l.size(); ++i) width[i] = std::max(width[i], l[i].size());
  std::ostringstream out;
  for (const auto& l : table) {
    for (std::size_t i = 0; i < l.size(); ++i) {
      out << l[i];
      if (i + 1 < l.size()) out << std::string(width[i] - l[i].size() + 2, ' ');
    }
    out << '\n';
  }
  out << "scores are mean PMI x100; * marks rows with failed tasks\n";
  return out.str();
}

inline std::string leaderboard_csv(const BenchRun& run) {
  std::ostringstream out;
  out << "model";
  for (const auto& v : run.variants) out << ',' << v << ',' << v << "_ci_low," << v << "_ci_high," << v << "_n";
  out << ",partial\n";
  for (const auto* r : sorted_rows(run)) {
    out << r->model;
    bool partial = false;
    for (const auto& v : run.variants) {
      const auto& c = r->cells.at(v);
      partial = partial || c.partial();
      if (c.estimate)
        out << ',' << fmt_scaled(c.estimate->mean_pmi) << ',' << fmt_scaled(c.estimate->ci_low) << ','
            << fmt_scaled(c.estimate->ci_high) << ',' << c.tasks_scored;
      else
        out << ",,,," << 0;
    }
    out << ',' << (partial ? "true" : "false") << '\n';
  }
  return out.str();
}

/// Spearman rho between two runs' model scores, per variant.
inline std::map<std::string, stats::Correlation> cross_model_consistency(const BenchRun& a, const BenchRun& b) {
  std::set<std::string> ma(a.models.begin(), a.models.end()), mb(b.models.begin(), b.models.end());
  if (ma != mb) throw ValidationError("runs cover different model sets");
  std::map<std::string, stats::Correlation> out;
  for (const auto& v : a.variants) {
    if (std::find(b.variants.begin(), b.variants.end(), v) == b.variants.end()) continue;
    std::vector<double> xa, xb;
    for (const auto& m : ma) {
      const auto& ca = a.row(m).cells.at(v);
      const auto& cb = b.row(m).cells.at(v);
      if (!ca.estimate || !cb.estimate) continue;
      xa.push_back(ca.estimate->mean_pmi);
      xb.push_back(cb.estimate->mean_pmi);
    }
    out[v] = stats::spearman(xa, xb);
  }
  if (out.empty()) throw ValidationError("runs share no metric variant");
  return out;
}

}  // namespace gem::bench
