#pragma once

// Data model for tasks, responses, evaluation tuples and score records,
// plus the line-delimited dataset format (one task or response per line).

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gem/error.hpp"

namespace gem {

using json = nlohmann::json;

/// Literal used for an absent slot in scoring prompts. Changing it changes
/// the marginal distribution being measured.
inline constexpr std::string_view kNotAvailable = "Not Available";

struct Task {
  std::string id;
  std::string full_text;
  std::string abstract;
  /// Extra synopses by kind ("assw", ...). "abstract" may override the
  /// abstract field when present.
  std::map<std::string, std::string> synopses;
  /// Unknown fields from the source record, written back verbatim.
  json extra = json::object();

  /// Synopsis text conditioned out by GEM-S. "abstract" is the abstract;
  /// "assw" is the abstract supplemented with the author-stated strengths
  /// and weaknesses summary; any other kind is looked up in `synopses`.
  std::optional<std::string> synopsis_text(std::string_view kind) const {
    if (kind == "abstract") {
      if (auto it = synopses.find("abstract"); it != synopses.end() && !it->second.empty())
        return it->second;
      if (abstract.empty()) return std::nullopt;
      return abstract;
    }
    auto it = synopses.find(std::string(kind));
    if (it == synopses.end() || it->second.empty()) return std::nullopt;
    if (kind == "assw") {
      if (abstract.empty()) return std::nullopt;
      return abstract + "\n\n" + it->second;
    }
    return it->second;
  }

  bool operator==(const Task&) const = default;
};

enum class ResponseRole { candidate, reference };

inline std::string_view to_string(ResponseRole r) {
  return r == ResponseRole::candidate ? "candidate" : "reference";
}

inline ResponseRole parse_role(std::string_view s) {
  if (s == "candidate") return ResponseRole::candidate;
  if (s == "reference") return ResponseRole::reference;
  throw ValidationError("unknown response role '" + std::string(s) + "'");
}

struct Response {
  std::string task_id;
  std::string author_id;
  std::string raw_text;
  std::optional<std::string> preprocessed_text;
  ResponseRole role = ResponseRole::reference;
  json extra = json::object();

  /// Instructor grade from grading datasets: "A"/"B"/"C" map to 3/2/1,
  /// numbers pass through.
  std::optional<double> grade() const {
    auto it = extra.find("grade");
    if (it == extra.end() || it->is_null()) return std::nullopt;
    if (it->is_number()) return it->get<double>();
    if (it->is_string()) {
      const auto g = it->get<std::string>();
      if (g == "A") return 3.0;
      if (g == "B") return 2.0;
      if (g == "C") return 1.0;
      try {
        std::size_t used = 0;
        double v = std::stod(g, &used);
        if (used == g.size()) return v;
      } catch (const std::exception&) {
      }
    }
    return std::nullopt;
  }

  bool operator==(const Response&) const = default;
};

struct EvalTuple {
  std::shared_ptr<const Task> task;
  Response candidate;
  std::vector<Response> references;

  std::string id() const { return candidate.task_id + "::" + candidate.author_id; }
};

inline void validate_tuple(const EvalTuple& t) {
  if (!t.task) throw ValidationError("tuple without task");
  if (t.references.empty()) throw ValidationError("tuple " + t.id() + " has no references");
  if (t.candidate.task_id != t.task->id) throw ValidationError("candidate task_id mismatch in " + t.id());
  for (const auto& r : t.references) {
    if (r.task_id != t.task->id) throw ValidationError("reference task_id mismatch in " + t.id());
    if (r.author_id == t.candidate.author_id)
      throw ValidationError("candidate author '" + r.author_id + "' also appears as reference in " + t.id());
  }
}

enum class PairingPolicy { each_vs_rest, fixed_candidate };

inline PairingPolicy parse_policy(std::string_view s) {
  if (s == "each-vs-rest") return PairingPolicy::each_vs_rest;
  if (s == "fixed-candidate") return PairingPolicy::fixed_candidate;
  throw ConfigError("unknown pairing policy '" + std::string(s) + "'");
}

/// Builds evaluation tuples for one task. With fixed_candidate the candidate
/// is `candidate_author` when given, else the unique response whose role is
/// candidate; every other response becomes a reference.
inline std::vector<EvalTuple> pair_responses(const std::shared_ptr<const Task>& task,
                                             const std::vector<Response>& responses, PairingPolicy policy,
                                             std::optional<std::string> candidate_author = std::nullopt) {
  if (!task) throw PreconditionError("pair_responses: null task");
  if (responses.size() < 2)
    throw PreconditionError("task " + task->id + ": pairing needs at least 2 responses, got " +
                            std::to_string(responses.size()));
  std::vector<EvalTuple> out;
  auto make = [&](std::size_t cand) {
    EvalTuple t{task, responses[cand], {}};
    for (std::size_t k = 0; k < responses.size(); ++k)
      if (k != cand) t.references.push_back(responses[k]);
    validate_tuple(t);
    return t;
  };
  if (policy == PairingPolicy::each_vs_rest) {
    for (std::size_t j = 0; j < responses.size(); ++j) out.push_back(make(j));
    return out;
  }
  std::optional<std::size_t> cand;
  for (std::size_t j = 0; j < responses.size(); ++j) {
    const bool hit = candidate_author ? responses[j].author_id == *candidate_author
                                      : responses[j].role == ResponseRole::candidate;
    if (!hit) continue;
    if (cand) throw ValidationError("task " + task->id + ": more than one designated candidate");
    cand = j;
  }
  if (!cand) throw ValidationError("task " + task->id + ": no designated candidate response");
  out.push_back(make(*cand));
  return out;
}

enum class DatasetFormat { review_jsonl, grading_jsonl };

inline DatasetFormat parse_format(std::string_view s) {
  if (s == "review-jsonl") return DatasetFormat::review_jsonl;
  if (s == "grading-jsonl") return DatasetFormat::grading_jsonl;
  throw ConfigError("unknown dataset format '" + std::string(s) + "'");
}

struct Dataset {
  std::vector<std::shared_ptr<const Task>> tasks;
  /// Responses grouped by task id, in file order.
  std::map<std::string, std::vector<Response>> responses;

  std::shared_ptr<const Task> find_task(std::string_view id) const {
    for (const auto& t : tasks)
      if (t->id == id) return t;
    return nullptr;
  }

  const std::vector<Response>& responses_of(const std::string& task_id) const {
    static const std::vector<Response> kEmpty;
    auto it = responses.find(task_id);
    return it == responses.end() ? kEmpty : it->second;
  }

  std::size_t response_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : responses) n += v.size();
    return n;
  }
};

namespace detail {

inline std::string required_string(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_string())
    throw DatasetError(line, std::string("missing or non-string field '") + key + "'");
  return it->get<std::string>();
}

inline json leftover(const json& rec, std::initializer_list<const char*> known) {
  json extra = json::object();
  for (auto it = rec.begin(); it != rec.end(); ++it) {
    bool is_known = false;
    for (const char* k : known) is_known = is_known || it.key() == k;
    if (!is_known) extra[it.key()] = it.value();
  }
  return extra;
}

}  // namespace detail

inline Dataset read_dataset(std::istream& in, DatasetFormat format) {
  Dataset ds;
  std::set<std::string> task_ids;
  std::set<std::pair<std::string, std::string>> authors;
  std::vector<std::pair<std::size_t, std::string>> response_lines;  // for dangling check
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!rec.is_object()) throw DatasetError(lineno, "record is not a JSON object");
    const auto kind = detail::required_string(rec, "kind", lineno);
    if (kind == "task") {
      auto t = std::make_shared<Task>();
      t->id = detail::required_string(rec, "id", lineno);
      t->full_text = rec.value("full_text", "");
      t->abstract = rec.value("abstract", "");
      if (auto it = rec.find("synopses"); it != rec.end()) {
        if (!it->is_object()) throw DatasetError(lineno, "'synopses' must be an object");
        for (auto s = it->begin(); s != it->end(); ++s) {
          if (!s.value().is_string()) throw DatasetError(lineno, "synopsis '" + s.key() + "' is not a string");
          t->synopses[s.key()] = s.value().get<std::string>();
        }
      }
      t->extra = detail::leftover(rec, {"kind", "id", "full_text", "abstract", "synopses"});
      if (!task_ids.insert(t->id).second) throw DatasetError(lineno, "duplicate task id '" + t->id + "'");
      ds.tasks.push_back(std::move(t));
    } else if (kind == "response") {
      Response r;
      r.task_id = detail::required_string(rec, "task_id", lineno);
      r.author_id = detail::required_string(rec, "author_id", lineno);
      r.raw_text = detail::required_string(rec, "raw_text", lineno);
      if (r.raw_text.empty()) throw DatasetError(lineno, "empty raw_text");
      try {
        r.role = parse_role(rec.value("role", "reference"));
      } catch (const ValidationError& e) {
        throw DatasetError(lineno, e.what());
      }
      if (auto it = rec.find("preprocessed_text"); it != rec.end() && it->is_string())
        r.preprocessed_text = it->get<std::string>();
      r.extra = detail::leftover(rec, {"kind", "task_id", "author_id", "raw_text", "preprocessed_text", "role"});
      if (format == DatasetFormat::grading_jsonl && !r.grade())
        throw DatasetError(lineno, "grading record without a usable 'grade'");
      if (!authors.insert({r.task_id, r.author_id}).second)
        throw DatasetError(lineno, "duplicate author '" + r.author_id + "' on task '" + r.task_id + "'");
      response_lines.emplace_back(lineno, r.task_id);
      ds.responses[r.task_id].push_back(std::move(r));
    } else {
      throw DatasetError(lineno, "unknown record kind '" + kind + "'");
    }
  }
  for (const auto& [ln, tid] : response_lines)
    if (!task_ids.count(tid)) throw DatasetError(ln, "response references undeclared task '" + tid + "'");
  return ds;
}

inline Dataset read_dataset(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream in(path);
  if (!in) throw DatasetError(0, "cannot open dataset " + path.string());
  return read_dataset(in, format);
}

inline json to_json(const Task& t) {
  json rec = t.extra;
  rec["kind"] = "task";
  rec["id"] = t.id;
  rec["full_text"] = t.full_text;
  rec["abstract"] = t.abstract;
  if (!t.synopses.empty()) rec["synopses"] = t.synopses;
  return rec;
}

inline json to_json(const Response& r) {
  json rec = r.extra;
  rec["kind"] = "response";
  rec["task_id"] = r.task_id;
  rec["author_id"] = r.author_id;
  rec["role"] = std::string(to_string(r.role));
  rec["raw_text"] = r.raw_text;
  if (r.preprocessed_text) rec["preprocessed_text"] = *r.preprocessed_text;
  return rec;
}

inline void write_dataset(const Dataset& ds, std::ostream& out) {
  for (const auto& t : ds.tasks) out << to_json(*t).dump() << '\n';
  for (const auto& t : ds.tasks)
    for (const auto& r : ds.responses_of(t->id)) out << to_json(r).dump() << '\n';
}

struct LoadOptions {
  PairingPolicy policy = PairingPolicy::each_vs_rest;
  /// Synopsis kinds every task must provide (e.g. "abstract" for GEM-S).
  std::vector<std::string> required_synopses;
};

inline void require_synopses(const Task& t, const std::vector<std::string>& kinds) {
  for (const auto& k : kinds)
    if (!t.synopsis_text(k)) throw ValidationError("task '" + t.id + "' lacks synopsis of kind '" + k + "'");
}

inline std::vector<EvalTuple> make_tuples(const Dataset& ds, const LoadOptions& opts) {
  std::vector<EvalTuple> out;
  for (const auto& task : ds.tasks) {
    const auto& rs = ds.responses_of(task->id);
    if (rs.empty()) continue;
    require_synopses(*task, opts.required_synopses);
    auto tuples = pair_responses(task, rs, opts.policy);
    out.insert(out.end(), std::make_move_iterator(tuples.begin()), std::make_move_iterator(tuples.end()));
  }
  return out;
}

inline std::vector<EvalTuple> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                           const LoadOptions& opts = {}) {
  return make_tuples(read_dataset(path, format), opts);
}

/// One metric evaluation of (task, candidate, reference). For PMI metrics
/// `value` is exactly conditional_logprob - marginal_logprob.
struct ScoreRecord {
  std::string tuple_id;
  std::string reference_author;
  std::string metric_name;
  double value = 0.0;
  std::map<std::string, double> components;
  std::string model_id;
  std::vector<std::string> prompt_hashes;
  std::string audit;  // free-form payload (e.g. examiner analysis)

  bool is_pmi() const { return components.count("conditional_logprob") && components.count("marginal_logprob"); }

  /// Exact (not approximate) subtraction identity for PMI records.
  bool pmi_identity_holds() const {
    if (!is_pmi()) return true;
    return value == components.at("conditional_logprob") - components.at("marginal_logprob");
  }
};

inline json to_json(const ScoreRecord& r) {
  json j;
  j["tuple_id"] = r.tuple_id;
  j["reference_author"] = r.reference_author;
  j["metric"] = r.metric_name;
  j["value"] = r.value;
  j["components"] = r.components;
  j["provenance"] = {{"model_id", r.model_id}, {"prompt_hashes", r.prompt_hashes}};
  if (!r.audit.empty()) j["audit"] = r.audit;
  return j;
}

}  // namespace gem
