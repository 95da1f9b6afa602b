#pragma once

// Exact information quantities on small discrete structures, and a scoring
// backend that answers log-probability queries from the exact tables.
//
// A structure is a task prior p(w) plus per-agent conditional tables
// sigma(w -> response). Agents are conditionally independent given w, so
// the joint is p(w) * sx(w,x) * sy(w,y) [* sz(w,z)].
//
// The backend speaks in symbol strings: channel letter + index ("x3", "y0",
// "z1"). Symbols found in the user prompt (and assistant prefix) are the
// conditioning event; the forced output must be exactly one symbol.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gem/error.hpp"
#include "gem/lm/types.hpp"
#include "gem/perturb.hpp"
#include "gem/util/hash.hpp"
#include "gem/util/rng.hpp"

namespace gem::oracle {

using Matrix = std::vector<std::vector<double>>;

inline constexpr std::size_t kMaxOutcomes = 64;
inline constexpr double kRowTolerance = 1e-12;

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0;
  double comp_ = 0;
};

inline void validate_row(const std::vector<double>& row, const std::string& what) {
  if (row.empty() || row.size() > kMaxOutcomes)
    throw ValidationError(what + ": row size must be in [1, " + std::to_string(kMaxOutcomes) + "]");
  CompensatedSum s;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError(what + ": negative or non-finite entry");
    s.add(p);
  }
  if (std::abs(s.value() - 1.0) > kRowTolerance)
    throw ValidationError(what + ": row sums to " + std::to_string(s.value()) + ", not 1");
}

inline void validate_stochastic(const Matrix& m, std::size_t rows, const std::string& what) {
  if (m.size() != rows)
    throw ValidationError(what + ": expected " + std::to_string(rows) + " rows, got " + std::to_string(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    validate_row(m[i], what + " row " + std::to_string(i));
    if (m[i].size() != m[0].size()) throw ValidationError(what + ": ragged matrix");
  }
}

struct DiscreteStructure {
  std::vector<double> prior;  // over tasks W
  Matrix candidate;           // W -> X
  Matrix reference;           // W -> Y
  std::optional<Matrix> synopsis;  // W -> Z

  std::size_t tasks() const { return prior.size(); }
  std::size_t candidate_outcomes() const { return candidate.empty() ? 0 : candidate[0].size(); }
  std::size_t reference_outcomes() const { return reference.empty() ? 0 : reference[0].size(); }
  std::size_t synopsis_outcomes() const { return synopsis && !synopsis->empty() ? (*synopsis)[0].size() : 0; }

  void validate() const {
    validate_row(prior, "prior");
    validate_stochastic(candidate, prior.size(), "candidate table");
    validate_stochastic(reference, prior.size(), "reference table");
    if (synopsis) validate_stochastic(*synopsis, prior.size(), "synopsis table");
  }
};

namespace detail {

inline double mi_of_joint(const Matrix& joint) {
  const std::size_t nx = joint.size(), ny = joint.empty() ? 0 : joint[0].size();
  std::vector<double> px(nx, 0.0), py(ny, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    CompensatedSum s;
    for (std::size_t y = 0; y < ny; ++y) s.add(joint[x][y]);
    px[x] = s.value();
  }
  for (std::size_t y = 0; y < ny; ++y) {
    CompensatedSum s;
    for (std::size_t x = 0; x < nx; ++x) s.add(joint[x][y]);
    py[y] = s.value();
  }
  CompensatedSum mi;
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) {
      const double p = joint[x][y];
      if (p <= 0) continue;
      mi.add(p * (std::log(p) - std::log(px[x]) - std::log(py[y])));
    }
  return std::max(0.0, mi.value());
}

inline double entropy(const std::vector<double>& p) {
  CompensatedSum h;
  for (double v : p)
    if (v > 0) h.add(-v * std::log(v));
  return h.value();
}

}  // namespace detail

/// Joint P(x, y) of candidate and reference, optionally restricted to z
/// (unnormalized: P(x, y, z)).
inline Matrix joint_xy(const DiscreteStructure& s, std::optional<std::size_t> z = std::nullopt) {
  const std::size_t nx = s.candidate_outcomes(), ny = s.reference_outcomes();
  Matrix joint(nx, std::vector<double>(ny, 0.0));
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) {
      CompensatedSum acc;
      for (std::size_t w = 0; w < s.tasks(); ++w) {
        double p = s.prior[w] * s.candidate[w][x] * s.reference[w][y];
        if (z) p *= (*s.synopsis)[w][*z];
        acc.add(p);
      }
      joint[x][y] = acc.value();
    }
  return joint;
}

/// I(X;Y) in nats by summation over the full joint table.
inline double exact_mi(const DiscreteStructure& s) {
  s.validate();
  return detail::mi_of_joint(joint_xy(s));
}

/// I(X;Y | Z) = sum_z P(z) I(X;Y | Z=z), in nats.
inline double exact_conditional_mi(const DiscreteStructure& s) {
  s.validate();
  if (!s.synopsis) throw ValidationError("conditional MI needs a synopsis table");
  CompensatedSum total;
  for (std::size_t z = 0; z < s.synopsis_outcomes(); ++z) {
    auto joint = joint_xy(s, z);
    CompensatedSum pz;
    for (const auto& row : joint)
      for (double p : row) pz.add(p);
    if (pz.value() <= 0) continue;
    for (auto& row : joint)
      for (double& p : row) p /= pz.value();
    total.add(pz.value() * detail::mi_of_joint(joint));
  }
  return std::max(0.0, total.value());
}

inline double candidate_entropy(const DiscreteStructure& s) {
  const auto j = joint_xy(s);
  std::vector<double> px;
  for (const auto& row : j) {
    CompensatedSum a;
    for (double p : row) a.add(p);
    px.push_back(a.value());
  }
  return detail::entropy(px);
}

inline double reference_entropy(const DiscreteStructure& s) {
  const auto j = joint_xy(s);
  std::vector<double> py(s.reference_outcomes(), 0.0);
  for (std::size_t y = 0; y < py.size(); ++y) {
    CompensatedSum a;
    for (const auto& row : j) a.add(row[y]);
    py[y] = a.value();
  }
  return detail::entropy(py);
}

/// Post-processes a W -> X table through gamma: out(w, x') = sum_x t(w, x) gamma(x, x').
inline Matrix compose(const Matrix& table, const Matrix& gamma) {
  const std::size_t nx = table.empty() ? 0 : table[0].size();
  validate_stochastic(gamma, nx, "garbling matrix");
  const std::size_t nout = gamma[0].size();
  Matrix out(table.size(), std::vector<double>(nout, 0.0));
  for (std::size_t w = 0; w < table.size(); ++w)
    for (std::size_t xo = 0; xo < nout; ++xo) {
      CompensatedSum acc;
      for (std::size_t x = 0; x < nx; ++x) acc.add(table[w][x] * gamma[x][xo]);
      out[w][xo] = acc.value();
    }
  return out;
}

/// Replaces the candidate table by its garbling (sigma_L = gamma . sigma_H).
inline DiscreteStructure garble(const DiscreteStructure& s, const Matrix& gamma) {
  if (gamma.size() != s.candidate_outcomes())
    throw ValidationError("garbling matrix has " + std::to_string(gamma.size()) + " rows but the candidate has " +
                          std::to_string(s.candidate_outcomes()) + " outcomes");
  DiscreteStructure out = s;
  out.candidate = compose(s.candidate, gamma);
  // Renormalize rounding drift so the result validates at 1e-12.
  for (auto& row : out.candidate) {
    CompensatedSum t;
    for (double p : row) t.add(p);
    for (double& p : row) p /= t.value();
  }
  return out;
}

struct Sample {
  std::size_t w = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  std::optional<std::size_t> z;
};

/// n i.i.d. draws of (w, x, y[, z]); deterministic in seed.
inline std::vector<Sample> sample(const DiscreteStructure& s, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw PreconditionError("sample: n must be at least 1");
  s.validate();
  util::Rng rng(seed);
  std::vector<Sample> out(n);
  for (auto& smp : out) {
    smp.w = rng.categorical(s.prior);
    smp.x = rng.categorical(s.candidate[smp.w]);
    smp.y = rng.categorical(s.reference[smp.w]);
    if (s.synopsis) smp.z = rng.categorical((*s.synopsis)[smp.w]);
  }
  return out;
}

inline std::string symbol(char channel, std::size_t index) { return std::string(1, channel) + std::to_string(index); }

// --- random structures -------------------------------------------------------

inline std::vector<double> random_row(util::Rng& rng, std::size_t n, double sharpness) {
  std::vector<double> row(n);
  double total = 0;
  for (auto& v : row) {
    v = std::pow(rng.uniform(), sharpness) + 1e-3;
    total += v;
  }
  for (auto& v : row) v /= total;
  return row;
}

struct RandomSpec {
  std::size_t tasks = 4;
  std::size_t candidate_outcomes = 4;
  std::size_t reference_outcomes = 4;
  std::size_t synopsis_outcomes = 0;  // 0: no synopsis
  double sharpness = 4.0;             // larger: more informative rows
};

inline DiscreteStructure random_structure(const RandomSpec& spec, std::uint64_t seed) {
  util::Rng rng(seed, 0x5eed);
  DiscreteStructure s;
  s.prior = random_row(rng, spec.tasks, 1.0);
  for (std::size_t w = 0; w < spec.tasks; ++w) {
    s.candidate.push_back(random_row(rng, spec.candidate_outcomes, spec.sharpness));
    s.reference.push_back(random_row(rng, spec.reference_outcomes, spec.sharpness));
  }
  if (spec.synopsis_outcomes > 0) {
    s.synopsis.emplace();
    for (std::size_t w = 0; w < spec.tasks; ++w) s.synopsis->push_back(random_row(rng, spec.synopsis_outcomes, spec.sharpness));
  }
  return s;
}

/// (1 - m) I + m R with m drawn from [min_mix, max_mix] and R random stochastic.
inline Matrix random_garbling(std::size_t n, std::uint64_t seed, double min_mix = 0.2, double max_mix = 0.9) {
  util::Rng rng(seed, 0x9a4b);
  const double m = min_mix + (max_mix - min_mix) * rng.uniform();
  Matrix g(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = random_row(rng, n, 1.0);
    for (auto& v : g[i]) v *= m;
    g[i][i] += 1.0 - m;
  }
  return g;
}

// --- plain-matrix text format ------------------------------------------------
//
//   prior <n>
//   p0 p1 ...
//   candidate <rows> <cols>
//   ...rows...
//   reference <rows> <cols>
//   ...rows...
//   synopsis <rows> <cols>      (optional)
//   ...rows...
// Blank lines and '#' comments are ignored.

inline void write_structure(const DiscreteStructure& s, std::ostream& out) {
  out.precision(17);
  out << "prior " << s.prior.size() << '\n';
  for (std::size_t i = 0; i < s.prior.size(); ++i) out << (i ? " " : "") << s.prior[i];
  out << '\n';
  auto put = [&](const char* name, const Matrix& m) {
    out << name << ' ' << m.size() << ' ' << (m.empty() ? 0 : m[0].size()) << '\n';
    for (const auto& row : m) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? " " : "") << row[i];
      out << '\n';
    }
  };
  put("candidate", s.candidate);
  put("reference", s.reference);
  if (s.synopsis) put("synopsis", *s.synopsis);
}

inline DiscreteStructure read_structure(std::istream& in) {
  std::stringstream cleaned;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    cleaned << line << '\n';
  }
  DiscreteStructure s;
  std::string name;
  auto read_matrix = [&](std::size_t rows, std::size_t cols) {
    Matrix m(rows, std::vector<double>(cols));
    for (auto& row : m)
      for (auto& v : row)
        if (!(cleaned >> v)) throw ValidationError("structure file: truncated matrix");
    return m;
  };
  while (cleaned >> name) {
    if (name == "prior") {
      std::size_t n = 0;
      if (!(cleaned >> n)) throw ValidationError("structure file: bad prior header");
      s.prior = read_matrix(1, n)[0];
    } else if (name == "candidate" || name == "reference" || name == "synopsis") {
      std::size_t r = 0, c = 0;
      if (!(cleaned >> r >> c)) throw ValidationError("structure file: bad " + name + " header");
      auto m = read_matrix(r, c);
      if (name == "candidate") s.candidate = std::move(m);
      else if (name == "reference") s.reference = std::move(m);
      else s.synopsis = std::move(m);
    } else {
      throw ValidationError("structure file: unknown section '" + name + "'");
    }
  }
  s.validate();
  return s;
}

inline DiscreteStructure read_structure_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open structure file " + path);
  return read_structure(in);
}

// --- oracle backend ----------------------------------------------------------

struct OracleOptions {
  /// Target KL(Q || P) for every conditional row the backend reports. 0 gives
  /// exact probabilities.
  double noise_kl = 0.0;
  std::uint64_t noise_seed = 0;
};

class OracleBackend : public lm::Backend {
 public:
  explicit OracleBackend(DiscreteStructure s, OracleOptions opts = {}) : s_(std::move(s)), opts_(opts) {
    s_.validate();
    if (opts_.noise_kl < 0) throw PreconditionError("noise KL must be >= 0");
    channels_['x'] = s_.candidate;
    channels_['y'] = s_.reference;
    if (s_.synopsis) channels_['z'] = *s_.synopsis;
  }

  /// Registers another candidate agent, e.g. a garbled one under 'g'.
  void add_channel(char letter, Matrix table) {
    validate_stochastic(table, s_.tasks(), std::string("channel ") + letter);
    channels_[letter] = std::move(table);
  }

  const DiscreteStructure& structure() const { return s_; }

  std::string name() const override { return "oracle"; }

  std::vector<lm::TokenScore> score(const lm::PromptBundle& b) override {
    const auto given = parse_symbols(b.user + "\n" + b.assistant_prefix.value_or(""));
    const auto target = parse_single(*b.forced_output);
    return {lm::TokenScore{*b.forced_output, log_prob(target, given), 0}};
  }

  using Symbol = std::pair<char, std::size_t>;

  /// log Q(target | given) where Q is the exact conditional, perturbed to the
  /// configured KL budget when noise is enabled.
  double log_prob(const Symbol& target, const std::vector<Symbol>& given) {
    const auto& row = reported_row(target.first, given);
    if (target.second >= row.size()) throw ValidationError("unknown symbol " + symbol(target.first, target.second));
    return std::log(row[target.second]);
  }

  /// Exact P(target channel = . | given).
  std::vector<double> exact_row(char target, const std::vector<Symbol>& given) const {
    const auto& t = table(target);
    std::vector<double> weights(s_.tasks());
    for (std::size_t w = 0; w < s_.tasks(); ++w) {
      double v = s_.prior[w];
      for (const auto& [ch, idx] : given) {
        const auto& g = table(ch);
        if (idx >= g[w].size()) throw ValidationError("unknown symbol " + symbol(ch, idx));
        v *= g[w][idx];
      }
      weights[w] = v;
    }
    CompensatedSum norm;
    for (double v : weights) norm.add(v);
    if (norm.value() <= 0) throw IntegrityError("conditioning event has zero probability");
    std::vector<double> row(t[0].size());
    for (std::size_t k = 0; k < row.size(); ++k) {
      CompensatedSum acc;
      for (std::size_t w = 0; w < s_.tasks(); ++w) acc.add(weights[w] * t[w][k]);
      row[k] = acc.value() / norm.value();
    }
    return row;
  }

  static double kl(const std::vector<double>& q, const std::vector<double>& p) {
    CompensatedSum d;
    for (std::size_t i = 0; i < q.size(); ++i)
      if (q[i] > 0) d.add(q[i] * (std::log(q[i]) - std::log(p[i])));
    return std::max(0.0, d.value());
  }

  /// Mixes p with a random row on p's support, bisecting the weight so that
  /// KL(q || p) hits `target` (or the largest value reachable).
  static std::vector<double> perturb(const std::vector<double>& p, double target, util::Rng& rng) {
    std::vector<double> r(p.size(), 0.0);
    double total = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > 0) total += (r[i] = rng.uniform() + 1e-6);
    for (auto& v : r) v /= total;
    auto mix = [&](double lam) {
      std::vector<double> q(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) q[i] = (1 - lam) * p[i] + lam * r[i];
      return q;
    };
    if (kl(r, p) < target) {
      // Too close to p: head for the least likely outcome instead, which
      // reaches -log p_min >= log 2 whenever p has two or more outcomes.
      std::size_t k = 0;
      for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0 && (p[k] <= 0 || p[i] < p[k])) k = i;
      std::fill(r.begin(), r.end(), 0.0);
      r[k] = 1.0;
    }
    if (kl(mix(1.0), p) <= target) return mix(1.0);
    double lo = 0, hi = 1;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (kl(mix(mid), p) < target ? lo : hi) = mid;
    }
    return mix(lo);
  }

  static std::vector<Symbol> parse_symbols(const std::string& text) {
    std::vector<Symbol> out;
    auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (!std::islower(static_cast<unsigned char>(text[i])) || (i > 0 && alnum(text[i - 1]))) continue;
      std::size_t j = i + 1;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j == i + 1 || (j < text.size() && alnum(text[j]))) continue;
      out.emplace_back(text[i], std::stoul(text.substr(i + 1, j - i - 1)));
      i = j - 1;
    }
    return out;
  }

 private:
  const Matrix& table(char ch) const {
    auto it = channels_.find(ch);
    if (it == channels_.end()) throw ValidationError(std::string("unknown symbol channel '") + ch + "'");
    return it->second;
  }

  static Symbol parse_single(const std::string& text) {
    auto syms = parse_symbols(text);
    if (syms.size() != 1 || symbol(syms[0].first, syms[0].second) != text)
      throw ValidationError("oracle forced output must be exactly one symbol, got '" + text + "'");
    return syms[0];
  }

  const std::vector<double>& reported_row(char target, std::vector<Symbol> given) {
    std::sort(given.begin(), given.end());
    for (std::size_t i = 1; i < given.size(); ++i)
      if (given[i].first == given[i - 1].first)
        throw ValidationError(std::string("two symbols of channel '") + given[i].first + "' in one context");
    std::string key(1, target);
    for (const auto& [ch, idx] : given) key += "|" + symbol(ch, idx);
    {
      std::lock_guard lock(mu_);
      if (auto it = rows_.find(key); it != rows_.end()) return it->second;
    }
    auto row = exact_row(target, given);
    if (opts_.noise_kl > 0) {
      util::Rng rng(opts_.noise_seed, util::fnv1a64(key));
      row = perturb(row, opts_.noise_kl, rng);
    }
    std::lock_guard lock(mu_);
    return rows_.emplace(std::move(key), std::move(row)).first->second;
  }

  DiscreteStructure s_;
  OracleOptions opts_;
  std::map<char, Matrix> channels_;
  std::mutex mu_;
  std::unordered_map<std::string, std::vector<double>> rows_;
};

// --- synthetic datasets ------------------------------------------------------

/// One task per sample: candidate "x<i>", reference "y<i>" and, when the
/// structure has Z, synopsis "z<i>" under kind "oracle". Symbols double as
/// preprocessed text so GEM and GEM-raw both apply.
inline std::vector<EvalTuple> oracle_tuples(const std::vector<Sample>& samples) {
  std::vector<EvalTuple> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto task = std::make_shared<Task>();
    task->id = "s" + std::to_string(i);
    task->full_text = "w" + std::to_string(samples[i].w);
    if (samples[i].z) task->synopses["oracle"] = symbol('z', *samples[i].z);
    auto resp = [&](const std::string& author, std::string text, ResponseRole role) {
      Response r;
      r.task_id = task->id;
      r.author_id = author;
      r.raw_text = text;
      r.preprocessed_text = std::move(text);
      r.role = role;
      return r;
    };
    EvalTuple t;
    t.task = task;
    t.candidate = resp("candidate", symbol('x', samples[i].x), ResponseRole::candidate);
    t.references.push_back(resp("reference", symbol('y', samples[i].y), ResponseRole::reference));
    out.push_back(std::move(t));
  }
  return out;
}

/// Degradation on symbol responses: x<k> becomes g<k'> with k' ~ gamma[k].
/// Register compose(candidate, gamma) as channel 'g' on the oracle backend so
/// the scorer knows the garbled agent's table.
class GarbleTransform : public Transform {
 public:
  GarbleTransform(Matrix gamma, std::uint64_t seed, char from = 'x', char to = 'g')
      : gamma_(std::move(gamma)), seed_(seed), from_(from), to_(to) {
    validate_stochastic(gamma_, gamma_.size(), "garbling matrix");
  }

  std::string name() const override { return "garble"; }

  Response apply(const Task&, const Response& x) override {
    const auto syms = OracleBackend::parse_symbols(x.raw_text);
    if (syms.size() != 1 || syms[0].first != from_ || symbol(syms[0].first, syms[0].second) != x.raw_text)
      throw ValidationError("garble: response '" + x.raw_text + "' is not a single '" + std::string(1, from_) +
                            "' symbol");
    if (syms[0].second >= gamma_.size()) throw ValidationError("garble: symbol outside the garbling matrix");
    util::Rng rng(seed_, util::fnv1a64(x.task_id + "\n" + x.author_id));
    Response out = x;
    out.raw_text = symbol(to_, rng.categorical(gamma_[syms[0].second]));
    out.preprocessed_text = out.raw_text;
    out.extra["strategy"] = name();
    return out;
  }

 private:
  Matrix gamma_;
  std::uint64_t seed_;
  char from_;
  char to_;
};

}  // namespace gem::oracle
