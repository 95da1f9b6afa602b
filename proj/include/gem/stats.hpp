#pragma once

// Correlation, effect size and bootstrap intervals.
//
// Standard deviations default to the population convention (divide by n);
// SdConvention::sample divides by n-1 and is labeled as such in reports.
// Bootstrap resample b always draws from Rng(seed, b), so the interval does
// not depend on how many threads compute it.

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gem/error.hpp"
#include "gem/util/parallel.hpp"
#include "gem/util/rng.hpp"

namespace gem::stats {

struct CiSpec {
  std::uint64_t seed = 0;
  std::size_t resamples = 10000;
  double level = 0.95;
  std::size_t workers = 1;
};

struct Interval {
  double low = 0;
  double high = 0;
};

enum class SdConvention { population, sample };

inline std::string_view to_string(SdConvention c) { return c == SdConvention::population ? "population" : "sample"; }

inline double mean(std::span<const double> v) {
  if (v.empty()) throw PreconditionError("mean of empty sample");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stddev(std::span<const double> v, SdConvention conv = SdConvention::population) {
  const double m = mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  const double denom = conv == SdConvention::population ? static_cast<double>(v.size())
                                                        : static_cast<double>(v.size()) - 1.0;
  if (denom <= 0) throw PreconditionError("sample standard deviation needs n >= 2");
  return std::sqrt(ss / denom);
}

/// Linear-interpolated quantile of sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw PreconditionError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Percentile bootstrap over n units. `statistic` receives the resampled
/// unit indices and may return NaN for a degenerate resample; those are
/// skipped.
inline Interval bootstrap_ci(std::size_t n, const std::function<double(std::span<const std::size_t>)>& statistic,
                             const CiSpec& spec) {
  if (spec.resamples < 1000) throw PreconditionError("bootstrap needs at least 1000 resamples");
  if (!(spec.level > 0.0 && spec.level < 1.0)) throw PreconditionError("confidence level must be in (0,1)");
  if (n == 0) throw PreconditionError("bootstrap of empty sample");
  std::vector<double> stats(spec.resamples);
  util::parallel_for(spec.resamples, spec.workers, [&](std::size_t b) {
    util::Rng rng(spec.seed, b);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = rng.below(n);
    stats[b] = statistic(idx);
  });
  std::erase_if(stats, [](double s) { return std::isnan(s); });
  if (stats.empty()) throw ValidationError("every bootstrap resample was degenerate");
  std::sort(stats.begin(), stats.end());
  const double alpha = 1.0 - spec.level;
  return {quantile_sorted(stats, alpha / 2), quantile_sorted(stats, 1.0 - alpha / 2)};
}

/// Bootstrap interval of the mean. Values are put in canonical (sorted)
/// order first, so the interval is invariant to the input order.
inline Interval bootstrap_mean_ci(std::vector<double> values, const CiSpec& spec) {
  std::sort(values.begin(), values.end());
  return bootstrap_ci(
      values.size(),
      [&](std::span<const std::size_t> idx) {
        double s = 0;
        for (auto i : idx) s += values[i];
        return s / static_cast<double>(idx.size());
      },
      spec);
}

/// Sum in canonical order (sorted, compensated) so the result does not depend
/// on input order.
inline double order_invariant_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double sum = 0, c = 0;
  for (double x : v) {
    const double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + c;
}

/// 1-based average ranks; ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

struct Correlation {
  double rho = 0;
  double p = 1;  // two-sided, Student-t approximation with n-2 df
  std::size_t n = 0;
};

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) throw ValidationError("correlation undefined for a constant vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline Correlation spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw PreconditionError("spearman: vectors differ in length");
  if (a.size() < 3) throw PreconditionError("spearman: need at least 3 observations");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  Correlation c;
  c.n = a.size();
  c.rho = pearson(ra, rb);
  const double df = static_cast<double>(c.n) - 2.0;
  if (std::abs(c.rho) >= 1.0) {
    c.p = 0.0;
  } else {
    const double t = c.rho * std::sqrt(df / (1.0 - c.rho * c.rho));
    boost::math::students_t dist(df);
    c.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  }
  return c;
}

/// Pre/post scores of one metric under one strategy, aligned by tuple id.
struct PairedScores {
  std::vector<std::string> ids;
  std::vector<double> pre;
  std::vector<double> post;

  std::size_t size() const { return pre.size(); }

  void validate() const {
    if (pre.size() != post.size() || ids.size() != pre.size())
      throw ValidationError("paired scores are not aligned (length mismatch)");
  }
};

struct SmdReport {
  double d = 0;
  double ci_low = 0;
  double ci_high = 0;
  double mu = 0;
  double mu_prime = 0;
  double sigma = 0;
  double sigma_prime = 0;
  std::size_t n = 0;
  SdConvention convention = SdConvention::population;
  CiSpec ci;
};

/// Cohen's d on given pre/post vectors; NaN when pooled variance is zero.
inline double cohens_d(std::span<const double> pre, std::span<const double> post, SdConvention conv) {
  const double mu = mean(pre), mup = mean(post);
  const double s = stddev(pre, conv), sp = stddev(post, conv);
  const double pooled = std::sqrt((s * s + sp * sp) / 2.0);
  if (pooled == 0) return std::numeric_limits<double>::quiet_NaN();
  return (mup - mu) / pooled;
}

/// Standardized mean difference d = (mu' - mu) / sqrt((sigma^2 + sigma'^2)/2)
/// with a paired percentile-bootstrap interval (tuple indices resampled).
inline SmdReport smd(const PairedScores& pairs, const CiSpec& ci, SdConvention conv = SdConvention::population) {
  pairs.validate();
  if (pairs.size() < 2) throw PreconditionError("smd needs at least 2 pairs");
  SmdReport r;
  r.n = pairs.size();
  r.convention = conv;
  r.ci = ci;
  r.mu = mean(pairs.pre);
  r.mu_prime = mean(pairs.post);
  r.sigma = stddev(pairs.pre, conv);
  r.sigma_prime = stddev(pairs.post, conv);
  const double pooled = std::sqrt((r.sigma * r.sigma + r.sigma_prime * r.sigma_prime) / 2.0);
  if (pooled == 0) throw ValidationError("smd: zero pooled variance");
  r.d = (r.mu_prime - r.mu) / pooled;
  const auto iv = bootstrap_ci(
      pairs.size(),
      [&](std::span<const std::size_t> idx) {
        std::vector<double> a, b;
        a.reserve(idx.size());
        b.reserve(idx.size());
        for (auto i : idx) {
          a.push_back(pairs.pre[i]);
          b.push_back(pairs.post[i]);
        }
        const double mu = mean(a), mup = mean(b);
        const double s = stddev(a, conv), sp = stddev(b, conv);
        const double pd = std::sqrt((s * s + sp * sp) / 2.0);
        // A resample that drew one tuple repeatedly has no spread; it counts as
        // d = 0 when pre and post agree and is skipped otherwise.
        if (pd == 0) return mup == mu ? 0.0 : std::numeric_limits<double>::quiet_NaN();
        return (mup - mu) / pd;
      },
      ci);
  r.ci_low = iv.low;
  r.ci_high = iv.high;
  return r;
}

enum class Significance { decrease, increase, none };

inline std::string_view to_string(Significance s) {
  switch (s) {
    case Significance::decrease: return "decrease";
    case Significance::increase: return "increase";
    case Significance::none: return "none";
  }
  return "none";
}

/// Bootstrap-CI based call: the whole interval below zero is a significant
/// decrease, the whole interval above zero a significant increase.
inline Significance significance(const SmdReport& r) {
  if (r.ci_high < 0) return Significance::decrease;
  if (r.ci_low > 0) return Significance::increase;
  return Significance::none;
}

}  // namespace gem::stats
