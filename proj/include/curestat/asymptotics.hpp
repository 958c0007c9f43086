#pragma once

// Studentized tail-average statistics and Monte Carlo checks of their limit
// laws: Normal for Z1 (from p1) and half-Normal for Z2 (from p2).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "curestat/error.hpp"
#include "curestat/estimators.hpp"
#include "curestat/model.hpp"
#include "curestat/parallel.hpp"

namespace curestat {

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Distribution of |Z| for Z standard normal.
inline double half_normal_cdf(double x) {
  if (x <= 0.0) return 0.0;
  return std::erf(x / std::numbers::sqrt2);
}

/// Inverse of std_normal_cdf by bisection on a bracket of [-40, 40].
inline double std_normal_quantile(double u) {
  detail::require(u > 0.0 && u < 1.0, "normal quantile needs 0 < u < 1");
  double lo = -40.0;
  double hi = 40.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (std_normal_cdf(mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

enum class Reference { StdNormal, HalfNormal };

/// Kolmogorov distance sup |F_m - F| between the empirical CDF of `samples`
/// and the reference CDF, taking both one-sided gaps at every sample point.
inline double ks_distance(std::vector<double> samples, Reference ref) {
  detail::require(!samples.empty(), "ks_distance needs at least one sample");
  std::sort(samples.begin(), samples.end());
  const double m = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f =
        ref == Reference::StdNormal ? std_normal_cdf(samples[i]) : half_normal_cdf(samples[i]);
    d = std::max({d, f - static_cast<double>(i) / m, static_cast<double>(i + 1) / m - f});
  }
  return d;
}

enum class Studentization { KnownP, PlugIn };

struct ZStatPair {
  double z1;
  double z2;
  std::size_t tail_count;
  double cutoff;
  Studentization studentization;
};

/// Z1 = sqrt(N) (p1(x) - (1-p)) / sqrt(p(1-p)) with N the realized tail count
/// at x; Z2 likewise with p2. Plug-in studentization replaces p by
/// 1 - p2(x) in the denominator only, and yields non-finite values when that
/// estimate is 0 or 1.
inline ZStatPair z_stats(const EstimatorTrace& tr, double cutoff, double p_true,
                         Studentization mode = Studentization::KnownP) {
  detail::require(p_true > 0.0 && p_true < 1.0, "z statistics need 0 < p < 1");
  const std::size_t pos = tr.position_of_threshold(cutoff);
  if (pos == tr.entries.size()) throw DataError("empty tail at cut-off");
  const auto& e = tr.entries[pos];
  double scale_p = p_true;
  if (mode == Studentization::PlugIn) scale_p = 1.0 - e.p2;
  const double root_n = std::sqrt(static_cast<double>(e.tail_count));
  const double sd = std::sqrt(scale_p * (1.0 - scale_p));
  const double target = 1.0 - p_true;
  return {root_n * (e.p1 - target) / sd, root_n * (e.p2 - target) / sd, e.tail_count, cutoff,
          mode};
}

inline ZStatPair z_stats(const SortedSample& sorted, double cutoff, double p_true,
                         Studentization mode = Studentization::KnownP) {
  return z_stats(trace(sorted), cutoff, p_true, mode);
}

/// Affine norming for maxima of the inspection times: n Ḡ(a_n x + b_n) -> Λ(x).
struct NormingConstants {
  double a_n;
  double b_n;

  /// Λ(x) = -log G_e(x); Gumbel domain.
  static double mean_function(double x) { return std::exp(-x); }

  double normalize(double cutoff) const { return (cutoff - b_n) / a_n; }
};

inline NormingConstants gumbel_norming_exponential(double n, double mu) {
  detail::require(n >= 1.0, "n must be at least 1");
  detail::require(std::isfinite(mu) && mu > 0.0, "inspection rate must be positive");
  return {1.0 / mu, std::log(n) / mu};
}

/// How a Monte Carlo replication picks its cut-off.
struct CutoffRule {
  enum class Kind {
    Optimal,        // minimizer of the exponential-model MSE (needs exponential F, G)
    Undersmoothed,  // G-quantile with expected tail count sqrt(n)
    ExpectedTail,   // G-quantile with expected tail count `value`
    Threshold,      // fixed threshold `value`
  };
  Kind kind = Kind::Undersmoothed;
  double value = 0.0;

  static CutoffRule optimal() { return {Kind::Optimal, 0.0}; }
  static CutoffRule undersmoothed() { return {Kind::Undersmoothed, 0.0}; }
  static CutoffRule expected_tail(double m) { return {Kind::ExpectedTail, m}; }
  static CutoffRule threshold(double x) { return {Kind::Threshold, x}; }

  /// The threshold for samples of size n under `spec`; depends on the model
  /// only, never on the sample.
  double resolve(const MixtureSpec& spec, std::size_t n) const {
    const double nn = static_cast<double>(n);
    switch (kind) {
      case Kind::Optimal: {
        const auto* f = spec.event.as_exponential();
        const auto* g = spec.inspection.as_exponential();
        detail::require(f && g, "optimal cut-off needs exponential event and inspection laws");
        return theoretical_cutoff_exponential(nn, spec.p, f->rate, g->rate);
      }
      case Kind::Undersmoothed:
        return spec.inspection.quantile(1.0 - std::sqrt(nn) / nn);
      case Kind::ExpectedTail:
        detail::require(value > 0.0 && value <= nn, "expected tail count must lie in (0, n]");
        return spec.inspection.quantile(1.0 - value / nn);
      case Kind::Threshold:
        detail::require(value >= 0.0, "threshold must be >= 0");
        return value;
    }
    return 0.0;
  }
};

inline std::string_view to_string(CutoffRule::Kind k) {
  switch (k) {
    case CutoffRule::Kind::Optimal: return "optimal";
    case CutoffRule::Kind::Undersmoothed: return "undersmoothed";
    case CutoffRule::Kind::ExpectedTail: return "expected-tail";
    case CutoffRule::Kind::Threshold: return "threshold";
  }
  return "?";
}

struct McConfig {
  MixtureSpec spec;
  std::size_t n = 100;
  std::size_t reps = 5000;
  CutoffRule cutoff = CutoffRule::undersmoothed();
  Studentization studentization = Studentization::KnownP;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct SampleSummary {
  double mean = 0.0;
  double sd = 0.0;
};

inline SampleSummary summarize(const std::vector<double>& v) {
  SampleSummary s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct McResult {
  McConfig config;
  double cutoff = 0.0;
  std::vector<std::size_t> rep;  // replication index of each retained sample
  std::vector<double> z1;
  std::vector<double> z2;
  std::size_t skipped = 0;  // replications with an empty tail
  SampleSummary z1_summary;
  SampleSummary z2_summary;
  double ks_z1_normal = 0.0;
  double ks_z2_half_normal = 0.0;
};

/// Replication r simulates with seed + r, sorts, and evaluates the pair of
/// statistics at the rule's cut-off. Results are stored by replication index,
/// so the output does not depend on the thread count.
inline McResult run_mc(const McConfig& cfg) {
  cfg.spec.validate();
  detail::require(cfg.reps >= 1, "reps must be at least 1");
  detail::require(cfg.n >= 1, "sample size must be at least 1");
  detail::require(cfg.spec.p > 0.0 && cfg.spec.p < 1.0, "Monte Carlo needs 0 < p < 1");
  McResult out{cfg};
  out.cutoff = cfg.cutoff.resolve(cfg.spec, cfg.n);

  std::vector<std::optional<ZStatPair>> slots(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    const auto tr = trace(sort_with_concomitants(simulate(cfg.spec, cfg.n, cfg.seed + r)));
    if (tr.position_of_threshold(out.cutoff) == tr.entries.size()) return;
    slots[r] = z_stats(tr, out.cutoff, cfg.spec.p, cfg.studentization);
  });
  for (std::size_t r = 0; r < slots.size(); ++r) {
    if (!slots[r]) {
      ++out.skipped;
      continue;
    }
    out.rep.push_back(r);
    out.z1.push_back(slots[r]->z1);
    out.z2.push_back(slots[r]->z2);
  }
  out.z1_summary = summarize(out.z1);
  out.z2_summary = summarize(out.z2);
  if (!out.z1.empty()) {
    out.ks_z1_normal = ks_distance(out.z1, Reference::StdNormal);
    out.ks_z2_half_normal = ks_distance(out.z2, Reference::HalfNormal);
  }
  return out;
}

/// Moments of the tail counts N1 = #{delta = 1, y >= x} and
/// N0 = #{delta = 0, y >= x} at one threshold, across replications.
struct ThinningStats {
  double expected_tail;  // n Ḡ(x)
  double threshold;
  std::size_t reps;
  double mean_n1;
  double mean_n0;
  double var_over_mean_n1;
  double var_over_mean_n0;
  double correlation;
  bool counts_consistent;  // N1 + N0 equals the tail count in every replication
};

/// For each expected tail count m in `expected_tails`, sets x = G^{-1}(1 - m/n)
/// and collects (N1, N0) over `reps` replications (seed + r).
inline std::vector<ThinningStats> thinning_check(const MixtureSpec& spec, std::size_t n,
                                                 const std::vector<double>& expected_tails,
                                                 std::size_t reps, std::uint64_t seed,
                                                 unsigned threads = 0) {
  spec.validate();
  detail::require(n >= 1, "sample size must be at least 1");
  detail::require(reps >= 1, "reps must be at least 1");
  detail::require(!expected_tails.empty(), "at least one threshold is needed");
  std::vector<double> thresholds;
  for (double m : expected_tails) {
    thresholds.push_back(CutoffRule::expected_tail(m).resolve(spec, n));
  }
  const std::size_t k = thresholds.size();
  std::vector<long long> n1(reps * k), n0(reps * k);
  std::vector<char> consistent(reps, 1);
  parallel_for(reps, threads, [&](std::size_t r) {
    const auto sample = simulate(spec, n, seed + r);
    for (std::size_t t = 0; t < k; ++t) {
      long long ones = 0, zeros = 0, tail = 0;
      for (const auto& rec : sample.records) {
        if (rec.y < thresholds[t]) continue;
        ++tail;
        (rec.delta == 1 ? ones : zeros) += 1;
      }
      n1[r * k + t] = ones;
      n0[r * k + t] = zeros;
      if (ones + zeros != tail) consistent[r] = 0;
    }
  });
  const bool all_consistent = std::all_of(consistent.begin(), consistent.end(),
                                          [](char c) { return c != 0; });
  std::vector<ThinningStats> out;
  const double reps_d = static_cast<double>(reps);
  for (std::size_t t = 0; t < k; ++t) {
    double s1 = 0, s0 = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      s1 += static_cast<double>(n1[r * k + t]);
      s0 += static_cast<double>(n0[r * k + t]);
    }
    const double m1 = s1 / reps_d, m0 = s0 / reps_d;
    double v1 = 0, v0 = 0, c = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const double a = static_cast<double>(n1[r * k + t]) - m1;
      const double b = static_cast<double>(n0[r * k + t]) - m0;
      v1 += a * a;
      v0 += b * b;
      c += a * b;
    }
    const double denom = reps > 1 ? reps_d - 1.0 : 1.0;
    v1 /= denom;
    v0 /= denom;
    c /= denom;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.push_back({expected_tails[t], thresholds[t], reps, m1, m0, m1 > 0 ? v1 / m1 : nan,
                   m0 > 0 ? v0 / m0 : nan, (v1 > 0 && v0 > 0) ? c / std::sqrt(v1 * v0) : 0.0,
                   all_consistent});
  }
  return out;
}

}  // namespace curestat
