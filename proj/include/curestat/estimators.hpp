#pragma once

// Tail-average cure-rate estimators and cut-off selection.
//
// For a threshold x, p1(x) is the fraction of delta = 1 among observations
// with y >= x and p2(x) = max_{t <= x} p1(t). Both estimate 1 - p once x is
// far enough in the right tail; 1 - p1 and 1 - p2 at the chosen cut-off are
// the two cure-rate estimates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "curestat/error.hpp"
#include "curestat/model.hpp"

namespace curestat {

struct TraceEntry {
  std::size_t index;  // 1-based order-statistic index of the first member of the group
  double y;
  std::size_t tail_count;
  double p1;
  double p2;
};

/// One entry per distinct threshold, in ascending y.
struct EstimatorTrace {
  std::size_t n = 0;
  std::vector<TraceEntry> entries;

  /// Position of the entry whose tie group contains order-statistic index i
  /// (1-based).
  std::size_t position_of_index(std::size_t i) const {
    detail::require(i >= 1 && i <= n, "cut-off index out of range 1..n");
    const auto it = std::upper_bound(entries.begin(), entries.end(), i,
                                     [](std::size_t v, const TraceEntry& e) { return v < e.index; });
    return static_cast<std::size_t>(it - entries.begin()) - 1;
  }

  /// Position of the first entry with y >= x, or entries.size() if the tail
  /// at x is empty.
  std::size_t position_of_threshold(double x) const {
    const auto it = std::lower_bound(entries.begin(), entries.end(), x,
                                     [](const TraceEntry& e, double v) { return e.y < v; });
    return static_cast<std::size_t>(it - entries.begin());
  }
};

/// p1 by one backward cumulative sum, p2 as its running maximum.
inline EstimatorTrace trace(const SortedSample& sorted) {
  detail::require(sorted.size() >= 1, "empty sample");
  const std::size_t n = sorted.size();
  const std::size_t groups = sorted.group_count();
  EstimatorTrace tr;
  tr.n = n;
  tr.entries.resize(groups);
  long long tail_sum = 0;
  for (std::size_t g = groups; g-- > 0;) {
    const std::size_t begin = sorted.group_start[g];
    for (std::size_t i = begin; i < sorted.group_end(g); ++i) tail_sum += sorted.delta[i];
    const std::size_t tail = n - begin;
    tr.entries[g] = {begin + 1, sorted.y[begin], tail,
                     static_cast<double>(tail_sum) / static_cast<double>(tail), 0.0};
  }
  double running = 0.0;
  for (auto& e : tr.entries) {
    running = std::max(running, e.p1);
    e.p2 = running;
  }
  return tr;
}

struct PlugIns {
  double delta_bar;
  double p2_bar;
  /// delta_bar / (p2_bar - delta_bar); empty when p2_bar <= delta_bar.
  std::optional<double> alpha_hat;
};

/// Mean delta, the sample mean of p2 over all observations, and the
/// Koziol-Green exponent estimate built from them.
inline PlugIns plug_ins(const EstimatorTrace& tr) {
  detail::require(!tr.entries.empty(), "empty trace");
  double p2_sum = 0.0;
  for (std::size_t k = 0; k < tr.entries.size(); ++k) {
    const std::size_t next_tail = k + 1 < tr.entries.size() ? tr.entries[k + 1].tail_count : 0;
    p2_sum += tr.entries[k].p2 * static_cast<double>(tr.entries[k].tail_count - next_tail);
  }
  PlugIns out{tr.entries.front().p1, p2_sum / static_cast<double>(tr.n), std::nullopt};
  const double gap = out.p2_bar - out.delta_bar;
  if (gap > 0.0) out.alpha_hat = out.delta_bar / gap;
  return out;
}

inline PlugIns plug_ins(const SortedSample& sorted) { return plug_ins(trace(sorted)); }

enum class CvFlavor { M1, M2 };
enum class VariancePlugin { P1, P2 };

struct CvPoint {
  std::size_t index;
  double y;
  std::size_t tail_count;
  double variance;
  double bias2;
  double objective;
};

struct CvCurve {
  CvFlavor flavor;
  VariancePlugin variance_plugin;
  PlugIns plugins;
  std::vector<CvPoint> points;
};

namespace detail {

inline double variance_term(const TraceEntry& e, VariancePlugin v) {
  const double q = v == VariancePlugin::P1 ? e.p1 : e.p2;
  return q * (1.0 - q) / static_cast<double>(e.tail_count);
}

}  // namespace detail

/// Variance plus Koziol-Green bias: the bias term is
/// (p2_bar - delta_bar)^2 (tail fraction)^(2 alpha_hat).
inline CvCurve cv_m1_curve(const EstimatorTrace& tr,
                           VariancePlugin variance = VariancePlugin::P1) {
  const PlugIns pi = plug_ins(tr);
  if (!pi.alpha_hat) {
    throw DataError("alpha estimate invalid (mean p2 <= mean delta); use the cv-m2 objective");
  }
  CvCurve curve{CvFlavor::M1, variance, pi, {}};
  curve.points.reserve(tr.entries.size());
  const double scale = (pi.p2_bar - pi.delta_bar) * (pi.p2_bar - pi.delta_bar);
  for (const auto& e : tr.entries) {
    const double frac = static_cast<double>(e.tail_count) / static_cast<double>(tr.n);
    const double var = detail::variance_term(e, variance);
    const double bias2 = scale * std::pow(frac, 2.0 * *pi.alpha_hat);
    curve.points.push_back({e.index, e.y, e.tail_count, var, bias2, var + bias2});
  }
  return curve;
}

/// Variance plus squared bias estimated as p2(x) - p2_bar.
inline CvCurve cv_m2_curve(const EstimatorTrace& tr,
                           VariancePlugin variance = VariancePlugin::P1) {
  const PlugIns pi = plug_ins(tr);
  CvCurve curve{CvFlavor::M2, variance, pi, {}};
  curve.points.reserve(tr.entries.size());
  for (const auto& e : tr.entries) {
    const double var = detail::variance_term(e, variance);
    const double b = e.p2 - pi.p2_bar;
    curve.points.push_back({e.index, e.y, e.tail_count, var, b * b, var + b * b});
  }
  return curve;
}

inline CvCurve cv_m1_curve(const SortedSample& s, VariancePlugin v = VariancePlugin::P1) {
  return cv_m1_curve(trace(s), v);
}
inline CvCurve cv_m2_curve(const SortedSample& s, VariancePlugin v = VariancePlugin::P1) {
  return cv_m2_curve(trace(s), v);
}

enum class CutoffMethod { CvM1, CvM2, TheoreticalExponential, FixedIndex, FixedQuantile };

inline std::string_view to_string(CutoffMethod m) {
  switch (m) {
    case CutoffMethod::CvM1: return "cv-m1";
    case CutoffMethod::CvM2: return "cv-m2";
    case CutoffMethod::TheoreticalExponential: return "theoretical-exp";
    case CutoffMethod::FixedIndex: return "fixed-index";
    case CutoffMethod::FixedQuantile: return "fixed-quantile";
  }
  return "?";
}

inline constexpr std::size_t kDefaultGuard = 5;

struct CutoffChoice {
  CutoffMethod method;
  std::size_t index;  // 1-based
  double threshold;
  std::size_t tail_count;
  std::size_t min_tail;
};

struct CutoffGuard {
  std::size_t min_tail = kDefaultGuard;
  /// Also skip points whose variance term is exactly 0 (the tail is all
  /// ones or all zeros). Ignored when no other candidate survives.
  bool skip_degenerate = true;
};

/// Argmin of the objective over points whose tail count is at least
/// `guard.min_tail`; ties go to the smaller index. The guard drops the
/// spurious minimum at the top of the sample, where the variance term
/// collapses.
inline CutoffChoice select_cutoff(const CvCurve& curve, CutoffGuard guard = {}) {
  const std::size_t min_tail = guard.min_tail;
  auto argmin = [&](bool skip_degenerate) {
    const CvPoint* best = nullptr;
    for (const auto& pt : curve.points) {
      if (pt.tail_count < min_tail) continue;
      if (skip_degenerate && pt.variance == 0.0) continue;
      if (best == nullptr || pt.objective < best->objective) best = &pt;
    }
    return best;
  };
  const CvPoint* best = argmin(guard.skip_degenerate);
  if (best == nullptr && guard.skip_degenerate) best = argmin(false);
  if (best == nullptr) {
    throw DataError("no cut-off candidate has tail count >= " + std::to_string(min_tail));
  }
  const auto method = curve.flavor == CvFlavor::M1 ? CutoffMethod::CvM1 : CutoffMethod::CvM2;
  return {method, best->index, best->y, best->tail_count, min_tail};
}

inline CutoffChoice cutoff_at_index(const EstimatorTrace& tr, std::size_t i,
                                    std::size_t min_tail = 1,
                                    CutoffMethod method = CutoffMethod::FixedIndex) {
  const auto& e = tr.entries[tr.position_of_index(i)];
  return {method, e.index, e.y, e.tail_count, min_tail};
}

/// Cut-off at threshold x: the first order statistic with y >= x.
inline CutoffChoice cutoff_at_threshold(const EstimatorTrace& tr, double x, std::size_t min_tail,
                                        CutoffMethod method) {
  const std::size_t pos = tr.position_of_threshold(x);
  if (pos == tr.entries.size()) throw DataError("empty tail: no observation with y >= cut-off");
  const auto& e = tr.entries[pos];
  return {method, e.index, e.y, e.tail_count, min_tail};
}

/// Cut-off at the empirical q-quantile of y, index max(1, ceil(q n)).
inline CutoffChoice cutoff_at_quantile(const EstimatorTrace& tr, double q,
                                       std::size_t min_tail = 1) {
  detail::require(q >= 0.0 && q <= 1.0, "quantile must lie in [0, 1]");
  const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(tr.n)));
  return cutoff_at_index(tr, std::clamp<std::size_t>(i, 1, tr.n), min_tail,
                         CutoffMethod::FixedQuantile);
}

struct CureEstimate {
  double p_hat1;  // 1 - p1 at the cut-off
  double p_hat2;  // 1 - p2 at the cut-off
  std::size_t tail_count;
};

inline CureEstimate estimate_cure(const EstimatorTrace& tr, const CutoffChoice& choice) {
  const auto& e = tr.entries[tr.position_of_index(choice.index)];
  if (e.tail_count < std::max<std::size_t>(choice.min_tail, 1)) {
    throw DataError("tail count " + std::to_string(e.tail_count) + " below guard minimum " +
                    std::to_string(choice.min_tail));
  }
  return {1.0 - e.p1, 1.0 - e.p2, e.tail_count};
}

namespace detail {

inline void require_rates(double lambda, double mu) {
  require(std::isfinite(lambda) && lambda > 0.0, "event rate must be positive");
  require(std::isfinite(mu) && mu > 0.0, "inspection rate must be positive");
}

}  // namespace detail

/// Asymptotic mean squared error of p1 at threshold x for exponential F
/// (rate lambda) and G (rate mu):
///   p(1-p) e^{mu x} / n + ((1-p) mu / (lambda + mu))^2 e^{-2 lambda x}.
inline double theoretical_Mn(double x, double n, double p, double lambda, double mu) {
  detail::require_rates(lambda, mu);
  detail::require(x >= 0.0, "threshold must be >= 0");
  detail::require(n > 0.0, "n must be positive");
  const double b = (1.0 - p) * mu / (lambda + mu);
  return p * (1.0 - p) * std::exp(mu * x) / n + b * b * std::exp(-2.0 * lambda * x);
}

/// Minimizer of theoretical_Mn over x >= 0. Setting the derivative to zero
/// gives mu * variance = 2 lambda * bias^2, i.e.
///   x_n = log(2 lambda (1-p) mu n / (p (lambda+mu)^2)) / (mu + 2 lambda),
/// clamped to 0 when the log argument is <= 1.
inline double theoretical_cutoff_exponential(double n, double p, double lambda, double mu) {
  detail::require_rates(lambda, mu);
  detail::require(p > 0.0 && p < 1.0, "theoretical cut-off needs 0 < p < 1");
  detail::require(n > 0.0, "n must be positive");
  const double arg =
      2.0 * lambda * (1.0 - p) * mu * n / (p * (lambda + mu) * (lambda + mu));
  if (arg <= 1.0) return 0.0;
  return std::log(arg) / (mu + 2.0 * lambda);
}

}  // namespace curestat
