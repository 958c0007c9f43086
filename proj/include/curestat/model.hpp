#pragma once

// Distributions, the mixture cure model, and current-status samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "curestat/error.hpp"

namespace curestat {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Exponential {
  double rate;
};

/// Piecewise-linear inverse CDF through (u, quantile) knots. The first knot
/// must have u = 0 and the last u = 1; flat segments give atoms.
struct TabulatedQuantile {
  std::vector<double> u;
  std::vector<double> q;
};

/// A distribution on [0, tau] given either in closed form or by a tabulated
/// quantile function.
class DistSpec {
 public:
  using Kind = std::variant<Exponential, TabulatedQuantile>;

  static DistSpec exponential(double rate) {
    detail::require(std::isfinite(rate) && rate > 0.0,
                    "exponential rate must be positive and finite");
    return DistSpec(Exponential{rate});
  }

  static DistSpec tabulated(std::vector<double> u, std::vector<double> q) {
    detail::require(u.size() == q.size() && u.size() >= 2,
                    "tabulated quantile needs at least two (u, q) knots");
    detail::require(u.front() == 0.0 && u.back() == 1.0,
                    "tabulated quantile knots must span u = 0 .. 1");
    for (std::size_t k = 1; k < u.size(); ++k) {
      detail::require(u[k] > u[k - 1], "tabulated u knots must increase strictly");
      detail::require(q[k] >= q[k - 1], "tabulated quantiles must be nondecreasing");
    }
    detail::require(q.front() >= 0.0 && std::isfinite(q.back()),
                    "tabulated quantiles must be finite and nonnegative");
    return DistSpec(TabulatedQuantile{std::move(u), std::move(q)});
  }

  /// Point mass at t0 >= 0.
  static DistSpec degenerate(double t0) { return tabulated({0.0, 1.0}, {t0, t0}); }

  const Kind& kind() const { return kind_; }

  const Exponential* as_exponential() const { return std::get_if<Exponential>(&kind_); }

  /// Upper support endpoint.
  double tau() const {
    if (as_exponential()) return kInf;
    return std::get<TabulatedQuantile>(kind_).q.back();
  }

  double cdf(double t) const {
    if (const auto* e = as_exponential()) {
      if (t <= 0.0) return 0.0;
      return -std::expm1(-e->rate * t);
    }
    const auto& tab = std::get<TabulatedQuantile>(kind_);
    if (t < tab.q.front()) return 0.0;
    if (t >= tab.q.back()) return 1.0;
    // Last knot with q <= t; the next knot has q > t.
    const auto it = std::upper_bound(tab.q.begin(), tab.q.end(), t);
    const auto k = static_cast<std::size_t>(it - tab.q.begin()) - 1;
    const double w = (t - tab.q[k]) / (tab.q[k + 1] - tab.q[k]);
    return tab.u[k] + w * (tab.u[k + 1] - tab.u[k]);
  }

  double survival(double t) const {
    if (const auto* e = as_exponential()) return t <= 0.0 ? 1.0 : std::exp(-e->rate * t);
    return 1.0 - cdf(t);
  }

  /// Inverse CDF for u in [0, 1].
  double quantile(double u) const {
    if (const auto* e = as_exponential()) {
      if (u >= 1.0) return kInf;
      return -std::log1p(-u) / e->rate;
    }
    const auto& tab = std::get<TabulatedQuantile>(kind_);
    if (u <= 0.0) return tab.q.front();
    if (u >= 1.0) return tab.q.back();
    const auto it = std::upper_bound(tab.u.begin(), tab.u.end(), u);
    const auto k = static_cast<std::size_t>(it - tab.u.begin()) - 1;
    const double w = (u - tab.u[k]) / (tab.u[k + 1] - tab.u[k]);
    return tab.q[k] + w * (tab.q[k + 1] - tab.q[k]);
  }

 private:
  explicit DistSpec(Kind kind) : kind_(std::move(kind)) {}
  Kind kind_;
};

/// The censored cure model: cure probability p, event distribution F of the
/// uncured, inspection distribution G. kg_alpha is set when
/// 1 - F = (1 - G)^alpha holds (Koziol-Green).
struct MixtureSpec {
  double p;
  DistSpec event;
  DistSpec inspection;
  std::optional<double> kg_alpha;

  void validate() const {
    detail::require(std::isfinite(p) && p >= 0.0 && p <= 1.0,
                    "cure probability p must lie in [0, 1]");
    if (kg_alpha) {
      detail::require(std::isfinite(*kg_alpha) && *kg_alpha > 0.0,
                      "Koziol-Green alpha must be positive");
    }
  }

  /// Exponential event and inspection times; these always satisfy the
  /// Koziol-Green relation with alpha = event_rate / inspection_rate.
  static MixtureSpec exponential(double p, double event_rate, double inspection_rate) {
    MixtureSpec spec{p, DistSpec::exponential(event_rate),
                     DistSpec::exponential(inspection_rate), event_rate / inspection_rate};
    spec.validate();
    return spec;
  }
};

struct Observation {
  int delta;
  double y;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct CurrentStatusSample {
  std::vector<Observation> records;
  std::uint64_t seed = 0;  // 0 for external data

  std::size_t size() const { return records.size(); }

  friend bool operator==(const CurrentStatusSample&, const CurrentStatusSample&) = default;
};

/// Order statistics Y_(1) <= ... <= Y_(n) with their concomitant deltas.
/// Observations sharing a y value form one group; `group_start` holds the
/// 0-based first index of every group, in ascending order.
struct SortedSample {
  std::vector<double> y;
  std::vector<int> delta;
  std::vector<std::size_t> group_start;

  std::size_t size() const { return y.size(); }
  std::size_t group_count() const { return group_start.size(); }
  std::size_t group_end(std::size_t g) const {
    return g + 1 < group_start.size() ? group_start[g + 1] : y.size();
  }
  bool has_ties() const { return group_start.size() != y.size(); }
};

namespace detail {

/// Uniform on [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline void validate_sample(const CurrentStatusSample& s) {
  for (const auto& r : s.records) {
    require(r.delta == 0 || r.delta == 1, "delta must be 0 or 1");
    require(std::isfinite(r.y) && r.y >= 0.0, "inspection time must be finite and >= 0");
  }
}

}  // namespace detail

/// Draws n current-status records. Each record consumes exactly three
/// uniforms from a mt19937_64 seeded with `seed`, in this order: the cure
/// indicator (cured iff u < p), the latent event time by inverse CDF, the
/// inspection time by inverse CDF. Cured records have X = infinity, so
/// delta = 0.
inline CurrentStatusSample simulate(const MixtureSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  detail::require(n >= 1, "sample size must be at least 1");
  std::mt19937_64 rng(seed);
  CurrentStatusSample out;
  out.seed = seed;
  out.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool cured = detail::uniform01(rng) < spec.p;
    const double x = spec.event.quantile(detail::uniform01(rng));
    const double y = spec.inspection.quantile(detail::uniform01(rng));
    out.records.push_back({(!cured && x <= y) ? 1 : 0, y});
  }
  return out;
}

/// Stable sort by y. Ties keep input order and share a group.
inline SortedSample sort_with_concomitants(const CurrentStatusSample& sample) {
  detail::require(sample.size() >= 1, "empty sample");
  const auto& rec = sample.records;
  std::vector<std::size_t> order(rec.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rec[a].y < rec[b].y; });
  SortedSample s;
  s.y.reserve(rec.size());
  s.delta.reserve(rec.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& r = rec[order[i]];
    if (i == 0 || r.y != s.y.back()) s.group_start.push_back(i);
    s.y.push_back(r.y);
    s.delta.push_back(r.delta);
  }
  return s;
}

}  // namespace curestat
