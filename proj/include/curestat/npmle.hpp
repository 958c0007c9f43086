#pragma once

// NPMLE of the event-time distribution from current-status data, and the
// profile likelihood of the cure-extended model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "curestat/error.hpp"
#include "curestat/model.hpp"
#include "curestat/parallel.hpp"

namespace curestat {

/// Fitted values F̂_1 <= ... <= F̂_n at the order statistics.
struct NpmleFit {
  std::vector<double> fhat;

  double last() const { return fhat.back(); }
};

/// Set of maximizers of the profile likelihood over the cure rate: [lo, hi].
struct CureArgmaxInterval {
  double lo = 0.0;
  double hi = 0.0;
};

namespace detail {

inline void require_deltas(std::span<const int> deltas) {
  require(!deltas.empty(), "delta sequence must be nonempty");
  for (int d : deltas) require(d == 0 || d == 1, "delta must be 0 or 1");
}

struct Block {
  std::int64_t sum;
  std::int64_t count;
};

// Pool-adjacent-violators on integer blocks. Means are compared by
// cross-multiplication and emitted as sum / count, so equal rationals give
// bit-identical doubles.
inline std::vector<double> pava_blocks(std::vector<Block> seeds) {
  std::vector<Block> stack;
  stack.reserve(seeds.size());
  for (const Block& b : seeds) {
    stack.push_back(b);
    while (stack.size() >= 2) {
      const Block& cur = stack.back();
      const Block& prev = stack[stack.size() - 2];
      if (prev.sum * cur.count <= cur.sum * prev.count) break;
      const Block merged{prev.sum + cur.sum, prev.count + cur.count};
      stack.pop_back();
      stack.back() = merged;
    }
  }
  std::vector<double> out;
  for (const Block& b : stack) {
    const double v = static_cast<double>(b.sum) / static_cast<double>(b.count);
    out.insert(out.end(), static_cast<std::size_t>(b.count), v);
  }
  return out;
}

}  // namespace detail

/// Literal max-min formula: F̂_i = max_{h<=i} min_{k>=i} mean(delta[h..k]).
/// O(n^3); reference implementation for testing.
inline NpmleFit maxmin_brute(std::span<const int> deltas) {
  detail::require_deltas(deltas);
  const std::size_t n = deltas.size();
  std::vector<std::int64_t> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + deltas[i];
  NpmleFit fit;
  fit.fhat.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1.0;
    for (std::size_t h = 0; h <= i; ++h) {
      double worst = 2.0;
      for (std::size_t k = i; k < n; ++k) {
        const double avg = static_cast<double>(prefix[k + 1] - prefix[h]) /
                           static_cast<double>(k - h + 1);
        worst = std::min(worst, avg);
      }
      best = std::max(best, worst);
    }
    fit.fhat[i] = best;
  }
  return fit;
}

/// Isotonic regression of the concomitant deltas (index order), O(n).
inline NpmleFit npmle_pava(std::span<const int> deltas) {
  detail::require_deltas(deltas);
  std::vector<detail::Block> seeds;
  seeds.reserve(deltas.size());
  for (int d : deltas) seeds.push_back({d, 1});
  return NpmleFit{detail::pava_blocks(std::move(seeds))};
}

/// As above, but observations tied in y start in one block, so the fit is
/// constant across every tie group.
inline NpmleFit npmle_pava(const SortedSample& sorted) {
  detail::require(sorted.size() >= 1, "empty sample");
  std::vector<detail::Block> seeds;
  seeds.reserve(sorted.group_count());
  for (std::size_t g = 0; g < sorted.group_count(); ++g) {
    detail::Block b{0, 0};
    for (std::size_t i = sorted.group_start[g]; i < sorted.group_end(g); ++i) {
      b.sum += sorted.delta[i];
      ++b.count;
    }
    seeds.push_back(b);
  }
  return NpmleFit{detail::pava_blocks(std::move(seeds))};
}

/// sum delta_i log f_i + (1 - delta_i) log(1 - f_i), with 0 log 0 = 0.
/// Returns -infinity for impossible configurations (delta = 1 with f = 0,
/// or delta = 0 with f = 1).
inline double log_lik(std::span<const double> f, std::span<const int> deltas) {
  detail::require_deltas(deltas);
  detail::require(f.size() == deltas.size(), "f and deltas differ in length");
  for (std::size_t i = 0; i < f.size(); ++i) {
    detail::require(f[i] >= 0.0 && f[i] <= 1.0, "f must lie in [0, 1]");
    detail::require(i == 0 || f[i] >= f[i - 1], "f must be nondecreasing");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (deltas[i] == 1) {
      if (f[i] == 0.0) return -kInf;
      total += std::log(f[i]);
    } else {
      if (f[i] == 1.0) return -kInf;
      total += std::log1p(-f[i]);
    }
  }
  return total;
}

/// Maximum of the cure-extended log-likelihood at fixed cure rate p, given by
/// capping the NPMLE at 1 - p.
inline double profile_cure_loglik(const NpmleFit& fit, std::span<const int> deltas, double p) {
  detail::require(p >= 0.0 && p <= 1.0, "cure rate p must lie in [0, 1]");
  const double cap = 1.0 - p;
  std::vector<double> capped(fit.fhat.size());
  std::transform(fit.fhat.begin(), fit.fhat.end(), capped.begin(),
                 [cap](double v) { return std::min(v, cap); });
  return log_lik(capped, deltas);
}

/// The profile likelihood is flat on [0, 1 - F̂_n]; every point there is an
/// NPMLE of the cure rate.
inline CureArgmaxInterval npmle_cure_argmax_interval(const NpmleFit& fit) {
  detail::require(!fit.fhat.empty(), "empty fit");
  return {0.0, 1.0 - fit.last()};
}

/// Monte Carlo frequency of {F̂_n = 1} over `reps` samples of size n.
/// Replication r uses seed + r.
inline double inconsistency_probe(const MixtureSpec& spec, std::size_t n, std::size_t reps,
                                  std::uint64_t seed, unsigned threads = 0) {
  spec.validate();
  detail::require(n >= 1, "sample size must be at least 1");
  detail::require(reps >= 1, "reps must be at least 1");
  std::vector<char> hit(reps, 0);
  parallel_for(reps, threads, [&](std::size_t r) {
    const auto sorted = sort_with_concomitants(simulate(spec, n, seed + r));
    hit[r] = npmle_pava(sorted).last() == 1.0 ? 1 : 0;
  });
  std::size_t count = 0;
  for (char h : hit) count += static_cast<std::size_t>(h);
  return static_cast<double>(count) / static_cast<double>(reps);
}

}  // namespace curestat
