#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "curestat/estimators.hpp"
#include "curestat/npmle.hpp"
#include "oracles.hpp"

using namespace curestat;

namespace {

/// (delta, y) pairs with y = 1, 2, ..., n.
SortedSample toy(const std::vector<int>& deltas) {
  CurrentStatusSample s;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    s.records.push_back({deltas[i], static_cast<double>(i + 1)});
  }
  return sort_with_concomitants(s);
}

CvCurve synthetic_curve(const std::vector<double>& objective) {
  CvCurve c{CvFlavor::M2, VariancePlugin::P1, {0.5, 0.6, std::nullopt}, {}};
  const std::size_t n = objective.size();
  for (std::size_t i = 0; i < n; ++i) {
    c.points.push_back({i + 1, double(i + 1), n - i, objective[i] / 2, objective[i] / 2,
                        objective[i]});
  }
  return c;
}

}  // namespace

TEST(Trace, ToyExample) {
  const auto tr = trace(toy({1, 0, 1}));
  ASSERT_EQ(tr.entries.size(), 3u);
  EXPECT_DOUBLE_EQ(tr.entries[0].p1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(tr.entries[1].p1, 0.5);
  EXPECT_DOUBLE_EQ(tr.entries[2].p1, 1.0);
  EXPECT_DOUBLE_EQ(tr.entries[0].p2, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(tr.entries[1].p2, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(tr.entries[2].p2, 1.0);
  EXPECT_EQ(tr.entries[1].tail_count, 2u);
  EXPECT_EQ(tr.entries[1].index, 2u);
}

TEST(Trace, AllZero) {
  for (const auto& e : trace(toy({0, 0, 0, 0})).entries) {
    EXPECT_EQ(e.p1, 0.0);
    EXPECT_EQ(e.p2, 0.0);
  }
}

TEST(Trace, FirstEntryIsMeanDelta) {
  const auto s = simulate(MixtureSpec::exponential(0.3, 2.0, 1.0), 333, 4);
  double sum = 0;
  for (const auto& r : s.records) sum += r.delta;
  EXPECT_DOUBLE_EQ(trace(sort_with_concomitants(s)).entries.front().p1, sum / 333.0);
}

TEST(Trace, InvariantsAndNpmleIdentity) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto sorted = sort_with_concomitants(
        simulate(MixtureSpec::exponential(0.3, 2.0, 1.0), 10 + seed * 7, seed));
    const auto tr = trace(sorted);
    double running = 0.0;
    for (std::size_t k = 0; k < tr.entries.size(); ++k) {
      const auto& e = tr.entries[k];
      // p1 as a direct tail average.
      double ones = 0;
      for (std::size_t j = e.index - 1; j < sorted.size(); ++j) ones += sorted.delta[j];
      EXPECT_DOUBLE_EQ(e.p1, ones / static_cast<double>(sorted.size() - e.index + 1));
      running = std::max(running, e.p1);
      EXPECT_EQ(e.p2, running);
      EXPECT_GE(e.p2, e.p1);
    }
    EXPECT_EQ(tr.entries.back().p2, npmle_pava(sorted.delta).last());
  }
}

TEST(Trace, TieGroupsShareOneEntry) {
  const CurrentStatusSample s{{{1, 1.0}, {0, 2.0}, {1, 2.0}, {0, 2.0}, {1, 5.0}}, 0};
  const auto tr = trace(sort_with_concomitants(s));
  ASSERT_EQ(tr.entries.size(), 3u);
  EXPECT_EQ(tr.entries[1].index, 2u);
  EXPECT_EQ(tr.entries[1].tail_count, 4u);
  EXPECT_DOUBLE_EQ(tr.entries[1].p1, 0.5);  // threshold y >= 2 keeps the whole tie group
  EXPECT_EQ(tr.position_of_index(3), 1u);
  EXPECT_EQ(tr.position_of_index(4), 1u);
  EXPECT_EQ(tr.position_of_index(5), 2u);
  // A cut-off inside a tie group means the group's threshold.
  EXPECT_EQ(estimate_cure(tr, cutoff_at_index(tr, 3)).tail_count, 4u);
}

TEST(EstimateCure, Examples) {
  const auto tr = trace(toy({1, 0, 1}));
  const auto est = estimate_cure(tr, cutoff_at_index(tr, 2));
  EXPECT_DOUBLE_EQ(est.p_hat1, 0.5);
  EXPECT_DOUBLE_EQ(est.p_hat2, 1.0 / 3.0);

  const auto ones = trace(toy({1, 1, 1, 1}));
  for (std::size_t i = 1; i <= 4; ++i) {
    const auto e = estimate_cure(ones, cutoff_at_index(ones, i));
    EXPECT_EQ(e.p_hat1, 0.0);
    EXPECT_EQ(e.p_hat2, 0.0);
  }
}

TEST(EstimateCure, GuardViolation) {
  const auto tr = trace(toy({1, 0, 1}));
  EXPECT_THROW(estimate_cure(tr, cutoff_at_index(tr, 3, 2)), DataError);
  EXPECT_NO_THROW(estimate_cure(tr, cutoff_at_index(tr, 2, 2)));
  EXPECT_THROW(cutoff_at_index(tr, 0), InvalidArgument);
  EXPECT_THROW(cutoff_at_index(tr, 4), InvalidArgument);
  EXPECT_THROW(cutoff_at_threshold(tr, 3.5, 1, CutoffMethod::FixedIndex), DataError);
}

TEST(EstimateCure, OrderedAndInRange) {
  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto tr = trace(sort_with_concomitants(
        simulate(MixtureSpec::exponential(0.4, 1.0, 1.5), 80, seed)));
    for (std::size_t i = 1; i <= tr.n; ++i) {
      const auto e = estimate_cure(tr, cutoff_at_index(tr, i));
      EXPECT_LE(0.0, e.p_hat2);
      EXPECT_LE(e.p_hat2, e.p_hat1);
      EXPECT_LE(e.p_hat1, 1.0);
    }
  }
}

TEST(CutoffAtQuantile, Index) {
  const auto tr = trace(toy({1, 0, 1, 1, 0, 1, 1, 1, 0, 1}));
  EXPECT_EQ(cutoff_at_quantile(tr, 0.5).index, 5u);
  EXPECT_EQ(cutoff_at_quantile(tr, 0.0).index, 1u);
  EXPECT_EQ(cutoff_at_quantile(tr, 1.0).index, 10u);
  EXPECT_EQ(cutoff_at_quantile(tr, 0.51).index, 6u);
  EXPECT_THROW(cutoff_at_quantile(tr, 1.5), InvalidArgument);
}

TEST(PlugIns, ToyExample) {
  const auto pi = plug_ins(toy({1, 0, 1}));
  EXPECT_DOUBLE_EQ(pi.delta_bar, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(pi.p2_bar, 7.0 / 9.0);
  ASSERT_TRUE(pi.alpha_hat);
  EXPECT_NEAR(*pi.alpha_hat, 6.0, 1e-12);
}

TEST(PlugIns, DegenerateAllZero) {
  const auto pi = plug_ins(toy({0, 0, 0}));
  EXPECT_EQ(pi.delta_bar, 0.0);
  EXPECT_EQ(pi.p2_bar, 0.0);
  EXPECT_FALSE(pi.alpha_hat);
}

TEST(PlugIns, TiesWeightedBySampleCount) {
  // Three points tied at y = 1, one at y = 2: p2 = (1/2, 1/2, 1/2, 1).
  const CurrentStatusSample s{{{1, 1.0}, {0, 1.0}, {0, 1.0}, {1, 2.0}}, 0};
  EXPECT_DOUBLE_EQ(plug_ins(sort_with_concomitants(s)).p2_bar, (0.5 * 3 + 1.0) / 4.0);
}

TEST(PlugIns, KoziolGreenPopulationMoments) {
  const double p = 0.3, lam = 2.0, mu = 1.0;
  // E delta = (1 - p) int F dG; E(1 - delta) - p; their ratio is alpha = lam / mu.
  const double e_delta = (1 - p) * oracle::integrate(
                                       [&](double y) {
                                         return (1 - std::exp(-lam * y)) * mu * std::exp(-mu * y);
                                       },
                                       0.0, 60.0, 1e-12);
  const double gap = (1 - e_delta) - p;
  EXPECT_NEAR(e_delta, 0.4667, 1e-4);
  EXPECT_NEAR(gap, 0.2333, 1e-4);
  EXPECT_NEAR(e_delta / gap, lam / mu, 1e-8);
}

TEST(CvM1, EndpointsAndErrors) {
  const auto sorted = toy({1, 0, 1, 1, 0, 1, 1});
  const auto tr = trace(sorted);
  const auto c = cv_m1_curve(tr);
  const auto pi = plug_ins(tr);
  const auto& first = c.points.front();
  EXPECT_DOUBLE_EQ(first.variance, pi.delta_bar * (1 - pi.delta_bar) / 7.0);
  EXPECT_DOUBLE_EQ(first.bias2, (pi.p2_bar - pi.delta_bar) * (pi.p2_bar - pi.delta_bar));
  EXPECT_THROW(cv_m1_curve(toy({0, 0, 0})), DataError);
  // p2 variance plug-in
  const auto c2 = cv_m1_curve(tr, VariancePlugin::P2);
  for (std::size_t k = 0; k < c2.points.size(); ++k) {
    const auto& e = tr.entries[k];
    EXPECT_DOUBLE_EQ(c2.points[k].variance, e.p2 * (1 - e.p2) / e.tail_count);
  }
}

TEST(CvM2, ToyExample) {
  const auto c = cv_m2_curve(toy({1, 0, 1}));
  const auto& pt = c.points[1];
  EXPECT_DOUBLE_EQ(pt.variance, 0.125);
  EXPECT_NEAR(pt.bias2, 1.0 / 81.0, 1e-15);
  EXPECT_NEAR(pt.bias2, 0.012346, 1e-6);
  EXPECT_NEAR(pt.objective, 0.137346, 1e-6);
}

TEST(CvM2, BiasZeroWhereP2EqualsMean) {
  // p2 is constant, so p2 = p2_bar everywhere.
  for (const auto& pt : cv_m2_curve(toy({1, 1, 0, 0})).points) EXPECT_EQ(pt.bias2, 0.0);
}

TEST(CvCurves, NonnegativeTermsAndDegenerateVariance) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto tr = trace(sort_with_concomitants(
        simulate(MixtureSpec::exponential(0.3, 2.0, 1.0), 100, seed)));
    std::vector<CvCurve> curves{cv_m2_curve(tr)};
    if (plug_ins(tr).alpha_hat) curves.push_back(cv_m1_curve(tr));
    for (const auto& c : curves) {
      for (std::size_t k = 0; k < c.points.size(); ++k) {
        const auto& pt = c.points[k];
        EXPECT_GE(pt.variance, 0.0);
        EXPECT_GE(pt.bias2, 0.0);
        EXPECT_DOUBLE_EQ(pt.objective, pt.variance + pt.bias2);
        const double p1 = tr.entries[k].p1;
        if (p1 == 0.0 || p1 == 1.0) EXPECT_EQ(pt.variance, 0.0);
      }
    }
  }
}

TEST(RankInvariance, MonotoneTransformLeavesResultsUnchanged) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = simulate(MixtureSpec::exponential(0.3, 2.0, 1.0), 150, seed);
    auto t = s;
    for (auto& r : t.records) r.y = 3.0 * std::exp(r.y) + 1.0;
    const auto a = trace(sort_with_concomitants(s));
    const auto b = trace(sort_with_concomitants(t));
    ASSERT_EQ(a.entries.size(), b.entries.size());
    for (std::size_t k = 0; k < a.entries.size(); ++k) {
      EXPECT_EQ(a.entries[k].p1, b.entries[k].p1);
      EXPECT_EQ(a.entries[k].p2, b.entries[k].p2);
      EXPECT_DOUBLE_EQ(3.0 * std::exp(a.entries[k].y) + 1.0, b.entries[k].y);
    }
    const auto ca = cv_m2_curve(a), cb = cv_m2_curve(b);
    for (std::size_t k = 0; k < ca.points.size(); ++k) {
      EXPECT_EQ(ca.points[k].objective, cb.points[k].objective);
    }
    const auto ea = estimate_cure(a, select_cutoff(ca));
    const auto eb = estimate_cure(b, select_cutoff(cb));
    EXPECT_EQ(ea.p_hat1, eb.p_hat1);
    EXPECT_EQ(ea.p_hat2, eb.p_hat2);
  }
}

TEST(SelectCutoff, ConvexCurve) {
  std::vector<double> obj;
  for (int i = 1; i <= 30; ++i) obj.push_back((i - 12.0) * (i - 12.0) + 1.0);
  const auto ch = select_cutoff(synthetic_curve(obj));
  EXPECT_EQ(ch.index, 12u);
  EXPECT_EQ(ch.tail_count, 19u);
  EXPECT_EQ(ch.method, CutoffMethod::CvM2);
}

TEST(SelectCutoff, GuardExcludesUpperExtreme) {
  std::vector<double> obj(20, 5.0);
  obj[9] = 1.0;     // interior local minimum
  obj[19] = 0.001;  // tail count 1
  EXPECT_EQ(select_cutoff(synthetic_curve(obj)).index, 10u);
  EXPECT_EQ(select_cutoff(synthetic_curve(obj), {1, true}).index, 20u);
}

TEST(SelectCutoff, TiesGoToSmallerIndex) {
  std::vector<double> obj(10, 2.0);
  obj[3] = obj[6] = 1.0;
  EXPECT_EQ(select_cutoff(synthetic_curve(obj)).index, 4u);
}

TEST(SelectCutoff, AllFiltered) {
  EXPECT_THROW(select_cutoff(synthetic_curve({1.0, 2.0, 3.0}), {5, true}), DataError);
}

TEST(SelectCutoff, SkipsZeroVarianceUnlessNothingElseRemains) {
  auto c = synthetic_curve(std::vector<double>(12, 1.0));
  c.points[5].variance = 0.0;
  c.points[5].objective = c.points[5].bias2 = 1e-6;
  EXPECT_EQ(select_cutoff(c).index, 1u);
  EXPECT_EQ(select_cutoff(c, {5, false}).index, 6u);
  for (auto& pt : c.points) pt.variance = 0.0;
  EXPECT_EQ(select_cutoff(c).index, 6u);
}

TEST(CvSelection, ExponentialModelMonteCarlo) {
  const auto spec = MixtureSpec::exponential(0.3, 2.0, 1.0);
  int m1_in = 0, m2_in = 0;
  double p2_sum_m1 = 0, p2_sum_m2 = 0;
  const int seeds = 500;
  for (int s = 1; s <= seeds; ++s) {
    const auto tr = trace(sort_with_concomitants(simulate(spec, 100, s)));
    const auto c1 = select_cutoff(cv_m1_curve(tr));
    const auto c2 = select_cutoff(cv_m2_curve(tr));
    m1_in += c1.index >= 30 && c1.index <= 85;
    m2_in += c2.index >= 25 && c2.index <= 80;
    p2_sum_m1 += 1.0 - estimate_cure(tr, c1).p_hat2;
    p2_sum_m2 += 1.0 - estimate_cure(tr, c2).p_hat2;
  }
  EXPECT_GE(m1_in, 0.9 * seeds);
  EXPECT_GE(m2_in, 0.9 * seeds);
  for (double mean : {p2_sum_m1 / seeds, p2_sum_m2 / seeds}) {
    EXPECT_GE(mean, 0.55);
    EXPECT_LE(mean, 0.72);
  }
}

TEST(TheoreticalMn, Examples) {
  EXPECT_NEAR(theoretical_Mn(0.0, 100, 0.3, 2, 1), 0.0021 + 0.7 * 0.7 / 9.0, 1e-15);
  EXPECT_NEAR(theoretical_Mn(0.0, 100, 0.3, 2, 1), 0.056544, 1e-6);
  EXPECT_NEAR(theoretical_Mn(0.92832, 100, 0.3, 2, 1), 0.0066421, 1e-6);
  EXPECT_GT(theoretical_Mn(30.0, 100, 0.3, 2, 1), 1e10);
  EXPECT_THROW(theoretical_Mn(1.0, 100, 0.3, 0.0, 1), InvalidArgument);
  EXPECT_THROW(theoretical_Mn(1.0, 100, 0.3, 2, -1), InvalidArgument);
}

TEST(TheoreticalCutoff, ValueAndBalance) {
  const double x = theoretical_cutoff_exponential(100, 0.3, 2, 1);
  EXPECT_NEAR(x, std::log(280.0 / 2.7) / 5.0, 1e-15);
  EXPECT_NEAR(x, 0.9283076, 1e-7);
  const double var = 0.3 * 0.7 * std::exp(x) / 100;
  const double b = 0.7 / 3.0 * std::exp(-2 * x);
  EXPECT_NEAR(1.0 * var, 2 * 2.0 * b * b, 1e-9);
  EXPECT_THROW(theoretical_cutoff_exponential(100, 0.0, 2, 1), InvalidArgument);
  EXPECT_THROW(theoretical_cutoff_exponential(100, 1.0, 2, 1), InvalidArgument);
  EXPECT_EQ(theoretical_cutoff_exponential(1, 0.9, 0.5, 2), 0.0);  // log argument <= 1
}

TEST(TheoreticalCutoff, TailCountGrowsAtOptimalRate) {
  std::vector<double> ratio;
  for (double n : {1e2, 1e3, 1e4}) {
    const double x = theoretical_cutoff_exponential(n, 0.3, 2, 1);
    ratio.push_back(n * std::exp(-x) / std::pow(n, 0.8));
  }
  EXPECT_NEAR(ratio[1] / ratio[0], 1.0, 1e-6);
  EXPECT_NEAR(ratio[2] / ratio[0], 1.0, 1e-6);
}

TEST(TheoreticalCutoff, MatchesGoldenSectionOnGrid) {
  for (double p : {0.1, 0.3, 0.5})
    for (double lam : {0.5, 1.0, 2.0})
      for (double mu : {0.5, 1.0, 2.0})
        for (double n : {1e2, 1e3, 1e4}) {
          const long double numeric = oracle::golden_section(
              [&](long double x) { return oracle::mse_exponential(x, n, p, lam, mu); }, 0.0L,
              50.0L);
          EXPECT_NEAR(theoretical_cutoff_exponential(n, p, lam, mu),
                      static_cast<double>(numeric), 1e-8)
              << "p=" << p << " lam=" << lam << " mu=" << mu << " n=" << n;
        }
}
