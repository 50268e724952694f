/*
   Copyright 2026 The nonconv Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <gtest/gtest.h>

#include <algorithm>

#include "nonconv/simulator.hpp"

using namespace nonconv;

namespace {

Monomial mono(std::vector<double> e, double h = 1.0) { return Monomial{std::move(e), h}; }

NormalizationPair fixed_norm(std::size_t terms, double bN, double a = 0.0) {
  NormalizationPair p;
  p.N = 0;
  p.bN = bN;
  p.aN.assign(terms, a);
  p.aNStderr.assign(terms, 0.0);
  return p;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

double sup_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST(QIndex, Cases) {
  EXPECT_EQ(q_index(QCase::arith_prog, 3, 1), 3u);
  EXPECT_EQ(q_index(QCase::arith_prog, 3, 2), 6u);
  EXPECT_EQ(q_index(QCase::ldep, 3, 1), 3u);
  EXPECT_EQ(q_index(QCase::ldep, 3, 2), 4u);
}

TEST(SimulatePaths, SingleTermSumEqualsTermPath) {
  const auto F = Polynomial::linear(1);
  const auto s = build_sampler(TailSpec{1.5, 0, 1, 1}, {}, 3);
  const auto b = simulate_paths(F, QCase::ldep, 1000, 1.0, s);
  EXPECT_EQ(b.sum.values, b.perTheta[0].values);
  EXPECT_EQ(b.sum.values.front(), 0.0);
  EXPECT_EQ(b.sum.size(), 1001u);
}

TEST(SimulatePaths, BruteForceSmallSums) {
  const auto F = Polynomial::make(2, {mono({1, 1}, 2.0), mono({0, 2}, -1.0)});
  const auto s = build_sampler(TailSpec{1.2, 1, 0.6, 0.4}, {}, 77);
  const auto norm = fixed_norm(2, 1.0);
  for (auto q : {QCase::ldep, QCase::arith_prog}) {
    const auto b = simulate_paths(F, q, 4, 1.0, s, norm);
    double want0 = 0.0, want1 = 0.0;
    for (std::uint64_t n = 1; n <= 4; ++n) {
      const double x1 = s.draw(q_index(q, n, 1)), x2 = s.draw(q_index(q, n, 2));
      want0 += x1 * x2;
      want1 += x2 * x2;
    }
    EXPECT_NEAR(b.raw[0].back(), want0, 1e-12 * std::abs(want0));
    EXPECT_NEAR(b.raw[1].back(), want1, 1e-12 * std::abs(want1));
    EXPECT_EQ(b.sum.back(), 2.0 * b.perTheta[0].back() + -1.0 * b.perTheta[1].back());
  }
}

TEST(SimulatePaths, CenteringUsesFloorOfNt) {
  const auto F = Polynomial::linear(1);
  const auto s = build_sampler(TailSpec{1.5, 0, 1, 0}, {}, 4);
  const auto b = simulate_paths(F, QCase::ldep, 10, 1.0, s, fixed_norm(1, 2.0, 0.5));
  for (std::size_t m = 0; m < b.raw[0].size(); ++m)
    EXPECT_DOUBLE_EQ(b.perTheta[0].values[m], (b.raw[0].values[m] - 0.5 * double(m)) / 2.0);
  EXPECT_EQ(b.perTheta[0].at(0.35), b.perTheta[0].values[3]);
  EXPECT_EQ(b.perTheta[0].at(0.399999), b.perTheta[0].values[3]);
}

TEST(SimulatePaths, ExactAdditivity) {
  const auto F = Polynomial::make(3, {mono({1, 1, 0}, 0.3), mono({0, 1, 1}, -1.7),
                                      mono({2, 0, 0}, 5.0)});
  const auto s = build_sampler(TailSpec{1.0, 0, 0.5, 0.5}, {}, 8);
  const auto b = simulate_paths(F, QCase::arith_prog, 500, 2.0, s, fixed_norm(3, 100.0, 0.1));
  for (std::size_t m = 0; m < b.sum.size(); ++m) {
    double v = 0.0;
    for (std::size_t t = 0; t < 3; ++t) v += F.terms[t].coefficient * b.perTheta[t].values[m];
    ASSERT_EQ(b.sum.values[m], v);
  }
}

TEST(SimulatePaths, NonFiniteSummandNamesIndex) {
  const auto F = Polynomial::make(1, {mono({200})});
  const auto s = build_sampler(TailSpec{1.0, 0, 0.5, 0.5}, {}, 1);
  try {
    simulate_paths(F, QCase::ldep, 10000, 1.0, s, fixed_norm(1, 1.0));
    FAIL() << "expected NumericFailure";
  } catch (const NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("n="), std::string::npos);
  }
}

TEST(SimulatePaths, RejectsBadGrid) {
  const auto F = Polynomial::linear(1);
  const auto s = build_sampler(TailSpec{}, {}, 1);
  EXPECT_THROW(simulate_paths(F, QCase::ldep, 1, 1.0, s, fixed_norm(1, 1)), InvalidArgument);
  EXPECT_THROW(simulate_paths(F, QCase::ldep, 10, 0.0, s, fixed_norm(1, 1)), InvalidArgument);
}

TEST(Rearrangement, LinearPairSharesSummand) {
  const auto F = Polynomial::linear(2);
  const auto s = build_sampler(TailSpec{1.5, 0, 1, 1}, {}, 2);
  const auto r = rearranged_paths(F, 200, 1.0, s, fixed_norm(2, 1.0));
  EXPECT_EQ(r.plan.offset, (std::vector<std::uint64_t>{1, 0}));
  ASSERT_EQ(r.plan.families.size(), 1u);
  // both components sum X_{n+1} for n = 2, 3, ...
  EXPECT_EQ(r.bundle.raw[0].values, r.bundle.raw[1].values);
  EXPECT_NEAR(r.bundle.raw[0].values[2], s.draw(3), 1e-15 * std::abs(s.draw(3)));
  EXPECT_TRUE(r.boundHolds);
}

TEST(Rearrangement, IdentityWhenShiftConditionHolds) {
  const auto F = Polynomial::make(3, {mono({1, 0, 1}), mono({1, 1, 0})});
  const auto sum = iid_index_summary(F, 1, 0);
  ASSERT_FALSE(shift_condition(sum).has_value());
  const auto plan = rearrangement_plan(sum);
  EXPECT_TRUE(plan.families.empty());
  EXPECT_EQ(plan.offset, (std::vector<std::uint64_t>{0, 0}));
}

TEST(Rearrangement, BoundaryBoundHoldsPathwise) {
  const auto F = Polynomial::make(3, {mono({1, 1, 0}), mono({0, 1, 1}), mono({1, 0, 0})});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = build_sampler(TailSpec{1.0, 0, 0.7, 0.3}, {}, seed);
    const auto r = rearranged_paths(F, 500, 1.0, s, fixed_norm(3, 1.0));
    EXPECT_TRUE(r.boundHolds) << seed;
    EXPECT_LE(r.worstRatio, 1.0 + 1e-9);
  }
}

TEST(Blocks, Membership) {
  std::vector<bool> got;
  for (std::uint64_t n = 1; n <= 8; ++n) got.push_back(in_plus_block(n, 3, 2));
  EXPECT_EQ(got, (std::vector<bool>{true, true, true, false, true, true, true, false}));
}

TEST(Blocks, IdentityAtEveryGridPoint) {
  const auto F = Polynomial::make(2, {mono({1, 1}), mono({1, 0}, 0.5)});
  const auto s = build_sampler(TailSpec{1.2, 0, 0.5, 0.5}, {}, 6);
  const auto plain = simulate_paths(F, QCase::ldep, 3000, 1.0, s, fixed_norm(2, 50.0, 0.3));
  for (std::uint64_t k : {1, 3, 17, 400}) {
    const auto bp = block_decomposition(F, 3000, 1.0, s, fixed_norm(2, 50.0, 0.3), k);
    for (std::size_t m = 0; m < plain.sum.size(); ++m) {
      const double lhs = plain.sum.values[m];
      const double rhs = bp.xiK.sum.values[m] + bp.etaK.sum.values[m];
      const double scale = std::abs(bp.xiK.sum.values[m]) + std::abs(bp.etaK.sum.values[m]);
      ASSERT_NEAR(lhs, rhs, 1e-12 * (1.0 + scale)) << "k=" << k << " m=" << m;
    }
  }
}

TEST(Blocks, NoGapsForSingleVariable) {
  const auto F = Polynomial::linear(1);
  const auto s = build_sampler(TailSpec{}, {}, 6);
  const auto bp = block_decomposition(F, 500, 1.0, s, fixed_norm(1, 1.0, 0.2), 4);
  EXPECT_EQ(sup_abs(bp.etaK.sum.values), 0.0);
  EXPECT_THROW(block_decomposition(F, 500, 1.0, s, fixed_norm(1, 1.0), 0), InvalidArgument);
}

TEST(Blocks, GapContributionShrinksWithBlockSize) {
  const auto F = Polynomial::make(2, {mono({1, 1})});
  const auto base = build_sampler(TailSpec{1.5, 0, 0.5, 0.5}, {}, 0);
  const auto norm = fixed_norm(1, normalizing_scale(2000, 1.5, 1));
  std::vector<double> meds;
  for (std::uint64_t k : {4, 16, 64, 256}) {
    const auto sups = for_each_replicate(200, 91, 1, [&](std::uint64_t, std::uint64_t seed) {
      return sup_abs(block_decomposition(F, 2000, 1.0, base.with_seed(seed), norm, k)
                         .etaK.sum.values);
    });
    meds.push_back(median(sups));
  }
  for (std::size_t i = 1; i < meds.size(); ++i) EXPECT_LT(meds[i], meds[i - 1]);
}

TEST(QTruncation, FirstClassKeepsOddIndices) {
  const auto F = Polynomial::make(2, {mono({1, 1})});
  const auto s = build_sampler(TailSpec{1.0, 0, 0.5, 0.5}, {}, 12);
  const auto g = gamma_decomposition(2, 1000);
  const auto b = q_truncated_paths(F, 1000, 1.0, s, fixed_norm(1, 1.0), g, 1);
  const auto& v = b.raw[0].values;
  for (std::size_t n = 1; n < v.size(); ++n) {
    if (n % 2 == 0) ASSERT_EQ(v[n], v[n - 1]) << n;
    else ASSERT_NE(v[n], v[n - 1]) << n;
  }
  EXPECT_THROW(q_truncated_paths(F, 1000, 1.0, s, fixed_norm(1, 1.0), g, 0), InvalidArgument);
}

TEST(QTruncation, FullRetentionIsExact) {
  const auto F = Polynomial::make(3, {mono({1, 1, 0}), mono({1, 0, 1}, 2.0)});
  const auto s = build_sampler(TailSpec{1.0, 0, 0.5, 0.5}, {}, 12);
  const auto g = gamma_decomposition(3, 900);
  const auto norm = fixed_norm(2, 30.0, 0.1);
  const auto full = simulate_paths(F, QCase::arith_prog, 900, 1.0, s, norm);
  const auto b = q_truncated_paths(F, 900, 1.0, s, norm, g, g.gamma1.size());
  EXPECT_EQ(b.sum.values, full.sum.values);
  EXPECT_EQ(b.perTheta[1].values, full.perTheta[1].values);
}

TEST(QTruncation, ErrorShrinksWithQ) {
  const auto F = Polynomial::make(2, {mono({1, 1})});
  const auto base = build_sampler(TailSpec{1.0, 0, 0.5, 0.5}, {}, 0);
  const auto g = gamma_decomposition(2, 2048);
  const auto norm = fixed_norm(1, normalizing_scale(2048, 1.0, 1.0));
  std::vector<double> meds;
  for (std::size_t q : {1, 2, 4, 8, 16}) {
    const auto d = for_each_replicate(200, 5, 1, [&](std::uint64_t, std::uint64_t seed) {
      const auto s = base.with_seed(seed);
      const auto full = simulate_paths(F, QCase::arith_prog, 2048, 1.0, s, norm);
      const auto tr = q_truncated_paths(F, 2048, 1.0, s, norm, g, q);
      double m = 0.0;
      for (std::size_t i = 0; i < full.sum.size(); ++i)
        m = std::max(m, std::abs(full.perTheta[0].values[i] - tr.perTheta[0].values[i]));
      return m;
    });
    meds.push_back(median(d));
  }
  for (std::size_t i = 1; i < meds.size(); ++i) EXPECT_LE(meds[i], meds[i - 1]);
  EXPECT_LT(meds.back(), meds.front());
}

TEST(Ensemble, SingleReplicateMatchesDerivedSeed) {
  const auto F = Polynomial::linear(2);
  const auto s = build_sampler(TailSpec{1.5, 0, 1, 0.5}, {}, 0);
  const auto norm = fixed_norm(2, 100.0, 1.0);
  EnsembleConfig c{F, QCase::ldep, 500, 1.0, s, norm, 1234, {0.5}, 1, 1};
  const auto e = replicate_ensemble(c, 1);
  const auto b = simulate_paths(F, QCase::ldep, 500, 1.0, s.with_seed(derive_seed(1234, 0)), norm);
  EXPECT_EQ(e.paths[0].sum.values, b.sum.values);
  EXPECT_EQ(e.endValues[0].back(), b.sum.back());
  EXPECT_EQ(e.probeValues[0][0], b.sum.at(0.5));
  EXPECT_THROW(replicate_ensemble(c, 0), InvalidArgument);
}

TEST(Ensemble, DeterministicAcrossRunsAndThreads) {
  const auto F = Polynomial::make(2, {mono({1, 1})});
  const auto s = build_sampler(TailSpec{1.0, 0, 0.5, 0.5}, {}, 0);
  EnsembleConfig c{F, QCase::arith_prog, 300, 1.5, s, fixed_norm(1, 10.0), 9, {0.5, 1.0}, 0, 1};
  const auto a = replicate_ensemble(c, 64);
  const auto b = replicate_ensemble(c, 64);
  c.threads = 3;
  const auto d = replicate_ensemble(c, 64);
  EXPECT_EQ(a.endValues, b.endValues);
  EXPECT_EQ(a.endValues, d.endValues);
  EXPECT_EQ(a.probeValues, d.probeValues);
  EXPECT_EQ(a.seeds, d.seeds);
}

TEST(Ensemble, LawOfLargeNumbers) {
  const auto F = Polynomial::linear(1);
  const auto s = build_sampler(TailSpec{1.5, 0, 1, 0.3}, {}, 0);
  const auto m = s.dist().signed_moments(1.0);
  const double mean = m.plus - m.minus;
  EnsembleConfig c{F, QCase::ldep, 1'000'000, 1.0, s, fixed_norm(1, 1.0), 77, {}, 0, 2};
  const auto e = replicate_ensemble(c, 100);
  std::vector<double> r;
  for (const auto& v : e.rawEnd) r.push_back(v[0] / 1e6);
  std::sort(r.begin(), r.end());
  const double med = 0.5 * (r[49] + r[50]), iqr = r[74] - r[24];
  EXPECT_LT(std::abs(med - mean), 3 * iqr);
}
