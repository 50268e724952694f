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

#include <random>
#include <set>

#include "nonconv/indexcalc.hpp"

using namespace nonconv;

namespace {

Monomial mono(std::vector<double> e, double h = 1.0) { return Monomial{std::move(e), h}; }

Polynomial random_polynomial(std::mt19937_64& g, std::size_t l, int maxTerms, int maxSigma) {
  std::uniform_int_distribution<int> S(0, maxSigma), T(1, maxTerms);
  std::vector<Monomial> terms;
  std::set<std::vector<double>> seen;
  const int want = T(g);
  while (static_cast<int>(terms.size()) < want) {
    std::vector<double> e(l);
    bool any = false;
    for (auto& x : e) {
      x = S(g);
      any = any || x > 0;
    }
    if (!any || !seen.insert(e).second) continue;
    terms.push_back(mono(e, 1.0 + static_cast<double>(terms.size())));
  }
  return Polynomial::make(l, terms);
}

}  // namespace

TEST(GeneralSummary, SingleVariable) {
  const auto s = general_index_summary(Polynomial::make(1, {mono({1})}),
                                       std::vector<IndexTail>{{1.5, 0}});
  EXPECT_EQ(s.alphaStar, 1.5);
  EXPECT_EQ(s.kStar, 0.0);
  EXPECT_EQ(s.thetaStar, (std::vector<std::size_t>{0}));
  EXPECT_EQ(s.mStar, 1);
}

TEST(GeneralSummary, ProductWithLogPowers) {
  const auto s = general_index_summary(Polynomial::make(2, {mono({1, 1})}),
                                       std::vector<IndexTail>{{1, 0}, {1, 2}});
  const auto& t = s.perTheta[0];
  EXPECT_EQ(t.alpha, 1.0);
  EXPECT_EQ(t.J, (std::vector<int>{1, 2}));
  EXPECT_EQ(t.p, 2);
  EXPECT_EQ(t.k, 3.0);
}

TEST(GeneralSummary, MixedIndices) {
  const auto F = Polynomial::make(3, {mono({2, 1, 0}), mono({0, 0, 1})});
  const auto s = general_index_summary(F, std::vector<IndexTail>{{1, 0}, {1, 0}, {0.5, 1}});
  EXPECT_EQ(s.perTheta[0].alpha, 0.5);
  EXPECT_EQ(s.perTheta[0].J, (std::vector<int>{1}));
  EXPECT_EQ(s.perTheta[0].k, 0.0);
  EXPECT_EQ(s.perTheta[1].alpha, 0.5);
  EXPECT_EQ(s.perTheta[1].J, (std::vector<int>{3}));
  EXPECT_EQ(s.perTheta[1].k, 1.0);
  EXPECT_EQ(s.alphaStar, 0.5);
  EXPECT_EQ(s.kStar, 1.0);
  EXPECT_EQ(s.thetaStar, (std::vector<std::size_t>{1}));
}

TEST(IidSummary, MixedPowers) {
  const auto F = Polynomial::make(3, {mono({2, 2, 1}), mono({3, 0, 0})});
  const auto s = iid_index_summary(F, 1.2, 0);
  EXPECT_EQ(s.perTheta[0].sigma, 2.0);
  EXPECT_EQ(s.perTheta[0].J, (std::vector<int>{1, 2}));
  EXPECT_EQ(s.perTheta[0].p, 2);
  EXPECT_NEAR(s.perTheta[0].alpha, 0.6, 1e-15);
  EXPECT_EQ(s.perTheta[0].k, 1.0);
  EXPECT_EQ(s.perTheta[1].sigma, 3.0);
  EXPECT_EQ(s.perTheta[1].J, (std::vector<int>{1}));
  EXPECT_NEAR(s.alphaStar, 0.4, 1e-15);
  EXPECT_EQ(s.kStar, 0.0);
  EXPECT_EQ(s.thetaStar, (std::vector<std::size_t>{1}));
  EXPECT_EQ(s.sigmaStar, 3.0);
  EXPECT_EQ(s.pStar, 1);
  EXPECT_TRUE(s.pStarConsistent);
}

TEST(IidSummary, LinearForm) {
  const auto s = iid_index_summary(Polynomial::linear(2), 1.3, 0.7);
  EXPECT_EQ(s.mStar, 2);
  EXPECT_EQ(s.sigmaStar, 1.0);
  EXPECT_EQ(s.pStar, 1);
  EXPECT_EQ(s.kStar, 0.7);
}

TEST(IidSummary, PStarRelation) {
  const auto s = iid_index_summary(Polynomial::make(2, {mono({1, 1})}), 1, 1);
  EXPECT_EQ(s.perTheta[0].J, (std::vector<int>{1, 2}));
  EXPECT_EQ(s.perTheta[0].p, 2);
  EXPECT_EQ(s.kStar, 3.0);
  EXPECT_EQ((s.kStar + 1.0) / (1.0 + 1.0), s.pStar);
  EXPECT_TRUE(s.pStarConsistent);
}

TEST(IidSummary, AgreesWithGeneralSummary) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> A(0.2, 1.95), K(0.0, 3.0);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t l = 1 + rep % 6;
    const auto F = random_polynomial(g, l, 5, 5);
    const double a = A(g), k = K(g);
    const auto s1 = iid_index_summary(F, a, k);
    const auto s2 = general_index_summary(F, std::vector<IndexTail>(l, {a, k}));
    ASSERT_EQ(s1.perTheta.size(), s2.perTheta.size());
    for (std::size_t t = 0; t < s1.perTheta.size(); ++t) {
      EXPECT_EQ(s1.perTheta[t].alpha, s2.perTheta[t].alpha);
      EXPECT_EQ(s1.perTheta[t].J, s2.perTheta[t].J);
      EXPECT_EQ(s1.perTheta[t].p, s2.perTheta[t].p);
      EXPECT_EQ(s1.perTheta[t].k, s2.perTheta[t].k);
    }
    EXPECT_EQ(s1.alphaStar, s2.alphaStar);
    EXPECT_EQ(s1.kStar, s2.kStar);
    EXPECT_EQ(s1.thetaStar, s2.thetaStar);
    // (k+1) p* - 1 = k*
    EXPECT_NEAR((k + 1.0) * s1.pStar - 1.0, s1.kStar, 1e-12 * (1 + s1.kStar));
  }
}

TEST(ShiftCondition, Examples) {
  const auto a = iid_index_summary(
      Polynomial::make(3, {mono({1, 1, 0}), mono({0, 1, 1})}), 1, 0);
  const auto v = shift_condition(a);
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->r, 1);
  const auto single = iid_index_summary(Polynomial::make(2, {mono({1, 1})}), 1, 0);
  EXPECT_FALSE(shift_condition(single).has_value());
  const auto b = iid_index_summary(
      Polynomial::make(3, {mono({1, 0, 1}), mono({1, 1, 0})}), 1, 0);
  EXPECT_FALSE(shift_condition(b).has_value());
}

TEST(ScaleCondition, Examples) {
  const auto a = iid_index_summary(Polynomial::linear(2), 1, 0);
  const auto v = scale_condition(a);
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->r, (Rational{2, 1}));
  const auto b = iid_index_summary(
      Polynomial::make(3, {mono({1, 1, 0}), mono({1, 0, 1})}), 1, 0);
  EXPECT_FALSE(scale_condition(b).has_value());
  // identical J-sets from distinct terms
  const auto c = general_index_summary(
      Polynomial::make(2, {mono({1, 0}), mono({1, 1})}),
      std::vector<IndexTail>{{1, 1}, {1.8, 0}});
  ASSERT_EQ(c.mStar, 2);
  const auto w = scale_condition(c);
  ASSERT_TRUE(w.has_value());
  EXPECT_EQ(w->r, (Rational{1, 1}));
}

TEST(Gamma, EllTwo) {
  const auto g = gamma_decomposition(2, 16);
  EXPECT_EQ(g.gamma1, (std::vector<std::uint64_t>{1, 2, 4, 8, 16}));
  EXPECT_DOUBLE_EQ(g.rho, 0.5);
  EXPECT_EQ(g.factor(12), (std::pair<std::uint64_t, std::uint64_t>{3, 4}));
  for (std::uint64_t n = 1; n <= 16; ++n) EXPECT_EQ(g.factor(n).first % 2, 1u);
}

TEST(Gamma, EllThree) {
  const auto g = gamma_decomposition(3, 12);
  EXPECT_EQ(g.gamma1, (std::vector<std::uint64_t>{1, 2, 3, 4, 6, 8, 9, 12}));
  EXPECT_NEAR(g.rho, 1.0 / 3.0, 1e-15);
}

TEST(Gamma, DensityAndBijection) {
  const auto g = gamma_decomposition(5, 1'000'000);
  std::uint64_t z0 = 0;
  for (std::uint64_t n = 1; n <= 1'000'000; ++n) {
    const auto [i, s] = g.factor(n);
    ASSERT_EQ(i * s, n);
    ASSERT_TRUE(g.coprime(i));
    ASSERT_GE(g.position(s), 1u);
    z0 += (s == 1);
  }
  EXPECT_LT(std::abs(double(z0) / 1e6 - g.rho) / g.rho, 0.005);
}

TEST(Coloring, SmallGraph) {
  const auto c = conflict_coloring(2, 6);
  EXPECT_LE(c.colorCount, 5);
  EXPECT_NE(c.assignment[1], c.assignment[2]);
  EXPECT_NE(c.assignment[2], c.assignment[4]);
  EXPECT_NE(c.assignment[3], c.assignment[6]);
  EXPECT_TRUE(verify_coloring(c));
}

TEST(Coloring, EllOne) {
  const auto c = conflict_coloring(1, 100);
  EXPECT_EQ(c.colorCount, 1);
  EXPECT_TRUE(verify_coloring(c));
}

TEST(Coloring, EllFourLarge) {
  const auto c = conflict_coloring(4, 100'000);
  EXPECT_LE(c.colorCount, 17);
  EXPECT_TRUE(verify_coloring(c));
}

TEST(Coloring, VerifierCatchesConflict) {
  auto c = conflict_coloring(2, 10);
  c.assignment[2] = c.assignment[1];
  EXPECT_FALSE(verify_coloring(c));
}

TEST(Equivalence, LinearPair) {
  const auto g = gamma_decomposition(2, 64);
  const auto s = iid_index_summary(Polynomial::linear(2), 1, 0);
  const auto p = equivalence_classes(g, s, 3);
  using M = ClassMember;
  ASSERT_EQ(p.classes.size(), 4u);
  EXPECT_EQ(p.classes[0], (std::vector<M>{{1, 1, 0}}));
  EXPECT_EQ(p.classes[1], (std::vector<M>{{2, 2, 0}, {1, 1, 1}}));
  EXPECT_EQ(p.classes[2], (std::vector<M>{{3, 4, 0}, {2, 2, 1}}));
  EXPECT_EQ(p.classes[3], (std::vector<M>{{3, 4, 1}}));
  EXPECT_FALSE(p.allSingletons);
}

TEST(Equivalence, ProductIsSingletons) {
  const auto g = gamma_decomposition(2, 64);
  const auto s = iid_index_summary(Polynomial::make(2, {mono({1, 1})}), 1, 0);
  EXPECT_TRUE(equivalence_classes(g, s, 5).allSingletons);
}

TEST(Equivalence, ScaleConditionImpliesSingletons) {
  std::mt19937_64 g(11);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t l = 2 + rep % 4;
    const auto F = random_polynomial(g, l, 4, 2);
    const auto s = iid_index_summary(F, 1.0, 0.0);
    const auto d = gamma_decomposition(static_cast<int>(l), 4096);
    const auto p = equivalence_classes(d, s, std::min<std::size_t>(10, d.gamma1.size()));
    if (!scale_condition(s)) EXPECT_TRUE(p.allSingletons);
  }
}
