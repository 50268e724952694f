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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nonconv/law.hpp"
#include "nonconv/numeric.hpp"
#include "nonconv/polynomial.hpp"

namespace nonconv {

/// (alpha_j, k_j) of one input variable.
struct IndexTail {
  double alpha = 1.0;
  double k = 0.0;
};

struct ThetaIndex {
  double alpha = 0.0;     // alpha(theta)
  std::vector<int> J;     // 1-based, sorted
  int p = 0;              // |J|
  double k = 0.0;         // k(theta)
  double sigma = 0.0;     // max exponent (iid mode); NaN otherwise
};

struct IndexSummary {
  std::vector<ThetaIndex> perTheta;        // aligned with F.terms
  double alphaStar = 0.0;
  double kStar = 0.0;
  std::vector<std::size_t> thetaStar;      // indices into F.terms
  double sigmaStar = std::numeric_limits<double>::quiet_NaN();  // iid only
  int pStar = 0;
  int mStar = 0;
  bool iid = false;
  bool pStarConsistent = true;             // (k+1) p* - 1 == k*, iid only

  bool in_theta_star(std::size_t t) const {
    return std::find(thetaStar.begin(), thetaStar.end(), t) != thetaStar.end();
  }
};

namespace detail {

/// Order used to fold factors: ascending index, ties by descending k.
inline bool fold_before(double a1, double k1, double a2, double k2) noexcept {
  if (a1 != a2) return a1 < a2;
  return k1 > k2;
}

/// k of a product of factors with tied index, in fold order:
/// ((k1 + k2) + 1) + k3 + 1 ...
inline double fold_log_power(const std::vector<double>& ks) {
  double acc = ks.front();
  for (std::size_t i = 1; i < ks.size(); ++i) acc = acc + ks[i] + 1.0;
  return acc;
}

inline void finish_summary(IndexSummary& s) {
  s.alphaStar = std::numeric_limits<double>::infinity();
  for (const auto& t : s.perTheta) s.alphaStar = std::min(s.alphaStar, t.alpha);
  s.kStar = -std::numeric_limits<double>::infinity();
  for (const auto& t : s.perTheta)
    if (index_equal(t.alpha, s.alphaStar)) s.kStar = std::max(s.kStar, t.k);
  s.thetaStar.clear();
  for (std::size_t i = 0; i < s.perTheta.size(); ++i) {
    const auto& t = s.perTheta[i];
    if (index_equal(t.alpha, s.alphaStar) && index_equal(t.k, s.kStar))
      s.thetaStar.push_back(i);
  }
  s.mStar = static_cast<int>(s.thetaStar.size());
  s.pStar = s.perTheta[s.thetaStar.front()].p;
}

}  // namespace detail

/// Index summary for independent variables with individual tails.
inline IndexSummary general_index_summary(const Polynomial& F,
                                          const std::vector<IndexTail>& tails) {
  F.validate();
  if (tails.size() != F.arity)
    throw InvalidArgument("general_index_summary: tails length != arity");
  IndexSummary s;
  for (const auto& m : F.terms) {
    ThetaIndex t;
    t.sigma = std::numeric_limits<double>::quiet_NaN();
    t.alpha = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < F.arity; ++j)
      if (m.exponents[j] > 0.0)
        t.alpha = std::min(t.alpha, tails[j].alpha / m.exponents[j]);
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < F.arity; ++j)
      if (m.exponents[j] > 0.0 &&
          index_equal(tails[j].alpha / m.exponents[j], t.alpha)) {
        t.J.push_back(static_cast<int>(j + 1));
        members.push_back(j);
      }
    std::stable_sort(members.begin(), members.end(),
                     [&](std::size_t a, std::size_t b) {
                       return detail::fold_before(
                           tails[a].alpha / m.exponents[a], tails[a].k,
                           tails[b].alpha / m.exponents[b], tails[b].k);
                     });
    std::vector<double> ks;
    for (auto j : members) ks.push_back(tails[j].k);
    t.p = static_cast<int>(t.J.size());
    t.k = detail::fold_log_power(ks);
    s.perTheta.push_back(std::move(t));
  }
  detail::finish_summary(s);
  return s;
}

inline IndexSummary general_index_summary(const Polynomial& F,
                                          const std::vector<TailSpec>& tails) {
  std::vector<IndexTail> t;
  for (const auto& x : tails) t.push_back({x.alpha, x.k});
  return general_index_summary(F, t);
}

/// Index summary when all variables share (alpha, k).
inline IndexSummary iid_index_summary(const Polynomial& F, double alpha,
                                      double k) {
  if (!(alpha > 0.0 && alpha < 2.0))
    throw InvalidArgument("iid_index_summary: alpha must lie in (0,2)");
  if (!(k >= 0.0)) throw InvalidArgument("iid_index_summary: k must be >= 0");
  F.validate();
  IndexSummary s;
  s.iid = true;
  for (const auto& m : F.terms) {
    ThetaIndex t;
    t.sigma = *std::max_element(m.exponents.begin(), m.exponents.end());
    t.alpha = alpha / t.sigma;
    for (std::size_t j = 0; j < F.arity; ++j)
      if (m.exponents[j] > 0.0 && index_equal(alpha / m.exponents[j], t.alpha))
        t.J.push_back(static_cast<int>(j + 1));
    t.p = static_cast<int>(t.J.size());
    t.k = detail::fold_log_power(std::vector<double>(t.J.size(), k));
    s.perTheta.push_back(std::move(t));
  }
  detail::finish_summary(s);
  s.sigmaStar = s.perTheta[s.thetaStar.front()].sigma;
  s.pStarConsistent = true;
  for (auto i : s.thetaStar) {
    const auto& t = s.perTheta[i];
    // p* = (k*+1)/(k+1).
    if (t.p != s.pStar || t.sigma != s.sigmaStar ||
        std::abs((s.kStar + 1.0) / (k + 1.0) - t.p) > 1e-9 * t.p)
      s.pStarConsistent = false;
  }
  return s;
}

/// Positive rational num/den in lowest terms.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;
  double value() const noexcept { return double(num) / double(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

struct ShiftViolation {
  std::size_t theta1 = 0, theta2 = 0;  // indices into F.terms
  long r = 0;                          // J(theta2) = J(theta1) + r
};

struct ScaleViolation {
  std::size_t theta1 = 0, theta2 = 0;
  Rational r;                          // J(theta2) = r J(theta1)
};

/// First pair of Theta* members whose J-sets differ by an integer shift;
/// empty when the condition holds.
inline std::optional<ShiftViolation> shift_condition(const IndexSummary& s) {
  for (std::size_t a = 0; a < s.thetaStar.size(); ++a)
    for (std::size_t b = a + 1; b < s.thetaStar.size(); ++b) {
      const auto& J1 = s.perTheta[s.thetaStar[a]].J;
      const auto& J2 = s.perTheta[s.thetaStar[b]].J;
      if (J1.size() != J2.size()) continue;
      const long r = J2[0] - J1[0];
      bool same = true;
      for (std::size_t i = 0; i < J1.size() && same; ++i)
        same = (J2[i] - J1[i] == r);
      if (same) {
        // report with a nonnegative shift
        if (r >= 0) return ShiftViolation{s.thetaStar[a], s.thetaStar[b], r};
        return ShiftViolation{s.thetaStar[b], s.thetaStar[a], -r};
      }
    }
  return std::nullopt;
}

/// First pair of Theta* members with J(theta2) = r J(theta1), r rational.
inline std::optional<ScaleViolation> scale_condition(const IndexSummary& s) {
  for (std::size_t a = 0; a < s.thetaStar.size(); ++a)
    for (std::size_t b = a + 1; b < s.thetaStar.size(); ++b) {
      const auto& J1 = s.perTheta[s.thetaStar[a]].J;
      const auto& J2 = s.perTheta[s.thetaStar[b]].J;
      if (J1.size() != J2.size()) continue;
      const std::int64_t n = J2[0], d = J1[0];
      bool same = true;
      for (std::size_t i = 0; i < J1.size() && same; ++i)
        same = (std::int64_t{J2[i]} * d == std::int64_t{J1[i]} * n);
      if (same) {
        const auto g = std::gcd(n, d);
        if (n >= d)
          return ScaleViolation{s.thetaStar[a], s.thetaStar[b], {n / g, d / g}};
        return ScaleViolation{s.thetaStar[b], s.thetaStar[a], {d / g, n / g}};
      }
    }
  return std::nullopt;
}

/// Primes up to n.
inline std::vector<std::uint64_t> primes_up_to(std::uint64_t n) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t c = 2; c <= n; ++c) {
    bool prime = true;
    for (auto p : out) {
      if (p * p > c) break;
      if (c % p == 0) {
        prime = false;
        break;
      }
    }
    if (prime) out.push_back(c);
  }
  return out;
}

/// n = i * n_q with n_q built from primes <= l and i coprime to them.
struct GammaDecomposition {
  int ell = 1;
  std::vector<std::uint64_t> primes;
  std::vector<std::uint64_t> gamma1;   // ascending, up to bound
  double rho = 1.0;
  std::uint64_t bound = 0;
  std::vector<std::uint64_t> zPart;    // zPart[n] = i, n <= bound
  std::vector<std::uint64_t> smoothPart;  // smoothPart[n] = n_q

  /// Factorization of any n >= 1, whether or not it is within bound.
  std::pair<std::uint64_t, std::uint64_t> factor(std::uint64_t n) const {
    if (n >= 1 && n <= bound) return {zPart[n], smoothPart[n]};
    std::uint64_t i = n, s = 1;
    for (auto p : primes)
      while (i % p == 0) {
        i /= p;
        s *= p;
      }
    return {i, s};
  }

  /// 1-based position of a smooth number in gamma1, 0 if absent.
  std::size_t position(std::uint64_t nq) const {
    auto it = std::lower_bound(gamma1.begin(), gamma1.end(), nq);
    if (it == gamma1.end() || *it != nq) return 0;
    return static_cast<std::size_t>(it - gamma1.begin()) + 1;
  }

  bool coprime(std::uint64_t i) const {
    for (auto p : primes)
      if (i % p == 0) return false;
    return true;
  }
};

inline GammaDecomposition gamma_decomposition(int ell, std::uint64_t bound) {
  if (ell < 1) throw InvalidArgument("gamma_decomposition: ell must be >= 1");
  if (bound < 1) throw InvalidArgument("gamma_decomposition: bound must be >= 1");
  GammaDecomposition g;
  g.ell = ell;
  g.bound = bound;
  g.primes = primes_up_to(static_cast<std::uint64_t>(ell));
  for (auto p : g.primes) g.rho *= 1.0 - 1.0 / static_cast<double>(p);
  g.gamma1 = {1};
  for (auto p : g.primes) {
    const std::size_t n0 = g.gamma1.size();
    for (std::size_t a = 0; a < n0; ++a) {
      std::uint64_t v = g.gamma1[a];
      while (v <= bound / p) {
        v *= p;
        g.gamma1.push_back(v);
      }
    }
  }
  std::sort(g.gamma1.begin(), g.gamma1.end());
  g.zPart.assign(bound + 1, 0);
  g.smoothPart.assign(bound + 1, 0);
  for (std::uint64_t n = 1; n <= bound; ++n) {
    std::uint64_t i = n, s = 1;
    for (auto p : g.primes)
      while (i % p == 0) {
        i /= p;
        s *= p;
      }
    g.zPart[n] = i;
    g.smoothPart[n] = s;
  }
  return g;
}

struct Coloring {
  int ell = 1;
  std::vector<int> assignment;  // assignment[r], r = 1..N; index 0 unused
  int colorCount = 0;

  std::uint64_t size() const noexcept { return assignment.size() - 1; }
};

/// Neighbours s of r in [1, N]: i s = j r for some 1 <= i, j <= l, s != r.
inline std::vector<std::uint64_t> conflict_neighbours(int ell, std::uint64_t N,
                                                      std::uint64_t r) {
  std::vector<std::uint64_t> out;
  for (int i = 1; i <= ell; ++i)
    for (int j = 1; j <= ell; ++j) {
      if (i == j) continue;
      const std::uint64_t jr = static_cast<std::uint64_t>(j) * r;
      if (jr % static_cast<std::uint64_t>(i) != 0) continue;
      const std::uint64_t s = jr / static_cast<std::uint64_t>(i);
      if (s >= 1 && s <= N && s != r) out.push_back(s);
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// True iff {r, 2r, ..., l r} are pairwise disjoint within every color.
inline bool verify_coloring(const Coloring& c) {
  std::vector<std::tuple<int, std::uint64_t, std::uint64_t>> keys;
  const std::uint64_t N = c.size();
  keys.reserve(N * static_cast<std::uint64_t>(c.ell));
  for (std::uint64_t r = 1; r <= N; ++r) {
    if (c.assignment[r] < 0 || c.assignment[r] >= c.colorCount) return false;
    for (int i = 1; i <= c.ell; ++i)
      keys.emplace_back(c.assignment[r], r * static_cast<std::uint64_t>(i), r);
  }
  std::sort(keys.begin(), keys.end());
  for (std::size_t a = 1; a < keys.size(); ++a)
    if (std::get<0>(keys[a]) == std::get<0>(keys[a - 1]) &&
        std::get<1>(keys[a]) == std::get<1>(keys[a - 1]) &&
        std::get<2>(keys[a]) != std::get<2>(keys[a - 1]))
      return false;
  return true;
}

/// Greedy coloring of the conflict graph on {1..N} in natural order.
inline Coloring conflict_coloring(int ell, std::uint64_t N) {
  if (ell < 1) throw InvalidArgument("conflict_coloring: ell must be >= 1");
  if (N < 1) throw InvalidArgument("conflict_coloring: N must be >= 1");
  Coloring c;
  c.ell = ell;
  c.assignment.assign(N + 1, -1);
  const int limit = ell * ell + 1;
  std::vector<char> used(static_cast<std::size_t>(limit) + 1);
  for (std::uint64_t r = 1; r <= N; ++r) {
    std::fill(used.begin(), used.end(), 0);
    for (auto s : conflict_neighbours(ell, N, r))
      if (s < r) used[static_cast<std::size_t>(c.assignment[s])] = 1;
    int col = 0;
    while (used[static_cast<std::size_t>(col)]) ++col;
    if (col >= limit)
      throw std::logic_error("conflict_coloring: more than l^2+1 colors needed");
    c.assignment[r] = col;
    c.colorCount = std::max(c.colorCount, col + 1);
  }
  if (!verify_coloring(c))
    throw std::logic_error("conflict_coloring: post hoc verification failed");
  return c;
}

struct ClassMember {
  std::size_t j = 0;        // 1-based position in gamma1
  std::uint64_t n = 0;      // n_j
  std::size_t theta = 0;    // index into F.terms
  friend bool operator==(const ClassMember&, const ClassMember&) = default;
};

struct EquivalencePartition {
  std::vector<std::vector<ClassMember>> classes;
  bool allSingletons = true;
};

/// Classes of (n_j, theta), j <= q, theta in Theta*, keyed by n_j J(theta).
inline EquivalencePartition equivalence_classes(const GammaDecomposition& d,
                                                const IndexSummary& s,
                                                std::size_t q) {
  if (q > d.gamma1.size())
    throw InvalidArgument("equivalence_classes: q exceeds |gamma1|");
  std::map<std::vector<std::uint64_t>, std::vector<ClassMember>> byKey;
  for (auto th : s.thetaStar)
    for (std::size_t j = 1; j <= q; ++j) {
      const std::uint64_t n = d.gamma1[j - 1];
      std::vector<std::uint64_t> key;
      for (int x : s.perTheta[th].J) key.push_back(n * static_cast<std::uint64_t>(x));
      byKey[key].push_back({j, n, th});
    }
  EquivalencePartition out;
  for (auto& [key, members] : byKey) {
    if (members.size() > 1) out.allSingletons = false;
    out.classes.push_back(std::move(members));
  }
  return out;
}

}  // namespace nonconv
