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
#include <functional>
#include <map>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "nonconv/indexcalc.hpp"
#include "nonconv/law.hpp"
#include "nonconv/polynomial.hpp"
#include "nonconv/sampler.hpp"

namespace nonconv {

/// Tail of X^sigma. Non-integer sigma only for one-sided (c- = 0) inputs.
inline TailSpec power_tail(const TailSpec& spec, double sigma) {
  spec.validate();
  if (!(sigma > 0.0)) throw InvalidArgument("power_tail: sigma must be > 0");
  const bool integer = sigma == std::floor(sigma);
  if (!integer && spec.cMinus != 0.0)
    throw InvalidArgument("power_tail: non-integer power of a two-sided variable");
  const double s = std::pow(sigma, -spec.k);
  TailSpec out{spec.alpha / sigma, spec.k, s * spec.cPlus, s * spec.cMinus};
  if (integer && std::fmod(sigma, 2.0) == 0.0) {
    out.cPlus = s * (spec.cPlus + spec.cMinus);
    out.cMinus = 0.0;
  }
  return out;
}

/// A tail class together with the signed fractional moments of its law.
struct TailFactor {
  TailSpec tail;
  std::function<SignedMoments(double)> moments;

  static TailFactor of(const TailedDistribution& d) {
    return {d.tail(), [d](double p) { return d.signed_moments(p); }};
  }

  /// Constant h (no tail of its own; only usable as a light factor).
  static std::function<SignedMoments(double)> constant_moments(double h) {
    return [h](double p) {
      const double v = std::pow(std::abs(h), p);
      return h > 0 ? SignedMoments{v, 0.0} : SignedMoments{0.0, v};
    };
  }
};

inline TailFactor power(const TailFactor& f, double sigma) {
  if (sigma == 1.0) return f;
  const bool even = sigma == std::floor(sigma) && std::fmod(sigma, 2.0) == 0.0;
  auto base = f.moments;
  return {power_tail(f.tail, sigma), [base, sigma, even](double p) {
            const auto m = base(sigma * p);
            return even ? SignedMoments{m.plus + m.minus, 0.0} : m;
          }};
}

/// Tail class of a product of independent factors.
inline TailSpec product_tail(const TailFactor& a0, const TailFactor& b0) {
  a0.tail.validate();
  b0.tail.validate();
  const bool tie = index_equal(a0.tail.alpha, b0.tail.alpha);
  const bool swap = !tie && b0.tail.alpha < a0.tail.alpha;
  const TailFactor& a = swap ? b0 : a0;
  const TailFactor& b = swap ? a0 : b0;
  const auto& ta = a.tail;
  const auto& tb = b.tail;
  if (tie) {
    const double al = std::min(ta.alpha, tb.alpha);
    const double B = boost::math::beta(ta.k + 1.0, tb.k + 1.0);
    const double cp = ta.cPlus * tb.cPlus + ta.cMinus * tb.cMinus;
    const double cm = ta.cPlus * tb.cMinus + ta.cMinus * tb.cPlus;
    return {al, ta.k + tb.k + 1.0, al * cp * B, al * cm * B};
  }
  const auto m = b.moments(ta.alpha);
  return {ta.alpha, ta.k, ta.cPlus * m.plus + ta.cMinus * m.minus,
          ta.cPlus * m.minus + ta.cMinus * m.plus};
}

inline TailSpec product_tail(const TailedDistribution& a,
                             const TailedDistribution& b) {
  return product_tail(TailFactor::of(a), TailFactor::of(b));
}

/// Product factor: tail from product_tail, moments by sign bookkeeping.
inline TailFactor product(const TailFactor& a, const TailFactor& b) {
  auto ma = a.moments, mb = b.moments;
  return {product_tail(a, b), [ma, mb](double p) {
            const auto x = ma(p), y = mb(p);
            return SignedMoments{x.plus * y.plus + x.minus * y.minus,
                                 x.plus * y.minus + x.minus * y.plus};
          }};
}

/// Factors X_j^sigma_j of a monomial, in canonical fold order.
inline std::vector<TailFactor> monomial_factors(
    const std::vector<TailedDistribution>& dists, const Monomial& m) {
  if (m.exponents.size() != dists.size())
    throw InvalidArgument("monomial_tail: exponent list length != number of dists");
  std::vector<TailFactor> fs;
  for (std::size_t j = 0; j < dists.size(); ++j)
    if (m.exponents[j] > 0.0)
      fs.push_back(power(TailFactor::of(dists[j]), m.exponents[j]));
  if (fs.empty()) throw InvalidArgument("monomial_tail: no positive exponent");
  std::stable_sort(fs.begin(), fs.end(), [](const TailFactor& a, const TailFactor& b) {
    return detail::fold_before(a.tail.alpha, a.tail.k, b.tail.alpha, b.tail.k);
  });
  return fs;
}

/// Left fold of factors by product().
inline TailFactor fold(const std::vector<TailFactor>& fs) {
  TailFactor acc = fs.front();
  for (std::size_t i = 1; i < fs.size(); ++i) acc = product(acc, fs[i]);
  return acc;
}

/// Tail of prod X_j^sigma_j (coefficient ignored).
inline TailSpec monomial_tail(const std::vector<TailedDistribution>& dists,
                              const Monomial& m) {
  return fold(monomial_factors(dists, m)).tail;
}

struct GroupBreakdown {
  std::vector<int> J;
  std::vector<std::size_t> thetas;  // indices into F.terms
  TailSpec vTail;                   // tail of prod_{j in J} X_j^sigma_j
  SignedMoments w;                  // E[(W+)^a*], E[(W-)^a*]
  SignedMoments wStderr;
  bool monteCarlo = false;
  double cPlus = 0.0, cMinus = 0.0;
};

struct PolynomialTail {
  TailSpec tail;
  std::vector<GroupBreakdown> groups;
  IndexSummary summary;
};

struct PolynomialTailOptions {
  std::uint64_t draws = 10'000'000;
  std::uint64_t seed = 0x706f6c79ull;
};

/// Tail of F(X_1..X_l): Theta* grouped by J-set, each group contributing
/// c_V+- weighted by moments of W = sum h_theta f_theta.
inline PolynomialTail polynomial_tail(const std::vector<TailedDistribution>& dists,
                                      const Polynomial& F,
                                      PolynomialTailOptions opt = {}) {
  if (dists.size() != F.arity)
    throw InvalidArgument("polynomial_tail: arity != number of dists");
  std::vector<IndexTail> it;
  for (const auto& d : dists) {
    d.tail().validate();
    it.push_back({d.tail().alpha, d.tail().k});
  }
  PolynomialTail out;
  out.summary = general_index_summary(F, it);
  const auto& S = out.summary;

  std::vector<std::vector<int>> order;
  std::map<std::vector<int>, std::vector<std::size_t>> byJ;
  for (auto th : S.thetaStar) {
    const auto& J = S.perTheta[th].J;
    if (!byJ.count(J)) order.push_back(J);
    byJ[J].push_back(th);
  }
  const double as = S.alphaStar;
  double cp = 0.0, cm = 0.0;
  for (std::size_t g = 0; g < order.size(); ++g) {
    GroupBreakdown gb;
    gb.J = order[g];
    gb.thetas = byJ[gb.J];
    const auto& lead = F.terms[gb.thetas.front()];
    Monomial V{std::vector<double>(F.arity, 0.0), 1.0};
    for (int j : gb.J) V.exponents[static_cast<std::size_t>(j - 1)] = lead.exponents[static_cast<std::size_t>(j - 1)];
    gb.vTail = monomial_tail(dists, V);

    auto rest = [&](std::size_t th) {
      Monomial f = F.terms[th];
      for (int j : gb.J) f.exponents[static_cast<std::size_t>(j - 1)] = 0.0;
      return f;
    };
    if (gb.thetas.size() == 1) {
      const auto f = rest(gb.thetas.front());
      auto mh = TailFactor::constant_moments(f.coefficient);
      SignedMoments w = mh(as);
      bool anyVar = false;
      for (double s : f.exponents) anyVar = anyVar || s > 0.0;
      if (anyVar) {
        const auto mf = fold(monomial_factors(dists, f)).moments(as);
        w = {w.plus * mf.plus + w.minus * mf.minus,
             w.plus * mf.minus + w.minus * mf.plus};
      }
      gb.w = w;
    } else {
      gb.monteCarlo = true;
      std::vector<Monomial> fs;
      for (auto th : gb.thetas) fs.push_back(rest(th));
      std::vector<CounterRng> rngs;
      for (std::size_t j = 0; j < F.arity; ++j)
        rngs.emplace_back(derive_seed(opt.seed, g), variable_stream(Stream::moments, j));
      std::vector<char> used(F.arity, 0);
      for (const auto& f : fs)
        for (std::size_t j = 0; j < F.arity; ++j) used[j] |= f.exponents[j] > 0.0;
      std::vector<double> x(F.arity, 0.0);
      CompensatedSum sp, sp2, sm, sm2;
      for (std::uint64_t i = 0; i < opt.draws; ++i) {
        for (std::size_t j = 0; j < F.arity; ++j)
          if (used[j]) x[j] = dists[j].quantile(rngs[j].uniform(i));
        double W = 0.0;
        for (const auto& f : fs) W += f.coefficient * f.evaluate(x);
        const double v = std::pow(std::abs(W), as);
        if (W > 0) {
          sp += v;
          sp2 += v * v;
        } else {
          sm += v;
          sm2 += v * v;
        }
      }
      const double n = static_cast<double>(opt.draws);
      auto mean = [n](const CompensatedSum& s) { return s.value() / n; };
      auto se = [n](const CompensatedSum& s, const CompensatedSum& s2) {
        const double m = s.value() / n;
        return std::sqrt(std::max(0.0, s2.value() / n - m * m) / n);
      };
      gb.w = {mean(sp), mean(sm)};
      gb.wStderr = {se(sp, sp2), se(sm, sm2)};
    }
    gb.cPlus = gb.vTail.cPlus * gb.w.plus + gb.vTail.cMinus * gb.w.minus;
    gb.cMinus = gb.vTail.cPlus * gb.w.minus + gb.vTail.cMinus * gb.w.plus;
    cp += gb.cPlus;
    cm += gb.cMinus;
    out.groups.push_back(std::move(gb));
  }
  out.tail = TailSpec{S.alphaStar, S.kStar, cp, cm};
  return out;
}

/// Coefficient of z^-alpha ln ln z in P{X1 X2 > z}.
struct LogLogTail {
  double alpha = 1.0;
  double coefficient = 0.0;
};

inline LogLogTail loglog_product_diagnostic(double c1, double c2, double alpha) {
  if (!(c1 >= 0.0) || !(c2 >= 0.0))
    throw InvalidArgument("loglog_product_diagnostic: constants must be >= 0");
  if (!(alpha > 0.0 && alpha < 2.0))
    throw InvalidArgument("loglog_product_diagnostic: alpha must lie in (0,2)");
  return {alpha, 2.0 * c1 * c2 * alpha};
}

/// Sufficient condition for z^a* (ln z)^-k* P{|g1| > z, |g2| > z} -> 0.
inline bool joint_tail_vanishes(const std::vector<TailedDistribution>& dists,
                                const Monomial& theta1, const Monomial& theta2) {
  if (theta1.exponents == theta2.exponents) return false;
  Monomial a = theta1, b = theta2;
  a.coefficient = b.coefficient = 1.0;
  const auto F = Polynomial::make(dists.size(), {a, b});
  std::vector<IndexTail> it;
  for (const auto& d : dists) it.push_back({d.tail().alpha, d.tail().k});
  const auto s = general_index_summary(F, it);
  if (!s.in_theta_star(0) || !s.in_theta_star(1)) return true;
  return s.perTheta[0].J != s.perTheta[1].J;
}

}  // namespace nonconv
