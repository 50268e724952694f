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

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include <boost/math/constants/constants.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "nonconv/indexcalc.hpp"
#include "nonconv/law.hpp"
#include "nonconv/numeric.hpp"
#include "nonconv/polynomial.hpp"
#include "nonconv/rng.hpp"

namespace nonconv {

/// Stream id for variable j under a given purpose.
constexpr std::uint32_t variable_stream(Stream purpose, std::size_t j) noexcept {
  return (static_cast<std::uint32_t>(purpose) << 8) |
         static_cast<std::uint32_t>(j & 0xffu);
}

/// Index-addressable draws from a TailedDistribution.
class HeavyTailSampler {
public:
  HeavyTailSampler(TailedDistribution dist, std::uint64_t seed,
                   std::uint32_t stream = static_cast<std::uint32_t>(Stream::sequence))
      : dist_(std::move(dist)), seed_(seed), rng_(seed, stream) {}

  static constexpr const char* scheme = Philox4x32::name;

  const TailedDistribution& dist() const noexcept { return dist_; }
  double threshold() const noexcept { return dist_.threshold(); }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t stream() const noexcept { return rng_.stream(); }

  double draw(std::uint64_t index) const { return dist_.quantile(rng_.uniform(index)); }

  HeavyTailSampler with_seed(std::uint64_t seed) const {
    return HeavyTailSampler(dist_, seed, rng_.stream());
  }
  HeavyTailSampler with_stream(std::uint32_t stream) const {
    return HeavyTailSampler(dist_, seed_, stream);
  }

private:
  TailedDistribution dist_;
  std::uint64_t seed_;
  CounterRng rng_;
};

inline HeavyTailSampler build_sampler(const TailSpec& tail, BodyConfig body,
                                      std::uint64_t seed) {
  return HeavyTailSampler(TailedDistribution(tail, body), seed);
}

inline double draw(const HeavyTailSampler& s, std::uint64_t index) {
  return s.draw(index);
}

/// b^2 z / (b^2 + z^2), safe for huge |z|.
inline double truncation(double z, double b) noexcept {
  const double a = std::abs(z);
  if (a <= b) return b * b * z / (b * b + z * z);
  const double r = b / z;
  return b * r / (1.0 + r * r);
}

/// E[h(X)] by quadrature over the law's closed-form density. The tail
/// pieces are integrated in y = ln|x| with a break at ybreak.
template <class H>
double expect(const TailedDistribution& d, H h, double ybreak) {
  const double x0 = d.threshold(), y0 = std::log(x0);
  const auto& t = d.tail();
  const bool uniform = d.body().kind == BodyKind::uniform;
  auto bd = [uniform](double s) { return uniform ? 1.0 : 2.0 * (1.0 - s); };
  auto tail_weight = [&](double y) {
    return std::exp(-t.alpha * y + (t.k - 1.0) * std::log(y)) *
           (t.alpha * y - t.k);
  };
  auto piece = [&](double sign, double bodyMass, double c) {
    double v = 0.0;
    if (bodyMass > 0.0)
      v += bodyMass * quad::finite([&](double s) { return h(sign * x0 * s) * bd(s); },
                                   0.0, 1.0, 1e-12);
    if (c > 0.0) {
      auto f = [&](double y) { return h(sign * std::exp(y)) * tail_weight(y); };
      const double yb = std::max(y0, ybreak);
      double tv = quad::finite(f, y0, yb, 1e-12);
      tv += quad::half_line(f, yb, 1e-12);
      v += c * tv;
    }
    return v;
  };
  return piece(1.0, d.body_mass_plus(), t.cPlus) +
         piece(-1.0, d.body_mass_minus(), t.cMinus);
}

/// E[b^2 Z/(b^2+Z^2)] for Z = X with X ~ d, by quadrature.
inline double truncated_mean(const TailedDistribution& d, double b) {
  if (!(b > 0.0)) throw InvalidArgument("truncated_mean: b must be > 0");
  const auto& t = d.tail();
  if (t.cPlus == t.cMinus && d.body_mass_plus() == d.body_mass_minus())
    return 0.0;
  return expect(d, [b](double x) { return truncation(x, b); }, std::log(b));
}

/// Same expectation for Z = X^sigma.
inline double truncated_mean_power(const TailedDistribution& d, double sigma,
                                   double b) {
  if (!(b > 0.0)) throw InvalidArgument("truncated_mean: b must be > 0");
  return expect(
      d,
      [b, sigma](double x) {
        const double v = x < 0.0 ? std::pow(-x, sigma) *
                                       (std::fmod(sigma, 2.0) == 0.0 ? 1.0 : -1.0)
                                 : std::pow(x, sigma);
        return truncation(v, b);
      },
      std::log(b) / sigma);
}

/// Monte Carlo E[b^2 Z/(b^2+Z^2)] for Z = g(X_1..X_l), g a monomial (its
/// coefficient ignored), independent X_j ~ dists[j].
inline Estimate truncated_mean_mc(const std::vector<TailedDistribution>& dists,
                                  const Monomial& g, double b,
                                  std::uint64_t draws, std::uint64_t seed) {
  if (!(b > 0.0)) throw InvalidArgument("truncated_mean: b must be > 0");
  std::vector<CounterRng> rngs;
  for (std::size_t j = 0; j < dists.size(); ++j)
    rngs.emplace_back(seed, variable_stream(Stream::centering, j));
  CompensatedSum s, s2;
  std::vector<double> x(dists.size(), 0.0);
  for (std::uint64_t i = 0; i < draws; ++i) {
    for (std::size_t j = 0; j < dists.size(); ++j)
      if (g.exponents[j] > 0.0) x[j] = dists[j].quantile(rngs[j].uniform(i));
    const double v = truncation(g.evaluate(x), b);
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(draws);
  const double m = s.value() / n;
  return {m, std::sqrt(std::max(0.0, s2.value() / n - m * m) / n)};
}

struct NormalizationPair {
  double N = 0.0;
  double bN = 1.0;
  std::vector<double> aN;        // per term of F
  std::vector<double> aNStderr;  // zero on the quadrature route
};

inline double normalizing_scale(double N, double alphaStar, double kStar) {
  return std::pow(N, 1.0 / alphaStar) *
         std::pow(std::log(N) / alphaStar, kStar / alphaStar);
}

/// b_N and a_N(theta) for every term. Terms in a single variable use
/// quadrature; other monomials use Monte Carlo with `draws` draws.
inline NormalizationPair normalization(const IndexSummary& s, double N,
                                       const std::vector<TailedDistribution>& dists,
                                       const Polynomial& F, std::uint64_t seed,
                                       std::uint64_t draws = 10'000'000) {
  if (!(N >= 2.0)) throw InvalidArgument("normalization: N must be >= 2");
  if (dists.size() != F.arity)
    throw InvalidArgument("normalization: dists length != arity");
  NormalizationPair out;
  out.N = N;
  out.bN = normalizing_scale(N, s.alphaStar, s.kStar);
  for (std::size_t t = 0; t < F.terms.size(); ++t) {
    const auto& m = F.terms[t];
    const auto sup = m.support();
    if (sup.size() == 1) {
      const auto& d = dists[static_cast<std::size_t>(sup[0] - 1)];
      const double sig = m.exponents[static_cast<std::size_t>(sup[0] - 1)];
      out.aN.push_back(sig == 1.0 ? truncated_mean(d, out.bN)
                                  : truncated_mean_power(d, sig, out.bN));
      out.aNStderr.push_back(0.0);
    } else {
      const auto e = truncated_mean_mc(dists, m, out.bN, draws,
                                       derive_seed(seed, t));
      out.aN.push_back(e.value);
      out.aNStderr.push_back(e.stderr_);
    }
  }
  return out;
}

/// S1 parameters of an alpha-stable law.
struct StableParameters {
  double alpha = 1.0;
  double sigma = 1.0;
  double beta = 0.0;
  double mu = 0.0;
};

/// Parameters of the infinitely divisible law with Levy density
/// alpha c+- |x|^(-1-alpha), compensator x/(1+x^2) and no extra drift.
inline StableParameters stable_parameters(double alpha, double cPlus,
                                          double cMinus) {
  if (!(alpha > 0.0 && alpha < 2.0))
    throw InvalidArgument("stable_parameters: alpha must lie in (0,2)");
  if (!(cPlus >= 0.0 && cMinus >= 0.0 && cPlus + cMinus > 0.0))
    throw InvalidArgument("stable_parameters: need c+, c- >= 0 with c+ + c- > 0");
  const double pi = std::numbers::pi;
  StableParameters p;
  p.alpha = alpha;
  p.beta = (cPlus - cMinus) / (cPlus + cMinus);
  if (alpha == 1.0) {
    p.sigma = 0.5 * pi * (cPlus + cMinus);
    p.mu = (cPlus - cMinus) * (1.0 - std::numbers::egamma);
  } else {
    const double cs = std::cos(0.5 * pi * alpha);
    p.sigma = std::pow(boost::math::tgamma(1.0 - alpha) * cs * (cPlus + cMinus),
                       1.0 / alpha);
    p.mu = -alpha * (cPlus - cMinus) * pi / (2.0 * cs);
  }
  return p;
}

/// log E[exp(i xi X)] in the S1 parameterization.
inline std::complex<double> stable_log_cf(const StableParameters& p, double xi) {
  if (xi == 0.0) return {0.0, 0.0};
  const double pi = std::numbers::pi;
  const double a = std::abs(xi), sg = xi > 0 ? 1.0 : -1.0;
  if (p.alpha == 1.0)
    return {-p.sigma * a,
            -p.sigma * a * p.beta * (2.0 / pi) * sg * std::log(a) + p.mu * xi};
  const double sa = std::pow(p.sigma * a, p.alpha);
  return {-sa, sa * p.beta * sg * std::tan(0.5 * pi * p.alpha) + p.mu * xi};
}

/// Chambers-Mallows-Stuck generator for the law of stable_parameters().
class StableSampler {
public:
  StableSampler(double alpha, double cPlus, double cMinus, std::uint64_t seed)
      : p_(stable_parameters(alpha, cPlus, cMinus)),
        cPlus_(cPlus),
        cMinus_(cMinus),
        rng_(seed, Stream::reference) {
    const double pi = std::numbers::pi;
    if (alpha != 1.0) {
      const double t = p_.beta * std::tan(0.5 * pi * alpha);
      B_ = std::atan(t) / alpha;
      S_ = std::pow(1.0 + t * t, 1.0 / (2.0 * alpha));
    }
  }

  const StableParameters& parameters() const noexcept { return p_; }
  double c_plus() const noexcept { return cPlus_; }
  double c_minus() const noexcept { return cMinus_; }

  double draw(std::uint64_t index) const {
    const double pi = std::numbers::pi;
    const auto u = rng_.uniform_pair(index);
    const double V = pi * (u[0].value() - 0.5);
    const double W = -std::log(u[1].value());
    const double a = p_.alpha, b = p_.beta;
    if (a == 1.0) {
      const double h = 0.5 * pi + b * V;
      const double X =
          (2.0 / pi) * (h * std::tan(V) - b * std::log(0.5 * pi * W * std::cos(V) / h));
      return p_.sigma * X + (2.0 / pi) * b * p_.sigma * std::log(p_.sigma) + p_.mu;
    }
    const double X = S_ * std::sin(a * (V + B_)) / std::pow(std::cos(V), 1.0 / a) *
                     std::pow(std::cos(V - a * (V + B_)) / W, (1.0 - a) / a);
    return p_.sigma * X + p_.mu;
  }

private:
  StableParameters p_;
  double cPlus_, cMinus_;
  CounterRng rng_;
  double B_ = 0.0, S_ = 1.0;
};

inline StableSampler stable_reference_sampler(double alpha, double cPlus,
                                              double cMinus, std::uint64_t seed) {
  return StableSampler(alpha, cPlus, cMinus, seed);
}

}  // namespace nonconv
