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
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>

#include "nonconv/error.hpp"
#include "nonconv/numeric.hpp"
#include "nonconv/rng.hpp"

namespace nonconv {

/// Tail class P{+-X > z} ~ c+- z^-alpha (ln z)^k.
struct TailSpec {
  double alpha = 1.0;
  double k = 0.0;
  double cPlus = 0.5;
  double cMinus = 0.5;

  /// Throws InvalidArgument naming the first violated invariant.
  void validate() const {
    auto bad = [](const std::string& m) { throw InvalidArgument("TailSpec: " + m); };
    if (!(alpha > 0.0 && alpha < 2.0)) bad("alpha must lie in (0,2)");
    if (!(k >= 0.0) || !std::isfinite(k)) bad("k must be finite and >= 0");
    if (!(cPlus >= 0.0) || !(cMinus >= 0.0) || !std::isfinite(cPlus) ||
        !std::isfinite(cMinus))
      bad("c_plus and c_minus must be finite and >= 0");
    if (!(cPlus + cMinus > 0.0)) bad("c_plus + c_minus must be > 0");
  }

  bool symmetric() const noexcept { return cPlus == cMinus; }

  friend bool operator==(const TailSpec&, const TailSpec&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const TailSpec& t) {
  return os << "TailSpec{alpha=" << t.alpha << ", k=" << t.k
            << ", c+=" << t.cPlus << ", c-=" << t.cMinus << "}";
}

enum class BodyKind { uniform, triangular };

enum class MomentMethod { quadrature, monte_carlo };

/// Where the mass below the matching threshold goes.
struct BodyConfig {
  BodyKind kind = BodyKind::uniform;
  MomentMethod moments = MomentMethod::quadrature;
  std::uint64_t momentSeed = 0x6d6f6d656e7473ull;
  std::uint64_t momentDraws = 10'000'000;
};

enum class MomentSign { plus, minus, abs };

struct SignedMoments {
  double plus = 0.0;
  double minus = 0.0;
};

/// A concrete law whose tails equal c+- G(|x|), G(x) = x^-alpha (ln x)^k,
/// exactly beyond the threshold x0, with a simple body inside (-x0, x0).
class TailedDistribution {
public:
  explicit TailedDistribution(const TailSpec& tail, BodyConfig body = {})
      : tail_(tail), body_(body) {
    tail_.validate();
    setup();
  }

  /// Symmetric law with G(x) = x^-alpha / ln x. Only for the loglog
  /// product diagnostic; the general calculus rejects negative k.
  static TailedDistribution loglog(double alpha, double c,
                                   BodyConfig body = {}) {
    if (!(alpha > 0.0 && alpha < 2.0))
      throw InvalidArgument("loglog law: alpha must lie in (0,2)");
    if (!(c > 0.0)) throw InvalidArgument("loglog law: c must be > 0");
    return TailedDistribution(TailSpec{alpha, -1.0, c, c}, body, Raw{});
  }

  const TailSpec& tail() const noexcept { return tail_; }
  const BodyConfig& body() const noexcept { return body_; }
  double threshold() const noexcept { return x0_; }
  double tail_mass_plus() const noexcept { return massPlus_; }
  double tail_mass_minus() const noexcept { return massMinus_; }
  double body_mass_plus() const noexcept { return bodyPlus_; }
  double body_mass_minus() const noexcept { return bodyMinus_; }

  /// x^-alpha (ln x)^k.
  double G(double x) const noexcept {
    const double y = std::log(x);
    return std::exp(-tail_.alpha * y + tail_.k * std::log(y));
  }

  /// P{X > x}.
  double survival(double x) const noexcept {
    if (x >= x0_) return tail_.cPlus * G(x);
    if (x >= 0.0) return massPlus_ + bodyPlus_ * (1.0 - body_cdf(x / x0_));
    if (x > -x0_)
      return massPlus_ + bodyPlus_ + bodyMinus_ * body_cdf(-x / x0_);
    return 1.0 - tail_.cMinus * G(-x);
  }

  /// P{X < -x} for x >= 0.
  double lower_tail(double x) const noexcept {
    if (x >= x0_) return tail_.cMinus * G(x);
    return massMinus_ + bodyMinus_ * (1.0 - body_cdf(x / x0_));
  }

  double cdf(double x) const noexcept {
    if (x <= -x0_) return tail_.cMinus * G(-x);
    if (x < 0.0) return massMinus_ + bodyMinus_ * (1.0 - body_cdf(-x / x0_));
    if (x < x0_) return massMinus_ + bodyMinus_ + bodyPlus_ * body_cdf(x / x0_);
    return 1.0 - tail_.cPlus * G(x);
  }

  double density(double x) const noexcept {
    const double a = std::abs(x);
    if (a >= x0_) {
      const double c = x > 0 ? tail_.cPlus : tail_.cMinus;
      return c * tail_density(a);
    }
    const double b = x >= 0 ? bodyPlus_ : bodyMinus_;
    return b * body_density(a / x0_) / x0_;
  }

  /// -G'(x) for x >= x0.
  double tail_density(double x) const noexcept {
    const double y = std::log(x);
    return std::exp(-(tail_.alpha + 1.0) * y + (tail_.k - 1.0) * std::log(y)) *
           (tail_.alpha * y - tail_.k);
  }

  /// Inverse CDF. u carries its own exact complement.
  double quantile(OpenUniform u) const {
    return quantile(u.value(), u.complement());
  }

  double quantile(double u, double w) const {
    if (u < massMinus_) return -tail_inverse(u, tail_.cMinus);
    if (u < massMinus_ + bodyMinus_ || tail_.cPlus == 0.0) {
      const double v = std::min((u - massMinus_) / bodyMinus_, 1.0);
      return -x0_ * body_inverse_from_edge(v);
    }
    if (w > massPlus_) {
      const double v = (u - massMinus_ - bodyMinus_) / bodyPlus_;
      return x0_ * body_inverse(std::min(v, 1.0));
    }
    return tail_inverse(w, tail_.cPlus);
  }

  /// x >= x0 with c G(x) = w, for 0 < w <= c G(x0).
  double tail_inverse(double w, double c) const {
    const double a = tail_.alpha, k = tail_.k;
    const double t = std::log(c / w);
    const double y0 = std::log(x0_);
    if (k == 0.0) return std::exp(std::max(t / a, y0));
    auto f = [&](double y) { return a * y - k * std::log(y) - t; };
    auto df = [&](double y) { return a - k / y; };
    double lo = y0, hi = std::max(y0, 1.0);
    if (f(lo) >= 0.0) return x0_;
    while (f(hi) < 0.0) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e6) throw NumericFailure("tail_inverse: no bracket");
    }
    // Convex for k > 0 (iterate from the right), concave for k < 0.
    double y = k > 0 ? hi : lo;
    for (int it = 0; it < 200; ++it) {
      const double fy = f(y);
      if (fy == 0.0) break;
      (fy < 0.0 ? lo : hi) = y;
      double next = y - fy / df(y);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - y) <= 1e-16 * y || hi - lo <= 1e-16 * hi) {
        y = next;
        break;
      }
      y = next;
    }
    return std::exp(y);
  }

  /// E[(X+)^p], E[(X-)^p] for 0 < p < alpha.
  SignedMoments signed_moments(double p) const {
    check_order(p);
    if (body_.moments == MomentMethod::monte_carlo) {
      const auto e = monte_carlo_moments(p, body_.momentDraws, body_.momentSeed);
      return {e.first.value, e.second.value};
    }
    const double bp = body_moment(p);
    const double tp = tail_moment(p);
    return {bodyPlus_ * bp + tail_.cPlus * tp,
            bodyMinus_ * bp + tail_.cMinus * tp};
  }

  double fractional_moment(double p, MomentSign s) const {
    const auto m = signed_moments(p);
    switch (s) {
      case MomentSign::plus: return m.plus;
      case MomentSign::minus: return m.minus;
      default: return m.plus + m.minus;
    }
  }

  /// Monte Carlo estimates of E[(X+)^p] and E[(X-)^p] with standard errors.
  std::pair<Estimate, Estimate> monte_carlo_moments(double p,
                                                    std::uint64_t draws,
                                                    std::uint64_t seed) const {
    check_order(p);
    const CounterRng rng(seed, Stream::moments);
    CompensatedSum sp, sp2, sm, sm2;
    for (std::uint64_t i = 0; i < draws; ++i) {
      const double x = quantile(rng.uniform(i));
      const double v = std::pow(std::abs(x), p);
      if (x > 0) {
        sp += v;
        sp2 += v * v;
      } else {
        sm += v;
        sm2 += v * v;
      }
    }
    const double n = static_cast<double>(draws);
    auto est = [n](const CompensatedSum& s, const CompensatedSum& s2) {
      const double m = s.value() / n;
      const double var = std::max(0.0, s2.value() / n - m * m);
      return Estimate{m, std::sqrt(var / n)};
    };
    return {est(sp, sp2), est(sm, sm2)};
  }

  /// Integral over (0, x0) of x^p times the normalized body density.
  double body_moment(double p) const {
    const double x0p = std::pow(x0_, p);
    return x0p * quad::singular(
                     [&](double s) { return std::pow(s, p) * body_density(s); },
                     0.0, 1.0, 1e-12);
  }

  /// Integral over (x0, inf) of x^p (-G'(x)) dx, done in y = ln x.
  double tail_moment(double p) const {
    const double a = tail_.alpha, k = tail_.k, y0 = std::log(x0_);
    auto g = [&](double y) {
      return std::exp((p - a) * y + (k - 1.0) * std::log(y)) * (a * y - k);
    };
    const double v = quad::half_line(g, y0, 1e-12);
    if (!(v >= 0.0)) throw NumericFailure("tail_moment: quadrature failed");
    return v;
  }

private:
  struct Raw {};
  TailedDistribution(const TailSpec& tail, BodyConfig body, Raw)
      : tail_(tail), body_(body) {
    setup();
  }

  void check_order(double p) const {
    if (!(p > 0.0) || !(p < tail_.alpha)) {
      std::ostringstream os;
      os << "moment of order " << p << " undefined for tail index "
         << tail_.alpha;
      throw UndefinedMoment(os.str());
    }
  }

  // Body on (0,1) in units of x0, normalized to mass 1.
  double body_density(double s) const noexcept {
    return body_.kind == BodyKind::uniform ? 1.0 : 2.0 * (1.0 - s);
  }
  double body_cdf(double s) const noexcept {
    return body_.kind == BodyKind::uniform ? s : 1.0 - (1.0 - s) * (1.0 - s);
  }
  double body_inverse(double v) const noexcept {
    return body_.kind == BodyKind::uniform ? v : 1.0 - std::sqrt(1.0 - v);
  }
  // s with P{S >= s} = 1 - v, i.e. measured from the outer edge inward.
  double body_inverse_from_edge(double v) const noexcept {
    return body_.kind == BodyKind::uniform ? 1.0 - v : 1.0 - std::sqrt(v);
  }

  void setup() {
    const double a = tail_.alpha, k = tail_.k;
    const double c = tail_.cPlus + tail_.cMinus;
    // ln of the total tail mass at x0 = e^y.
    auto h = [&](double y) {
      return std::log(c) - a * y + k * std::log(y) - std::log(0.5);
    };
    double ymin = k >= 0.0 ? (k + 1.0) / a : 1e-300;
    double y0 = ymin;
    if (h(ymin) > 0.0) {
      double lo = ymin, hi = std::max(2.0 * ymin, 1.0);
      while (h(hi) > 0.0) {
        lo = hi;
        hi *= 2.0;
      }
      for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (h(mid) > 0.0 ? lo : hi) = mid;
      }
      y0 = hi;
    }
    x0_ = std::exp(y0);
    const double g0 = G(x0_);
    massPlus_ = tail_.cPlus * g0;
    massMinus_ = tail_.cMinus * g0;
    const double rest = 1.0 - massPlus_ - massMinus_;
    if (!(rest >= 0.0)) throw NumericFailure("TailedDistribution: infeasible body");
    bodyPlus_ = rest * tail_.cPlus / c;
    bodyMinus_ = rest * tail_.cMinus / c;
  }

  TailSpec tail_;
  BodyConfig body_;
  double x0_ = 0.0;
  double massPlus_ = 0.0, massMinus_ = 0.0;
  double bodyPlus_ = 0.0, bodyMinus_ = 0.0;
};

}  // namespace nonconv
