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
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include "nonconv/numeric.hpp"
#include "nonconv/rng.hpp"
#include "nonconv/sampler.hpp"
#include "nonconv/simulator.hpp"

namespace nonconv {

enum class Side { plus, minus };

struct TailFit {
  double alphaHat = 0.0, kHat = 0.0, cHat = 0.0;
  double alphaStderr = 0.0, kStderr = 0.0, cStderr = 0.0;
  std::vector<double> thresholds;  // z_i
  std::vector<double> empirical;   // empirical survival at z_i
  std::vector<double> fitted;      // c z^-alpha (ln z)^k at z_i

  double fitted_survival(double z) const {
    return cHat * std::pow(z, -alphaHat) * std::pow(std::log(z), kHat);
  }
};

/// Fits ln S(z) = ln c - alpha ln z + k ln ln z by generalized least squares
/// at 20 thresholds with survival levels log-spaced over [1e-4, 1e-2]. The
/// weight matrix is the binomial covariance of nested exceedance counts.
inline TailFit tail_fit(const std::vector<double>& samples, Side side,
                        double deepest = 1e-4, double shallowest = 1e-2,
                        int points = 20) {
  const std::size_t n = samples.size();
  if (n < 100'000) throw InvalidArgument("tail_fit: need at least 1e5 samples");
  const double nd = static_cast<double>(n);
  if (deepest * nd < 100.0) {
    deepest = 100.0 / nd;  // widened retry
    if (deepest >= shallowest)
      throw NumericFailure("tail_fit: too few exceedances at the deepest threshold");
  }
  std::vector<double> x(samples);
  if (side == Side::minus)
    for (auto& v : x) v = -v;
  std::sort(x.begin(), x.end(), std::greater<>());

  TailFit fit;
  std::vector<double> S;
  for (int i = 0; i < points; ++i) {
    const double lev = shallowest * std::pow(deepest / shallowest, double(i) / (points - 1));
    const auto cnt = static_cast<std::size_t>(std::llround(lev * nd));
    if (cnt < 1 || cnt >= n) continue;
    const double z = x[cnt];  // exactly cnt samples lie strictly above when untied
    if (!(z > std::exp(1.0))) continue;
    std::size_t above = static_cast<std::size_t>(
        std::upper_bound(x.begin(), x.end(), z, std::greater<>()) - x.begin());
    above = std::min(above, cnt);
    if (above < 1) continue;
    fit.thresholds.push_back(z);
    S.push_back(static_cast<double>(above) / nd);
  }
  const int m = static_cast<int>(S.size());
  if (m < 4) throw NumericFailure("tail_fit: fewer than 4 usable thresholds above e");
  if (S.back() * nd < 100.0)
    throw NumericFailure("tail_fit: fewer than 100 exceedances at the deepest threshold");

  Eigen::MatrixXd X(m, 3);
  Eigen::VectorXd y(m);
  Eigen::MatrixXd C(m, m);
  for (int i = 0; i < m; ++i) {
    const double lz = std::log(fit.thresholds[static_cast<std::size_t>(i)]);
    X(i, 0) = 1.0;
    X(i, 1) = -lz;
    X(i, 2) = std::log(lz);
    y(i) = std::log(S[static_cast<std::size_t>(i)]);
    for (int j = 0; j < m; ++j) {
      const double smax = std::max(S[static_cast<std::size_t>(i)], S[static_cast<std::size_t>(j)]);
      C(i, j) = (1.0 - smax) / (nd * smax);
    }
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() != Eigen::Success) throw NumericFailure("tail_fit: singular covariance");
  const Eigen::MatrixXd CiX = llt.solve(X);
  const Eigen::MatrixXd A = X.transpose() * CiX;
  const Eigen::MatrixXd Ainv = A.inverse();
  const Eigen::VectorXd beta = Ainv * (CiX.transpose() * y);
  fit.cHat = std::exp(beta(0));
  fit.alphaHat = beta(1);
  fit.kHat = beta(2);
  fit.cStderr = fit.cHat * std::sqrt(Ainv(0, 0));
  fit.alphaStderr = std::sqrt(Ainv(1, 1));
  fit.kStderr = std::sqrt(Ainv(2, 2));
  fit.empirical = S;
  for (double z : fit.thresholds) fit.fitted.push_back(fit.fitted_survival(z));
  return fit;
}

struct HillResult {
  double alpha = 0.0;
  std::size_t m = 0;
  bool degenerate = false;  // all top log-spacings zero; alpha = +inf
};

/// Hill estimator on the top m order statistics of |samples|;
/// m = 0 selects floor(n^(2/3)).
inline HillResult hill(const std::vector<double>& samples, std::size_t m = 0) {
  const std::size_t n = samples.size();
  if (m == 0) m = static_cast<std::size_t>(std::floor(std::pow(double(n), 2.0 / 3.0)));
  if (m < 1 || m >= n) throw InvalidArgument("hill: need 1 <= m < sample count");
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::abs(samples[i]);
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(m), a.end(),
                   std::greater<>());
  const double ref = a[m];
  CompensatedSum s;
  for (std::size_t i = 0; i < m; ++i) s += std::log(a[i] / ref);
  HillResult h;
  h.m = m;
  if (!(s.value() > 0.0) || !(ref > 0.0)) {
    h.alpha = std::numeric_limits<double>::infinity();
    h.degenerate = true;
    return h;
  }
  h.alpha = static_cast<double>(m) / s.value();
  return h;
}

enum class MeasureKind { power_law, cluster_estimate };

/// One block size of the cluster route.
struct ClusterLevel {
  std::uint64_t kBlock = 0;
  std::uint64_t blocks = 0;
  double cPlus = 0.0, cMinus = 0.0;
  double cPlusStderr = 0.0, cMinusStderr = 0.0;
  double gamma = 0.0;
  std::uint64_t exceedances = 0;
};

/// Levy triplet of the limit: measure with density alpha c+- |x|^(-1-alpha),
/// drift gamma, compensator x/(1+x^2).
struct LevyLimit {
  double alpha = 1.0;
  MeasureKind kind = MeasureKind::power_law;
  double cPlus = 0.0, cMinus = 0.0;
  double gamma = 0.0;
  std::vector<ClusterLevel> levels;     // cluster route only
  std::vector<double> clusterJumps;     // exceeding block sums, largest kBlock
  double cPlusExtrapolated = 0.0, cMinusExtrapolated = 0.0;

  std::complex<double> psi(double xi) const;
};

namespace detail {

/// I(xi) = int_0^inf (e^{i xi x} - 1 - i xi x/(1+x^2)) x^(-1-alpha) dx, xi > 0.
inline std::complex<double> levy_integral(double alpha, double xi) {
  static thread_local boost::math::quadrature::ooura_fourier_sin<double> osin(1e-11, 10);
  static thread_local boost::math::quadrature::ooura_fourier_cos<double> ocos(1e-11, 10);
  const double A = 1.0 / xi;
  // near part, written to avoid cancellation and overflow at x -> 0
  auto re_near = [&](double x) {
    const double s = std::sin(0.5 * xi * x) / x;
    return 2.0 * s * s * std::pow(x, 1.0 - alpha);
  };
  auto im_near = [&](double x) {
    const double u = xi * x;
    double r;  // (sin u - u)/u^3
    if (u < 1e-2) {
      const double u2 = u * u;
      r = -1.0 / 6.0 + u2 / 120.0 - u2 * u2 / 5040.0;
    } else {
      r = (std::sin(u) - u) / (u * u * u);
    }
    return (xi * xi * xi * r + xi / (1.0 + x * x)) * std::pow(x, 2.0 - alpha);
  };
  const double reNear = quad::singular(re_near, 0.0, A, 1e-12);
  const double imNear = quad::singular(im_near, 0.0, A, 1e-12);
  auto f = [&](double t) { return std::pow(t + A, -1.0 - alpha); };
  const double Cc = ocos.integrate(f, xi).first;
  const double Ss = osin.integrate(f, xi).first;
  const double cA = std::cos(xi * A), sA = std::sin(xi * A);
  const double cosTail = cA * Cc - sA * Ss;  // int_A^inf cos(xi x) x^(-1-a)
  const double sinTail = sA * Cc + cA * Ss;  // int_A^inf sin(xi x) x^(-1-a)
  const double comp = quad::half_line(
      [&](double x) { return std::pow(x, -alpha) / (1.0 + x * x); }, A, 1e-12);
  const double re = -(reNear + std::pow(A, -alpha) / alpha - cosTail);
  const double im = imNear + sinTail - xi * comp;
  return {re, im};
}

}  // namespace detail

inline std::complex<double> LevyLimit::psi(double xi) const {
  if (xi == 0.0) return {0.0, 0.0};
  const auto I = detail::levy_integral(alpha, std::abs(xi));
  const auto Ix = xi > 0 ? I : std::conj(I);
  return std::complex<double>(0.0, gamma * xi) +
         alpha * (cPlus * Ix + cMinus * std::conj(Ix));
}

/// Power-law limit with the constants of a tail class.
inline LevyLimit build_levy_limit(const TailSpec& t) {
  t.validate();
  LevyLimit L;
  L.alpha = t.alpha;
  L.cPlus = t.cPlus;
  L.cMinus = t.cMinus;
  return L;
}

struct ClusterOptions {
  std::vector<std::uint64_t> kBlocks{8, 32, 128};
  std::uint64_t drawsPerLevel = 200'000'000;   // summands simulated per kBlock
  std::vector<double> ladder{1.0, 1.5, 2.0};   // thresholds in units of b_N
  std::uint64_t seed = 0x636c7573ull;
  unsigned threads = 1;
};

/// Cluster route (LDep): normalized sums of independent blocks of kBlock
/// consecutive summands; c+- from (N/k) P{B > x} x^alpha over the ladder.
inline LevyLimit build_levy_limit(const Polynomial& F, std::uint64_t N,
                                  const HeavyTailSampler& s,
                                  const NormalizationPair& norm, double alpha,
                                  const ClusterOptions& opt = {}) {
  LevyLimit L;
  L.alpha = alpha;
  L.kind = MeasureKind::cluster_estimate;
  const std::size_t l = F.arity;
  const double b = norm.bN;
  auto f = [](double x) { return x / (1.0 + x * x); };
  for (auto k : opt.kBlocks) {
    const std::uint64_t blocks = opt.drawsPerLevel / k;
    // blocks are processed in fixed chunks so results do not depend on threads
    const std::uint64_t chunk = 4096;
    const std::uint64_t nChunks = (blocks + chunk - 1) / chunk;
    struct Part {
      std::vector<std::uint64_t> up, down;
      CompensatedSum drift;
      std::vector<double> jumps;
    };
    const auto parts = for_each_replicate(nChunks, opt.seed ^ k, opt.threads,
                                          [&](std::uint64_t c, std::uint64_t) {
      Part p;
      p.up.assign(opt.ladder.size(), 0);
      p.down.assign(opt.ladder.size(), 0);
      const auto sc = s.with_seed(derive_seed(opt.seed, k)).with_stream(
          static_cast<std::uint32_t>(Stream::cluster));
      std::vector<double> ring(l), x(l);
      const std::uint64_t r0 = c * chunk, r1 = std::min(blocks, r0 + chunk);
      for (std::uint64_t r = r0; r < r1; ++r) {
        // block r uses X_{base+1} .. X_{base+k+l-1}, disjoint from other blocks
        const std::uint64_t base = r * (k + l - 1);
        for (std::size_t j = 0; j + 1 < l; ++j) ring[j + 1] = sc.draw(base + j + 1);
        double B = 0.0, fsum = 0.0;
        for (std::uint64_t n = 1; n <= k; ++n) {
          ring[(n + l - 1) % l] = sc.draw(base + n + l - 1);
          for (std::size_t j = 0; j < l; ++j) x[j] = ring[(n + j) % l];
          double z = 0.0;
          for (std::size_t t = 0; t < F.terms.size(); ++t)
            z += F.terms[t].coefficient * (F.terms[t].evaluate(x) - norm.aN[t]);
          z /= b;
          B += z;
          fsum += f(z);
        }
        p.drift += f(B) - fsum;
        for (std::size_t i = 0; i < opt.ladder.size(); ++i) {
          if (B > opt.ladder[i]) ++p.up[i];
          if (-B > opt.ladder[i]) ++p.down[i];
        }
        if (std::abs(B) > opt.ladder.front()) p.jumps.push_back(B);
      }
      return p;
    });
    std::vector<std::uint64_t> up(opt.ladder.size(), 0), down(opt.ladder.size(), 0);
    CompensatedSum drift;
    std::vector<double> jumps;
    for (const auto& p : parts) {
      for (std::size_t i = 0; i < up.size(); ++i) {
        up[i] += p.up[i];
        down[i] += p.down[i];
      }
      drift += p.drift.value();
      jumps.insert(jumps.end(), p.jumps.begin(), p.jumps.end());
    }
    ClusterLevel lv;
    lv.kBlock = k;
    lv.blocks = blocks;
    const double scale = static_cast<double>(N) / static_cast<double>(k);
    const double nb = static_cast<double>(blocks);
    double cp = 0, cm = 0, vp = 0, vm = 0;
    for (std::size_t i = 0; i < up.size(); ++i) {
      const double w = scale * std::pow(opt.ladder[i], alpha) / nb;
      cp += w * static_cast<double>(up[i]);
      cm += w * static_cast<double>(down[i]);
      vp += w * w * static_cast<double>(up[i]);
      vm += w * w * static_cast<double>(down[i]);
    }
    const double L_ = static_cast<double>(up.size());
    lv.cPlus = cp / L_;
    lv.cMinus = cm / L_;
    lv.cPlusStderr = std::sqrt(vp) / L_;   // conservative: ladder points correlated
    lv.cMinusStderr = std::sqrt(vm) / L_;
    lv.gamma = scale * drift.value() / nb;
    lv.exceedances = up.front() + down.front();
    if (lv.exceedances < 100)
      throw NumericFailure("build_levy_limit: insufficient exceedances in cluster route");
    L.levels.push_back(lv);
    if (k == opt.kBlocks.back()) L.clusterJumps = std::move(jumps);
  }
  const auto& last = L.levels.back();
  L.cPlus = last.cPlus;
  L.cMinus = last.cMinus;
  L.gamma = last.gamma;
  // least squares c(k) = c_inf + beta / k
  if (L.levels.size() >= 2) {
    auto extrapolate = [&](auto get) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
      for (const auto& v : L.levels) {
        const double u = 1.0 / static_cast<double>(v.kBlock), c = get(v);
        sx += u; sy += c; sxx += u * u; sxy += u * c; n += 1;
      }
      const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
      return (sy - slope * sx) / n;
    };
    L.cPlusExtrapolated = extrapolate([](const ClusterLevel& v) { return v.cPlus; });
    L.cMinusExtrapolated = extrapolate([](const ClusterLevel& v) { return v.cMinus; });
  } else {
    L.cPlusExtrapolated = L.cPlus;
    L.cMinusExtrapolated = L.cMinus;
  }
  return L;
}

/// Empirical characteristic function at xi.
inline std::complex<double> empirical_cf(const std::vector<double>& v, double xi) {
  CompensatedSum re, im;
  for (double x : v) {
    re += std::cos(xi * x);
    im += std::sin(xi * x);
  }
  const double n = static_cast<double>(v.size());
  return {re.value() / n, im.value() / n};
}

/// xi in {-5, -4.9, ..., 5}.
inline std::vector<double> default_cf_grid() {
  std::vector<double> g;
  for (int i = -50; i <= 50; ++i) g.push_back(i / 10.0);
  return g;
}

struct CfRow {
  double xi;
  std::complex<double> empirical, theory;
};

inline std::vector<CfRow> cf_grid(const std::vector<double>& endValues,
                                  const LevyLimit& limit, double t,
                                  const std::vector<double>& grid) {
  std::vector<CfRow> rows;
  for (double xi : grid)
    rows.push_back({xi, empirical_cf(endValues, xi), std::exp(t * limit.psi(xi))});
  return rows;
}

/// sup over the grid of |empirical CF - exp(t psi)|.
inline double cf_distance(const std::vector<double>& endValues,
                          const LevyLimit& limit, double t,
                          const std::vector<double>& grid = default_cf_grid()) {
  double d = 0.0;
  for (const auto& r : cf_grid(endValues, limit, t, grid))
    d = std::max(d, std::abs(r.empirical - r.theory));
  return d;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
template <class Cdf>
double ks_one_sample(std::vector<double> a, Cdf cdf) {
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double F = cdf(a[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return d;
}

/// Value at the p-quantile of |v| (nearest rank).
inline double abs_quantile(const std::vector<double>& v, double p) {
  std::vector<double> a(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) a[i] = std::abs(v[i]);
  const auto idx = static_cast<std::size_t>(
      std::min<double>(a.size() - 1, std::ceil(p * static_cast<double>(a.size())) - 1));
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(idx), a.end());
  return a[idx];
}

/// Distance covariance for univariate samples in O(n log n).
class DistanceCovariance {
public:
  DistanceCovariance(const std::vector<double>& x, const std::vector<double>& y)
      : n_(x.size()) {
    if (x.size() != y.size() || x.size() < 2)
      throw InvalidArgument("distance covariance: need two equal-length samples");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / double(n_);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / double(n_);
    std::vector<std::size_t> ix(n_);
    std::iota(ix.begin(), ix.end(), 0);
    std::stable_sort(ix.begin(), ix.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    xs_.resize(n_);
    ys_.resize(n_);
    order_ = ix;
    pos_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) pos_[ix[i]] = i;
    for (std::size_t i = 0; i < n_; ++i) {
      xs_[i] = x[ix[i]] - mx;
      ys_[i] = y[ix[i]] - my;
    }
    ax_ = row_sums_sorted(xs_);
    // y ranks and row sums in x order
    std::vector<std::size_t> iy(n_);
    std::iota(iy.begin(), iy.end(), 0);
    std::stable_sort(iy.begin(), iy.end(), [&](auto a, auto b) { return ys_[a] < ys_[b]; });
    rank_.resize(n_);
    std::vector<double> ysorted(n_);
    for (std::size_t r = 0; r < n_; ++r) {
      rank_[iy[r]] = r + 1;
      ysorted[r] = ys_[iy[r]];
    }
    const auto byRank = row_sums_sorted(ysorted);
    by_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) by_[i] = byRank[rank_[i] - 1];
    sumAx_ = std::accumulate(ax_.begin(), ax_.end(), 0.0);
    sumBy_ = std::accumulate(by_.begin(), by_.end(), 0.0);
    varX_ = dvar(xs_, ax_, sumAx_);
    varY_ = dvar(ysorted, byRank, sumBy_);
  }

  /// dCov^2 (V-statistic) of the pairs (x_i, y_perm[i]) in input order;
  /// identity if perm is empty.
  double dcov2(const std::vector<std::uint32_t>& perm = {}) const {
    if (!perm.empty() && perm.size() != n_)
      throw InvalidArgument("distance covariance: permutation length mismatch");
    std::vector<double> y(n_);
    std::vector<std::size_t> r(n_);
    std::vector<double> b(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t s = perm.empty() ? i : pos_[perm[order_[i]]];
      y[i] = ys_[s];
      r[i] = rank_[s];
      b[i] = by_[s];
    }
    // Fenwick over y ranks: count, sum y, sum x, sum xy
    std::vector<double> fc(n_ + 1), fy(n_ + 1), fx(n_ + 1), fxy(n_ + 1);
    double tc = 0, ty = 0, tx = 0, txy = 0, cross = 0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double xj = xs_[j], yj = y[j];
      double c = 0, sy = 0, sx = 0, sxy = 0;
      for (std::size_t k = r[j]; k > 0; k -= k & (~k + 1)) {
        c += fc[k]; sy += fy[k]; sx += fx[k]; sxy += fxy[k];
      }
      const double lo = c * xj * yj - xj * sy - yj * sx + sxy;
      const double hi = xj * (ty - sy) - xj * yj * (tc - c) - (txy - sxy) + yj * (tx - sx);
      cross += lo + hi;
      for (std::size_t k = r[j]; k <= n_; k += k & (~k + 1)) {
        fc[k] += 1; fy[k] += yj; fx[k] += xj; fxy[k] += xj * yj;
      }
      tc += 1; ty += yj; tx += xj; txy += xj * yj;
    }
    const double n = static_cast<double>(n_);
    double s3 = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s3 += ax_[i] * b[i];
    return 2.0 * cross / (n * n) - 2.0 * s3 / (n * n * n) +
           sumAx_ * sumBy_ / (n * n * n * n);
  }

  double dcor(double dcov2v) const {
    const double d = std::sqrt(varX_ * varY_);
    return d > 0 ? std::sqrt(std::max(0.0, dcov2v) / d) : 0.0;
  }

  std::size_t size() const noexcept { return n_; }

private:
  static std::vector<double> row_sums_sorted(const std::vector<double>& v) {
    // sum_j |v_i - v_j| for sorted v
    const std::size_t n = v.size();
    std::vector<double> pre(n + 1, 0.0), out(n);
    for (std::size_t i = 0; i < n; ++i) pre[i + 1] = pre[i] + v[i];
    for (std::size_t i = 0; i < n; ++i) {
      const double below = v[i] * double(i) - pre[i];
      const double above = (pre[n] - pre[i + 1]) - v[i] * double(n - i - 1);
      out[i] = below + above;
    }
    return out;
  }
  double dvar(const std::vector<double>& v, const std::vector<double>& rs,
              double total) const {
    const double n = static_cast<double>(n_);
    double s1 = 0.0, sx = 0.0, sxx = 0.0, s3 = 0.0;
    for (double x : v) {
      sx += x;
      sxx += x * x;
    }
    s1 = 2.0 * n * sxx - 2.0 * sx * sx;  // sum_ij (v_i - v_j)^2
    for (double r : rs) s3 += r * r;
    return s1 / (n * n) - 2.0 * s3 / (n * n * n) + total * total / (n * n * n * n);
  }

  std::size_t n_;
  std::vector<double> xs_, ys_, ax_, by_;
  std::vector<std::size_t> rank_, order_, pos_;  // order_: sorted -> input
  double sumAx_ = 0, sumBy_ = 0, varX_ = 0, varY_ = 0;
};

struct DependenceTest {
  double statistic = 0.0;  // distance correlation of the clipped increments
  double dcov2 = 0.0;
  double pValue = 1.0;
  std::uint64_t permutations = 0;
  double clipA = 0.0, clipB = 0.0;
};

/// Permutation test of independence between two increment samples, after
/// clipping each at its 99th percentile of absolute values.
inline DependenceTest increment_dependence(const std::vector<double>& a,
                                           const std::vector<double>& b,
                                           std::uint64_t permutations = 10'000,
                                           std::uint64_t seed = 0x70657266ull,
                                           unsigned threads = 1) {
  if (a.size() != b.size()) throw InvalidArgument("increment_dependence: size mismatch");
  if (a.size() < 1000) throw InvalidArgument("increment_dependence: need >= 1e3 replicates");
  DependenceTest out;
  out.clipA = abs_quantile(a, 0.99);
  out.clipB = abs_quantile(b, 0.99);
  std::vector<double> ca(a), cb(b);
  for (auto& v : ca) v = std::clamp(v, -out.clipA, out.clipA);
  for (auto& v : cb) v = std::clamp(v, -out.clipB, out.clipB);
  const DistanceCovariance dc(ca, cb);
  out.dcov2 = dc.dcov2();
  out.statistic = dc.dcor(out.dcov2);
  out.permutations = permutations;
  const std::size_t n = dc.size();
  const auto hits = for_each_replicate(permutations, seed, threads,
                                       [&](std::uint64_t p, std::uint64_t s) {
    const CounterRng rng(s, Stream::permutation);
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform(i).value() * double(i + 1));
      std::swap(perm[i], perm[std::min(j, i)]);
    }
    (void)p;
    return dc.dcov2(perm) >= out.dcov2 ? 1 : 0;
  });
  const auto count = std::accumulate(hits.begin(), hits.end(), std::uint64_t{0});
  out.pValue = (1.0 + double(count)) / (1.0 + double(permutations));
  return out;
}

/// Increments xi(tb) - xi(ta) of probe values (probe indices ia < ib).
inline std::vector<double> probe_increments(const Ensemble& e, std::size_t ia,
                                            std::size_t ib) {
  std::vector<double> out;
  for (const auto& p : e.probeValues) out.push_back(p[ib] - p[ia]);
  return out;
}

struct JumpScan {
  std::uint64_t simultaneous = 0;
  std::uint64_t adjacent = 0;
  std::uint64_t single1 = 0, single2 = 0;
  std::uint64_t N = 0, R = 0;

  double rate(std::uint64_t c) const {
    return static_cast<double>(c) / (static_cast<double>(N) * static_cast<double>(R));
  }
};

/// Grid times where components c1 and c2 (indices into perTheta) both jump
/// by at least delta (paths are already in units of b_N).
inline JumpScan joint_jump_scan(const std::vector<PathBundle>& bundles,
                                std::size_t c1, std::size_t c2, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("joint_jump_scan: delta must be > 0");
  JumpScan js;
  js.R = bundles.size();
  for (const auto& b : bundles) {
    js.N = b.meta.N;
    const auto& p1 = b.perTheta.at(c1).values;
    const auto& p2 = b.perTheta.at(c2).values;
    const std::size_t M = p1.size() - 1;
    std::vector<char> j1(M + 2, 0), j2(M + 2, 0);
    for (std::size_t m = 1; m <= M; ++m) {
      j1[m] = std::abs(p1[m] - p1[m - 1]) >= delta;
      j2[m] = std::abs(p2[m] - p2[m - 1]) >= delta;
      js.single1 += static_cast<std::uint64_t>(j1[m]);
      js.single2 += static_cast<std::uint64_t>(j2[m]);
    }
    for (std::size_t m = 1; m <= M; ++m) {
      if (!j1[m]) continue;
      js.simultaneous += static_cast<std::uint64_t>(j2[m]);
      js.adjacent += static_cast<std::uint64_t>(j2[m - 1]) + static_cast<std::uint64_t>(j2[m + 1]);
    }
  }
  return js;
}

}  // namespace nonconv
