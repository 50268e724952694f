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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nonconv/indexcalc.hpp"
#include "nonconv/numeric.hpp"
#include "nonconv/polynomial.hpp"
#include "nonconv/sampler.hpp"

namespace nonconv {

enum class QCase { ldep, arith_prog };

inline const char* to_string(QCase q) {
  return q == QCase::ldep ? "ldep" : "arith_prog";
}

/// q_j(n) for j = 1..l.
inline std::uint64_t q_index(QCase q, std::uint64_t n, std::size_t j) {
  return q == QCase::ldep ? n + j - 1 : n * j;
}

/// Right-continuous step path: values[m] is the value on [m/N, (m+1)/N).
struct CadlagPath {
  double horizon = 1.0;
  std::uint64_t gridN = 1;
  std::vector<double> values;

  double at(double t) const {
    auto m = static_cast<std::uint64_t>(std::floor(t * static_cast<double>(gridN)));
    return values[std::min<std::uint64_t>(m, values.size() - 1)];
  }
  double back() const { return values.back(); }
  std::size_t size() const noexcept { return values.size(); }
};

struct SimulationMeta {
  QCase qcase = QCase::ldep;
  std::uint64_t N = 0;
  double T = 1.0;
  std::uint64_t seed = 0;
  std::string mode = "plain";
};

struct PathBundle {
  std::vector<CadlagPath> perTheta;  // Xi_N(theta, .)
  std::vector<CadlagPath> raw;       // S_N(theta, .), uncentered
  CadlagPath sum;                    // xi_N
  NormalizationPair norm;
  SimulationMeta meta;
};

/// Y_n(theta) = g_theta(X_q1(n), ..., X_ql(n)) for n = 1..count.
struct SummandTable {
  std::size_t terms = 0;
  std::uint64_t count = 0;
  std::vector<double> y;

  double operator()(std::size_t t, std::uint64_t n) const {
    return y[t * count + (n - 1)];
  }
};

inline SummandTable summands(const Polynomial& F, QCase q, std::uint64_t count,
                             const HeavyTailSampler& s) {
  SummandTable tab;
  tab.terms = F.terms.size();
  tab.count = count;
  tab.y.resize(tab.terms * count);
  const std::size_t l = F.arity;
  std::vector<double> x(l), ring(l);
  if (q == QCase::ldep)
    for (std::size_t j = 0; j + 1 < l; ++j) ring[j + 1] = s.draw(j + 1);
  for (std::uint64_t n = 1; n <= count; ++n) {
    if (q == QCase::ldep) {
      // window X_n .. X_{n+l-1}, stored at ring[(n + j) % l]
      ring[(n + l - 1) % l] = s.draw(n + l - 1);
      for (std::size_t j = 0; j < l; ++j) x[j] = ring[(n + j) % l];
    } else {
      for (std::size_t j = 0; j < l; ++j) x[j] = s.draw(n * (j + 1));
    }
    for (std::size_t t = 0; t < tab.terms; ++t) {
      const double v = F.terms[t].evaluate(x);
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "non-finite summand at n=" << n << " for term " << t;
        throw NumericFailure(os.str());
      }
      tab.y[t * count + (n - 1)] = v;
    }
  }
  return tab;
}

namespace detail {

/// Builds a bundle from summands; keep(n) selects the retained indices,
/// shift[t] offsets the summand read for term t, first is the first n.
template <class Keep>
PathBundle assemble(const Polynomial& F, const SummandTable& tab, std::uint64_t M,
                    const NormalizationPair& norm, const SimulationMeta& meta,
                    Keep keep, const std::vector<std::uint64_t>& shift = {},
                    std::uint64_t first = 1) {
  PathBundle b;
  b.norm = norm;
  b.meta = meta;
  const std::size_t m = F.terms.size();
  for (std::size_t t = 0; t < m; ++t) {
    CadlagPath xi{meta.T, meta.N, std::vector<double>(M + 1, 0.0)};
    CadlagPath raw{meta.T, meta.N, std::vector<double>(M + 1, 0.0)};
    const std::uint64_t off = shift.empty() ? 0 : shift[t];
    const double a = norm.aN[t];
    CompensatedSum S;
    double kept = 0.0;
    for (std::uint64_t n = 1; n <= M; ++n) {
      if (n >= first && keep(n)) {
        S += tab(t, n + off);
        kept += 1.0;
      }
      raw.values[n] = S.value();
      xi.values[n] = (raw.values[n] - kept * a) / norm.bN;
    }
    b.perTheta.push_back(std::move(xi));
    b.raw.push_back(std::move(raw));
  }
  b.sum = CadlagPath{meta.T, meta.N, std::vector<double>(M + 1, 0.0)};
  for (std::uint64_t i = 0; i <= M; ++i) {
    double v = 0.0;
    for (std::size_t t = 0; t < m; ++t)
      v += F.terms[t].coefficient * b.perTheta[t].values[i];
    b.sum.values[i] = v;
  }
  return b;
}

inline std::uint64_t grid_count(std::uint64_t N, double T) {
  if (N < 2) throw InvalidArgument("simulation: N must be >= 2");
  if (!(T > 0.0)) throw InvalidArgument("simulation: T must be > 0");
  return static_cast<std::uint64_t>(std::floor(static_cast<double>(N) * T));
}

}  // namespace detail

/// Normalization for the iid sequence of one sampler.
inline NormalizationPair sequence_normalization(const Polynomial& F,
                                                std::uint64_t N,
                                                const HeavyTailSampler& s,
                                                std::uint64_t draws = 10'000'000) {
  const auto& t = s.dist().tail();
  const auto sum = iid_index_summary(F, t.alpha, t.k);
  std::vector<TailedDistribution> ds(F.arity, s.dist());
  return normalization(sum, static_cast<double>(N), ds, F, s.seed() ^ 0x6e6f726dull,
                       draws);
}

inline PathBundle simulate_paths(const Polynomial& F, QCase q, std::uint64_t N,
                                 double T, const HeavyTailSampler& s,
                                 const NormalizationPair& norm) {
  const auto M = detail::grid_count(N, T);
  const auto tab = summands(F, q, M, s);
  return detail::assemble(F, tab, M, norm, {q, N, T, s.seed(), "plain"},
                          [](std::uint64_t) { return true; });
}

inline PathBundle simulate_paths(const Polynomial& F, QCase q, std::uint64_t N,
                                 double T, const HeavyTailSampler& s) {
  return simulate_paths(F, q, N, T, s, sequence_normalization(F, N, s));
}

/// Shift families of Theta* and the offsets a(theta).
struct Rearrangement {
  std::vector<std::vector<std::size_t>> families;  // terms, base first
  std::vector<std::uint64_t> offset;               // per term of F
};

inline Rearrangement rearrangement_plan(const IndexSummary& s) {
  Rearrangement r;
  r.offset.assign(s.perTheta.size(), 0);
  std::map<std::vector<int>, std::vector<std::size_t>> byShape;
  std::vector<std::vector<int>> order;
  for (auto th : s.thetaStar) {
    auto J = s.perTheta[th].J;
    const int f = J.front();
    for (auto& x : J) x -= f;
    if (!byShape.count(J)) order.push_back(J);
    byShape[J].push_back(th);
  }
  for (const auto& shape : order) {
    auto fam = byShape[shape];
    if (fam.size() < 2) continue;
    std::stable_sort(fam.begin(), fam.end(), [&](std::size_t a, std::size_t b) {
      return s.perTheta[a].J.front() > s.perTheta[b].J.front();
    });
    const int base = s.perTheta[fam.front()].J.front();
    for (auto th : fam)
      r.offset[th] = static_cast<std::uint64_t>(base - s.perTheta[th].J.front());
    r.families.push_back(std::move(fam));
  }
  return r;
}

struct RearrangedBundle {
  PathBundle bundle;
  Rearrangement plan;
  std::vector<std::vector<double>> bound;  // per term, per grid point
  bool boundHolds = true;
  double worstRatio = 0.0;                 // max |S - S'| / bound
};

/// Shifted summands Y_{n+a(theta)}(theta), summed from n = l (LDep only).
inline RearrangedBundle rearranged_paths(const Polynomial& F, std::uint64_t N,
                                         double T, const HeavyTailSampler& s,
                                         const NormalizationPair& norm) {
  const auto M = detail::grid_count(N, T);
  const auto l = F.arity;
  const auto& tl = s.dist().tail();
  RearrangedBundle out;
  out.plan = rearrangement_plan(iid_index_summary(F, tl.alpha, tl.k));
  const auto tab = summands(F, QCase::ldep, M + l + 1, s);
  const SimulationMeta meta{QCase::ldep, N, T, s.seed(), "rearranged"};
  out.bundle = detail::assemble(F, tab, M, norm, meta,
                                [](std::uint64_t) { return true; },
                                out.plan.offset, l);
  const auto plain = detail::assemble(F, tab, M, norm, meta,
                                      [](std::uint64_t) { return true; });
  for (std::size_t t = 0; t < F.terms.size(); ++t) {
    double head = 0.0;
    for (std::uint64_t n = 1; n <= 2 * l; ++n) head += std::abs(tab(t, n));
    std::vector<double> bd(M + 1, 0.0);
    for (std::uint64_t m = 0; m <= M; ++m) {
      double tail = 0.0;
      for (std::uint64_t n = std::max<std::uint64_t>(m, 1); n <= m + l; ++n)
        tail += std::abs(tab(t, n));
      bd[m] = head + tail;
      const double diff = std::abs(plain.raw[t].values[m] - out.bundle.raw[t].values[m]);
      const double slack = 1e-12 * (bd[m] + std::abs(plain.raw[t].values[m]));
      if (diff > bd[m] + slack) out.boundHolds = false;
      if (bd[m] > 0.0) out.worstRatio = std::max(out.worstRatio, diff / bd[m]);
    }
    out.bound.push_back(std::move(bd));
  }
  return out;
}

/// Index n lies in a B+ block (first kBlock of every kBlock + l - 1).
inline bool in_plus_block(std::uint64_t n, std::uint64_t kBlock, std::size_t l) {
  return (n - 1) % (kBlock + l - 1) < kBlock;
}

struct BlockPair {
  PathBundle xiK;   // sums over the B+ blocks
  PathBundle etaK;  // sums over the gaps B-
};

inline BlockPair block_decomposition(const Polynomial& F, std::uint64_t N,
                                     double T, const HeavyTailSampler& s,
                                     const NormalizationPair& norm,
                                     std::uint64_t kBlock) {
  if (kBlock < 1) throw InvalidArgument("block_decomposition: kBlock must be >= 1");
  const auto M = detail::grid_count(N, T);
  const auto l = F.arity;
  const auto tab = summands(F, QCase::ldep, M, s);
  SimulationMeta meta{QCase::ldep, N, T, s.seed(), "block+"};
  BlockPair out;
  out.xiK = detail::assemble(F, tab, M, norm, meta,
                             [&](std::uint64_t n) { return in_plus_block(n, kBlock, l); });
  meta.mode = "block-";
  out.etaK = detail::assemble(F, tab, M, norm, meta,
                              [&](std::uint64_t n) { return !in_plus_block(n, kBlock, l); });
  return out;
}

/// Keeps summands with n = i n_j, j <= q (ArithProg only).
inline PathBundle q_truncated_paths(const Polynomial& F, std::uint64_t N,
                                    double T, const HeavyTailSampler& s,
                                    const NormalizationPair& norm,
                                    const GammaDecomposition& g, std::size_t q) {
  if (q < 1) throw InvalidArgument("q_truncated_paths: q must be >= 1");
  const auto M = detail::grid_count(N, T);
  const auto tab = summands(F, QCase::arith_prog, M, s);
  const SimulationMeta meta{QCase::arith_prog, N, T, s.seed(),
                            "q-truncated:" + std::to_string(q)};
  return detail::assemble(F, tab, M, norm, meta, [&](std::uint64_t n) {
    const auto pos = g.position(g.factor(n).second);
    return pos >= 1 && pos <= q;
  });
}

/// Runs fn(r, seed_r) for r < R over a worker pool; the output vector is
/// indexed by r, so results do not depend on the number of workers.
template <class Fn>
auto for_each_replicate(std::uint64_t R, std::uint64_t masterSeed,
                        unsigned threads, Fn fn)
    -> std::vector<decltype(fn(std::uint64_t{}, std::uint64_t{}))> {
  using Out = decltype(fn(std::uint64_t{}, std::uint64_t{}));
  std::vector<Out> out(R);
  threads = std::max(1u, threads);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const auto r = next.fetch_add(1);
      if (r >= R) return;
      try {
        out[r] = fn(r, derive_seed(masterSeed, r));
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!err) err = std::current_exception();
        next = R;
      }
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);
  return out;
}

struct EnsembleConfig {
  Polynomial F;
  QCase qcase = QCase::ldep;
  std::uint64_t N = 1000;
  double T = 1.0;
  HeavyTailSampler sampler;
  NormalizationPair norm;
  std::uint64_t masterSeed = 1;
  std::vector<double> probes;   // times at which the sum path is recorded
  std::uint64_t keepPaths = 0;  // number of full bundles retained
  unsigned threads = 1;
};

struct Ensemble {
  std::vector<std::vector<double>> endValues;  // [r]: Xi(theta, T)..., xi(T)
  std::vector<std::vector<double>> rawEnd;     // [r]: S_N(theta, T)
  std::vector<std::vector<double>> probeValues;  // [r][i]: xi(probes[i])
  std::vector<PathBundle> paths;               // first keepPaths replicates
  std::vector<std::uint64_t> seeds;
};

inline Ensemble replicate_ensemble(const EnsembleConfig& c, std::uint64_t R) {
  if (R < 1) throw InvalidArgument("replicate_ensemble: R must be >= 1");
  struct One {
    std::vector<double> end, raw, probes;
    PathBundle bundle;
    std::uint64_t seed = 0;
  };
  auto res = for_each_replicate(R, c.masterSeed, c.threads,
                                [&](std::uint64_t r, std::uint64_t seed) {
    One o;
    o.seed = seed;
    auto b = simulate_paths(c.F, c.qcase, c.N, c.T, c.sampler.with_seed(seed), c.norm);
    for (const auto& p : b.perTheta) o.end.push_back(p.back());
    o.end.push_back(b.sum.back());
    for (const auto& p : b.raw) o.raw.push_back(p.back());
    for (double t : c.probes) o.probes.push_back(b.sum.at(t));
    if (r < c.keepPaths) o.bundle = std::move(b);
    return o;
  });
  Ensemble e;
  for (std::uint64_t r = 0; r < R; ++r) {
    e.endValues.push_back(std::move(res[r].end));
    e.rawEnd.push_back(std::move(res[r].raw));
    e.probeValues.push_back(std::move(res[r].probes));
    e.seeds.push_back(res[r].seed);
    if (r < c.keepPaths) e.paths.push_back(std::move(res[r].bundle));
  }
  return e;
}

}  // namespace nonconv
