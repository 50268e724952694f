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

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nonconv/diagnostics.hpp"
#include "nonconv/indexcalc.hpp"
#include "nonconv/sampler.hpp"
#include "nonconv/simulator.hpp"
#include "nonconv/tailspec.hpp"

namespace nonconv {

using ojson = nlohmann::ordered_json;

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int invalid = 2;
inline constexpr int numeric = 3;
inline constexpr int io = 4;
}  // namespace exit_code

inline constexpr int schema_version = 1;

struct DiagnosticsConfig {
  bool cf = true;
  bool ks = true;
  bool tailFit = false;
  bool hill = false;
  bool dependence = false;
  bool jointJumps = false;
  bool cluster = false;
  bool trend = false;
  std::uint64_t referenceDraws = 1'000'000;
  std::uint64_t tailFitDraws = 1'000'000;
  std::uint64_t permutations = 10'000;
  double jumpDelta = 0.1;
  std::uint64_t clusterDraws = 20'000'000;
};

struct ExperimentConfig {
  Polynomial F = Polynomial::linear(1);
  TailSpec tail{};
  std::vector<TailSpec> tails;  // per variable; empty means all equal tail
  BodyKind body = BodyKind::uniform;
  QCase qcase = QCase::ldep;
  std::vector<std::uint64_t> N{1000};
  double T = 1.0;
  std::uint64_t R = 10;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string output;
  std::vector<std::uint64_t> kBlocks;
  std::vector<std::size_t> q;
  std::vector<double> probes;
  std::uint64_t normDraws = 10'000'000;
  std::uint64_t keepPaths = 1;
  DiagnosticsConfig diagnostics;
  std::string study;
  ojson studyParams = ojson::object();

  std::vector<TailSpec> variable_tails() const {
    return tails.empty() ? std::vector<TailSpec>(F.arity, tail) : tails;
  }
  std::vector<TailedDistribution> dists() const {
    BodyConfig b;
    b.kind = body;
    std::vector<TailedDistribution> out;
    for (const auto& t : variable_tails()) out.emplace_back(t, b);
    return out;
  }
  HeavyTailSampler sampler() const {
    BodyConfig b;
    b.kind = body;
    return build_sampler(tail, b, seed);
  }
  std::vector<double> probe_times() const {
    return probes.empty() ? std::vector<double>{0.25 * T, 0.5 * T, T} : probes;
  }
};

namespace detail {

[[noreturn]] inline void bad_config(const std::string& m) {
  throw InvalidArgument("config: " + m);
}

inline void only_keys(const ojson& j, const std::set<std::string>& allowed,
                      const std::string& where) {
  if (!j.is_object()) bad_config(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) bad_config("unknown key '" + k + "' in " + where);
}

template <class T>
T get_or(const ojson& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_config(std::string("key '") + key + "' has the wrong type");
  }
}

inline std::uint64_t get_count(const ojson& j, const char* key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  bad_config(std::string("key '") + key + "' must be a nonnegative integer");
}

inline TailSpec parse_tail(const ojson& j, const std::string& where) {
  only_keys(j, {"alpha", "k", "c_plus", "c_minus"}, where);
  TailSpec t;
  t.alpha = get_or(j, "alpha", t.alpha);
  t.k = get_or(j, "k", t.k);
  t.cPlus = get_or(j, "c_plus", t.cPlus);
  t.cMinus = get_or(j, "c_minus", t.cMinus);
  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    bad_config(where + ": " + e.what());
  }
  return t;
}

inline ojson tail_json(const TailSpec& t) {
  return ojson{{"alpha", t.alpha}, {"k", t.k}, {"c_plus", t.cPlus}, {"c_minus", t.cMinus}};
}

inline Polynomial parse_polynomial(const ojson& j) {
  only_keys(j, {"arity", "linear", "terms", "nonnegative"}, "polynomial");
  if (j.contains("linear")) {
    if (j.contains("terms")) bad_config("polynomial: give either linear or terms");
    return Polynomial::linear(get_count(j, "linear", 1));
  }
  if (!j.contains("terms") || !j.at("terms").is_array())
    bad_config("polynomial: terms must be a list");
  std::vector<Monomial> terms;
  for (const auto& t : j.at("terms")) {
    only_keys(t, {"exponents", "coefficient"}, "polynomial term");
    Monomial m;
    m.exponents = get_or(t, "exponents", std::vector<double>{});
    m.coefficient = get_or(t, "coefficient", 1.0);
    terms.push_back(std::move(m));
  }
  const std::size_t arity = get_count(j, "arity", terms.empty() ? 1 : terms[0].exponents.size());
  try {
    return Polynomial::make(arity, std::move(terms), get_or(j, "nonnegative", false));
  } catch (const InvalidArgument& e) {
    bad_config(e.what());
  }
}

inline ojson polynomial_json(const Polynomial& F) {
  ojson terms = ojson::array();
  for (const auto& m : F.terms)
    terms.push_back(ojson{{"exponents", m.exponents}, {"coefficient", m.coefficient}});
  return ojson{{"arity", F.arity}, {"terms", terms}, {"nonnegative", F.nonnegativeVariables}};
}

}  // namespace detail

/// Parses and validates a configuration; unknown keys are rejected.
inline ExperimentConfig parse_config(const ojson& j) {
  using namespace detail;
  only_keys(j, {"schema_version", "polynomial", "tail", "tails", "body", "qcase", "N", "T",
                "R", "seed", "threads", "output", "k_blocks", "q", "probes", "norm_draws",
                "keep_paths", "diagnostics", "study", "study_params"},
            "config");
  if (!j.contains("schema_version")) bad_config("schema_version is required");
  if (get_count(j, "schema_version", 0) != schema_version)
    bad_config("unsupported schema_version");
  ExperimentConfig c;
  if (j.contains("polynomial")) c.F = parse_polynomial(j.at("polynomial"));
  if (j.contains("tail")) c.tail = parse_tail(j.at("tail"), "tail");
  if (j.contains("tails")) {
    if (!j.at("tails").is_array()) bad_config("tails must be a list");
    for (const auto& t : j.at("tails")) c.tails.push_back(parse_tail(t, "tails[]"));
    if (c.tails.size() != c.F.arity) bad_config("tails length must equal polynomial arity");
  }
  const auto body = get_or<std::string>(j, "body", "uniform");
  if (body == "uniform") c.body = BodyKind::uniform;
  else if (body == "triangular") c.body = BodyKind::triangular;
  else bad_config("body must be uniform or triangular");
  const auto q = get_or<std::string>(j, "qcase", "ldep");
  if (q == "ldep") c.qcase = QCase::ldep;
  else if (q == "arith_prog") c.qcase = QCase::arith_prog;
  else bad_config("qcase must be ldep or arith_prog");
  if (j.contains("N")) {
    c.N.clear();
    if (j.at("N").is_array()) {
      for (std::size_t i = 0; i < j.at("N").size(); ++i) {
        ojson tmp{{"N", j.at("N")[i]}};
        c.N.push_back(get_count(tmp, "N", 0));
      }
    } else {
      c.N.push_back(get_count(j, "N", 0));
    }
    if (c.N.empty()) bad_config("N must not be empty");
    for (auto n : c.N)
      if (n < 2) bad_config("N must be >= 2");
  }
  c.T = get_or(j, "T", c.T);
  if (!(c.T > 0.0) || !std::isfinite(c.T)) bad_config("T must be > 0");
  c.R = get_count(j, "R", c.R);
  if (c.R < 1) bad_config("R must be >= 1");
  c.seed = get_count(j, "seed", c.seed);
  c.threads = static_cast<unsigned>(get_count(j, "threads", c.threads));
  if (c.threads < 1) bad_config("threads must be >= 1");
  c.output = get_or<std::string>(j, "output", c.output);
  c.kBlocks = get_or(j, "k_blocks", c.kBlocks);
  for (auto k : c.kBlocks)
    if (k < 1) bad_config("k_blocks entries must be >= 1");
  c.q = get_or(j, "q", c.q);
  for (auto v : c.q)
    if (v < 1) bad_config("q entries must be >= 1");
  c.probes = get_or(j, "probes", c.probes);
  for (double t : c.probes)
    if (!(t >= 0.0 && t <= c.T)) bad_config("probes must lie in [0, T]");
  c.normDraws = get_count(j, "norm_draws", c.normDraws);
  c.keepPaths = get_count(j, "keep_paths", c.keepPaths);
  if (j.contains("diagnostics")) {
    const auto& d = j.at("diagnostics");
    only_keys(d, {"cf", "ks", "tail_fit", "hill", "dependence", "joint_jumps", "cluster",
                  "trend", "reference_draws", "tail_fit_draws", "permutations",
                  "jump_delta", "cluster_draws"},
              "diagnostics");
    auto& g = c.diagnostics;
    g.cf = get_or(d, "cf", g.cf);
    g.ks = get_or(d, "ks", g.ks);
    g.tailFit = get_or(d, "tail_fit", g.tailFit);
    g.hill = get_or(d, "hill", g.hill);
    g.dependence = get_or(d, "dependence", g.dependence);
    g.jointJumps = get_or(d, "joint_jumps", g.jointJumps);
    g.cluster = get_or(d, "cluster", g.cluster);
    g.trend = get_or(d, "trend", g.trend);
    g.referenceDraws = get_count(d, "reference_draws", g.referenceDraws);
    g.tailFitDraws = get_count(d, "tail_fit_draws", g.tailFitDraws);
    g.permutations = get_count(d, "permutations", g.permutations);
    g.jumpDelta = get_or(d, "jump_delta", g.jumpDelta);
    g.clusterDraws = get_count(d, "cluster_draws", g.clusterDraws);
    if (!(g.jumpDelta > 0.0)) bad_config("diagnostics.jump_delta must be > 0");
    if (g.cluster && c.qcase != QCase::ldep)
      bad_config("diagnostics.cluster requires qcase ldep");
  }
  c.study = get_or<std::string>(j, "study", c.study);
  if (j.contains("study_params")) {
    if (!j.at("study_params").is_object()) bad_config("study_params must be an object");
    c.studyParams = j.at("study_params");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open config " + path);
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("config: not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Normalized echo of everything that determines results. Output directory
/// and thread count are left out: they never change a payload.
inline ojson config_echo(const ExperimentConfig& c) {
  ojson tails = ojson::array();
  for (const auto& t : c.variable_tails()) tails.push_back(detail::tail_json(t));
  ojson d{{"cf", c.diagnostics.cf},
          {"ks", c.diagnostics.ks},
          {"tail_fit", c.diagnostics.tailFit},
          {"hill", c.diagnostics.hill},
          {"dependence", c.diagnostics.dependence},
          {"joint_jumps", c.diagnostics.jointJumps},
          {"cluster", c.diagnostics.cluster},
          {"trend", c.diagnostics.trend},
          {"reference_draws", c.diagnostics.referenceDraws},
          {"tail_fit_draws", c.diagnostics.tailFitDraws},
          {"permutations", c.diagnostics.permutations},
          {"jump_delta", c.diagnostics.jumpDelta},
          {"cluster_draws", c.diagnostics.clusterDraws}};
  ojson e{{"schema_version", schema_version},
          {"polynomial", detail::polynomial_json(c.F)},
          {"tail", detail::tail_json(c.tail)},
          {"tails", tails},
          {"body", c.body == BodyKind::uniform ? "uniform" : "triangular"},
          {"qcase", to_string(c.qcase)},
          {"N", c.N},
          {"T", c.T},
          {"R", c.R},
          {"seed", c.seed},
          {"k_blocks", c.kBlocks},
          {"q", c.q},
          {"probes", c.probe_times()},
          {"norm_draws", c.normDraws},
          {"keep_paths", c.keepPaths},
          {"diagnostics", d}};
  if (!c.study.empty()) {
    e["study"] = c.study;
    e["study_params"] = c.studyParams;
  }
  return e;
}

/// %.17g, which round-trips every double.
inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Tidy CSV: a '# config:' echo line, a header, then rows.
class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, const ojson& echo,
            const std::vector<std::string>& header)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoFailure("cannot write " + path.string());
    out_ << "# config: " << echo.dump() << "\n";
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << "\n";
    width_ = header.size();
  }

  void row(const std::vector<double>& v) {
    if (v.size() != width_) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << num(v[i]);
    out_ << "\n";
  }

  /// Row whose leading cells are text (labels, exact integers).
  void row(const std::vector<std::string>& lead, const std::vector<double>& v) {
    if (v.size() + lead.size() != width_) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < lead.size(); ++i) out_ << (i ? "," : "") << lead[i];
    for (double x : v) out_ << "," << num(x);
    out_ << "\n";
  }

  void close() {
    out_.flush();
    if (!out_) throw IoFailure("write failed for " + path_.string());
    out_.close();
  }

private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_ = 0;
};

inline void write_json(const std::filesystem::path& path, const ojson& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoFailure("write failed for " + path.string());
}

/// Output directory: explicit value, else $NONCONV_OUT, else ./nonconv_out.
inline std::filesystem::path output_dir(const std::string& explicitDir) {
  std::string d = explicitDir;
  if (d.empty())
    if (const char* env = std::getenv("NONCONV_OUT")) d = env;
  if (d.empty()) d = "nonconv_out";
  std::error_code ec;
  std::filesystem::create_directories(d, ec);
  if (ec) throw IoFailure("cannot create output directory " + d + ": " + ec.message());
  return d;
}

/// Everything one run wrote, plus in-memory results for plot emission.
struct ReportBundle {
  std::filesystem::path dir;
  ojson manifest = ojson::object();
  ojson summaries = ojson::object();  // per stage
  std::vector<std::string> files;
  ojson echo;
  // retained for emit_plot_data
  std::optional<TailFit> tailFit;
  std::vector<CfRow> cfRows;
  std::optional<PathBundle> samplePath;
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> trends;
};

// ---------------------------------------------------------------- stages

inline ojson index_json(const IndexSummary& s, const Polynomial& F) {
  ojson per = ojson::array();
  for (std::size_t t = 0; t < s.perTheta.size(); ++t) {
    const auto& x = s.perTheta[t];
    ojson r{{"term", to_string(F.terms[t])},
            {"coefficient", F.terms[t].coefficient},
            {"alpha", x.alpha},
            {"J", x.J},
            {"p", x.p},
            {"k", x.k}};
    if (s.iid) r["sigma"] = x.sigma;
    per.push_back(r);
  }
  ojson o{{"per_theta", per},
          {"alpha_star", s.alphaStar},
          {"k_star", s.kStar},
          {"theta_star", s.thetaStar},
          {"m_star", s.mStar}};
  if (s.iid) {
    o["sigma_star"] = s.sigmaStar;
    o["p_star"] = s.pStar;
    o["p_star_consistent"] = s.pStarConsistent;
  }
  return o;
}

inline IndexSummary config_summary(const ExperimentConfig& c) {
  if (c.tails.empty()) return iid_index_summary(c.F, c.tail.alpha, c.tail.k);
  std::vector<IndexTail> it;
  for (const auto& t : c.tails) it.push_back({t.alpha, t.k});
  return general_index_summary(c.F, it);
}

inline ojson run_indices(const ExperimentConfig& c) {
  const auto s = config_summary(c);
  ojson o = index_json(s, c.F);
  const auto sv = shift_condition(s);
  const auto sc = scale_condition(s);
  o["shift_condition"] = sv ? ojson{{"holds", false},
                                    {"theta1", sv->theta1},
                                    {"theta2", sv->theta2},
                                    {"r", sv->r}}
                            : ojson{{"holds", true}};
  o["scale_condition"] = sc ? ojson{{"holds", false},
                                    {"theta1", sc->theta1},
                                    {"theta2", sc->theta2},
                                    {"r", std::to_string(sc->r.num) + "/" +
                                              std::to_string(sc->r.den)}}
                            : ojson{{"holds", true}};
  return o;
}

inline ojson run_tails(const ExperimentConfig& c) {
  const auto ds = c.dists();
  ojson terms = ojson::array();
  for (const auto& m : c.F.terms)
    terms.push_back(ojson{{"term", to_string(m)}, {"tail", detail::tail_json(monomial_tail(ds, m))}});
  PolynomialTailOptions opt;
  opt.seed = derive_seed(c.seed, 0x7461696cull);
  opt.draws = c.normDraws;
  const auto pt = polynomial_tail(ds, c.F, opt);
  ojson groups = ojson::array();
  for (const auto& g : pt.groups)
    groups.push_back(ojson{{"J", g.J},
                           {"thetas", g.thetas},
                           {"v_tail", detail::tail_json(g.vTail)},
                           {"w_plus", g.w.plus},
                           {"w_minus", g.w.minus},
                           {"w_plus_stderr", g.wStderr.plus},
                           {"w_minus_stderr", g.wStderr.minus},
                           {"monte_carlo", g.monteCarlo},
                           {"c_plus", g.cPlus},
                           {"c_minus", g.cMinus}});
  ojson joint = ojson::array();
  for (std::size_t a = 0; a < c.F.terms.size(); ++a)
    for (std::size_t b = a + 1; b < c.F.terms.size(); ++b)
      joint.push_back(ojson{{"theta1", a},
                            {"theta2", b},
                            {"vanishes", joint_tail_vanishes(ds, c.F.terms[a], c.F.terms[b])}});
  ojson thresholds = ojson::array();
  for (const auto& d : ds)
    thresholds.push_back(ojson{{"x0", d.threshold()},
                               {"tail_mass", d.tail_mass_plus() + d.tail_mass_minus()}});
  return ojson{{"variables", thresholds},
               {"monomials", terms},
               {"polynomial", detail::tail_json(pt.tail)},
               {"groups", groups},
               {"joint_tail", joint}};
}

inline ojson run_decompose(const ExperimentConfig& c) {
  const auto s = config_summary(c);
  const int ell = static_cast<int>(c.F.arity);
  const std::uint64_t M = detail::grid_count(c.N.front(), c.T);
  const auto g = gamma_decomposition(ell, std::max<std::uint64_t>(M, 1));
  const auto col = conflict_coloring(ell, std::max<std::uint64_t>(M, 1));
  const std::size_t q = c.q.empty() ? std::min<std::size_t>(8, g.gamma1.size())
                                    : std::min(c.q.front(), g.gamma1.size());
  const auto part = equivalence_classes(g, s, q);
  ojson classes = ojson::array();
  for (const auto& cl : part.classes) {
    ojson members = ojson::array();
    for (const auto& m : cl) members.push_back(ojson{{"j", m.j}, {"n", m.n}, {"theta", m.theta}});
    classes.push_back(members);
  }
  std::vector<std::uint64_t> g1(g.gamma1.begin(),
                                g.gamma1.begin() + static_cast<std::ptrdiff_t>(
                                                       std::min<std::size_t>(g.gamma1.size(), 64)));
  const auto plan = rearrangement_plan(s);
  return ojson{{"ell", ell},
               {"primes", g.primes},
               {"rho", g.rho},
               {"bound", g.bound},
               {"gamma1_size", g.gamma1.size()},
               {"gamma1_head", g1},
               {"coloring", ojson{{"colors", col.colorCount},
                                  {"limit", ell * ell + 1},
                                  {"verified", verify_coloring(col)}}},
               {"q", q},
               {"classes", classes},
               {"all_singletons", part.allSingletons},
               {"rearrangement", ojson{{"families", plan.families}, {"offset", plan.offset}}}};
}

/// Normalization pair for the configured sampler at N.
inline NormalizationPair config_normalization(const ExperimentConfig& c, std::uint64_t N) {
  const auto s = iid_index_summary(c.F, c.tail.alpha, c.tail.k);
  const std::vector<TailedDistribution> ds(c.F.arity, c.sampler().dist());
  return normalization(s, static_cast<double>(N), ds, c.F, derive_seed(c.seed, 0x6e6f726dull),
                       c.normDraws);
}

inline void require_iid(const ExperimentConfig& c) {
  for (const auto& t : c.tails)
    if (!(t == c.tail))
      throw InvalidArgument("config: simulation needs one tail for the whole sequence; "
                            "per-variable tails are for the tails and indices commands");
}

inline ojson norm_json(const NormalizationPair& p) {
  return ojson{{"N", p.N}, {"b_N", p.bN}, {"a_N", p.aN}, {"a_N_stderr", p.aNStderr}};
}

struct SimulationStage {
  Ensemble ensemble;
  NormalizationPair norm;
  ojson summary;
};

inline SimulationStage run_simulate(const ExperimentConfig& c, ReportBundle& rb) {
  require_iid(c);
  const std::uint64_t N = c.N.front();
  SimulationStage st;
  st.norm = config_normalization(c, N);
  EnsembleConfig ec{c.F, c.qcase, N, c.T, c.sampler(), st.norm, c.seed, c.probe_times(),
                    std::max<std::uint64_t>(c.keepPaths, 1), c.threads};
  st.ensemble = replicate_ensemble(ec, c.R);
  const auto& e = st.ensemble;

  std::vector<std::string> header{"replicate", "seed"};
  for (std::size_t t = 0; t < c.F.terms.size(); ++t) header.push_back("xi_theta" + std::to_string(t));
  header.push_back("xi");
  for (std::size_t t = 0; t < c.F.terms.size(); ++t) header.push_back("S_theta" + std::to_string(t));
  for (std::size_t i = 0; i < c.probe_times().size(); ++i) header.push_back("xi_probe" + std::to_string(i));
  CsvWriter w(rb.dir / "ensemble.csv", rb.echo, header);
  for (std::size_t r = 0; r < e.endValues.size(); ++r) {
    std::vector<double> row(e.endValues[r]);
    row.insert(row.end(), e.rawEnd[r].begin(), e.rawEnd[r].end());
    row.insert(row.end(), e.probeValues[r].begin(), e.probeValues[r].end());
    w.row({std::to_string(r), std::to_string(e.seeds[r])}, row);
  }
  w.close();
  rb.files.push_back("ensemble.csv");
  rb.samplePath = e.paths.front();

  const double gap = static_cast<double>(N) * c.T - std::floor(static_cast<double>(N) * c.T);
  double amax = 0.0;
  for (double a : st.norm.aN) amax = std::max(amax, std::abs(a));
  st.summary = ojson{{"N", N},
                     {"T", c.T},
                     {"R", c.R},
                     {"qcase", to_string(c.qcase)},
                     {"scheme", HeavyTailSampler::scheme},
                     {"seed", c.seed},
                     {"threshold", c.sampler().threshold()},
                     {"normalization", norm_json(st.norm)},
                     {"centering_gap_bound", gap * amax / st.norm.bN}};
  return st;
}

/// Limit law for the configured F: tail constants of F(X) unless the
/// cluster route is requested.
inline LevyLimit config_limit(const ExperimentConfig& c, const NormalizationPair& norm) {
  const auto s = iid_index_summary(c.F, c.tail.alpha, c.tail.k);
  if (c.diagnostics.cluster) {
    ClusterOptions opt;
    opt.drawsPerLevel = c.diagnostics.clusterDraws;
    opt.seed = derive_seed(c.seed, 0x636c7573ull);
    opt.threads = c.threads;
    if (!c.kBlocks.empty()) opt.kBlocks = c.kBlocks;
    return build_levy_limit(c.F, c.N.front(), c.sampler(), norm, s.alphaStar, opt);
  }
  PolynomialTailOptions opt;
  opt.seed = derive_seed(c.seed, 0x7461696cull);
  opt.draws = c.normDraws;
  const auto pt = polynomial_tail(c.dists(), c.F, opt);
  return build_levy_limit(pt.tail);
}

inline ojson run_diagnose(const ExperimentConfig& c, const SimulationStage& sim,
                          ReportBundle& rb) {
  const auto& e = sim.ensemble;
  const auto& g = c.diagnostics;
  ojson out = ojson::object();
  std::vector<double> xi;
  for (const auto& v : e.endValues) xi.push_back(v.back());
  std::optional<LevyLimit> limit;
  if (g.cf || g.ks) limit = config_limit(c, sim.norm);
  if (limit) {
    ojson l{{"alpha", limit->alpha},
            {"kind", limit->kind == MeasureKind::power_law ? "power_law" : "cluster_estimate"},
            {"c_plus", limit->cPlus},
            {"c_minus", limit->cMinus},
            {"gamma", limit->gamma}};
    if (limit->kind == MeasureKind::cluster_estimate) {
      ojson lv = ojson::array();
      for (const auto& x : limit->levels)
        lv.push_back(ojson{{"k_block", x.kBlock},
                           {"blocks", x.blocks},
                           {"c_plus", x.cPlus},
                           {"c_minus", x.cMinus},
                           {"c_plus_stderr", x.cPlusStderr},
                           {"c_minus_stderr", x.cMinusStderr},
                           {"gamma", x.gamma},
                           {"exceedances", x.exceedances}});
      l["levels"] = lv;
      l["c_plus_extrapolated"] = limit->cPlusExtrapolated;
      l["c_minus_extrapolated"] = limit->cMinusExtrapolated;
    }
    out["limit"] = l;
  }
  if (g.cf) {
    rb.cfRows = cf_grid(xi, *limit, c.T, default_cf_grid());
    double d = 0.0;
    for (const auto& r : rb.cfRows) d = std::max(d, std::abs(r.empirical - r.theory));
    out["cf_distance"] = d;
    out["cf_sampling_band"] = 2.0 / std::sqrt(double(xi.size()));
  }
  if (g.ks) {
    if (limit->kind != MeasureKind::power_law || limit->gamma != 0.0) {
      out["ks_reference"] = "skipped: reference sampler needs a power-law limit without drift";
    } else {
      // Xi(T) has exponent T psi: scale constants by T
      const auto ref = stable_reference_sampler(limit->alpha, c.T * limit->cPlus,
                                                c.T * limit->cMinus,
                                                derive_seed(c.seed, 0x72656675ull));
      std::vector<double> v(g.referenceDraws);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = ref.draw(i);
      out["ks_reference"] = ks_two_sample(xi, v);
      out["reference_draws"] = g.referenceDraws;
    }
  }
  if (g.tailFit || g.hill) {
    std::vector<double> z(g.tailFitDraws);
    const auto ds = c.dists();
    std::vector<CounterRng> rngs;
    for (std::size_t j = 0; j < c.F.arity; ++j)
      rngs.emplace_back(derive_seed(c.seed, 0x66697421ull), variable_stream(Stream::variable, j));
    std::vector<double> x(c.F.arity);
    for (std::size_t i = 0; i < z.size(); ++i) {
      for (std::size_t j = 0; j < c.F.arity; ++j) x[j] = ds[j].quantile(rngs[j].uniform(i));
      z[i] = c.F.evaluate(x);
    }
    if (g.tailFit) {
      const auto fit = tail_fit(z, Side::plus);
      out["tail_fit"] = ojson{{"samples", z.size()},
                              {"alpha", fit.alphaHat},
                              {"alpha_stderr", fit.alphaStderr},
                              {"k", fit.kHat},
                              {"k_stderr", fit.kStderr},
                              {"c", fit.cHat},
                              {"c_stderr", fit.cStderr}};
      rb.tailFit = fit;
    }
    if (g.hill) {
      const auto h = hill(z);
      out["hill"] = ojson{{"alpha", h.degenerate ? ojson("inf") : ojson(h.alpha)},
                          {"m", h.m},
                          {"degenerate", h.degenerate}};
    }
  }
  if (g.dependence) {
    const auto t = c.probe_times();
    if (t.size() < 3) throw InvalidArgument("dependence test needs three probe times");
    const auto a = probe_increments(e, 0, 1), b = probe_increments(e, 1, 2);
    const auto d = increment_dependence(a, b, g.permutations, derive_seed(c.seed, 0x70657266ull),
                                        c.threads);
    out["dependence"] = ojson{{"window_a", {t[0], t[1]}},
                              {"window_b", {t[1], t[2]}},
                              {"statistic", d.statistic},
                              {"dcov2", d.dcov2},
                              {"p_value", d.pValue},
                              {"permutations", d.permutations},
                              {"clip_a", d.clipA},
                              {"clip_b", d.clipB}};
  }
  if (g.jointJumps) {
    if (c.F.terms.size() < 2) throw InvalidArgument("joint_jumps needs at least two terms");
    const auto js = joint_jump_scan(e.paths, 0, 1, g.jumpDelta);
    out["joint_jumps"] = ojson{{"delta", g.jumpDelta},
                               {"replicates", js.R},
                               {"simultaneous_rate", js.rate(js.simultaneous)},
                               {"adjacent_rate", js.rate(js.adjacent)},
                               {"single_rate_1", js.rate(js.single1)},
                               {"single_rate_2", js.rate(js.single2)}};
  }
  if (g.trend) {
    std::vector<std::pair<double, double>> pts;
    ojson rows = ojson::array();
    for (auto N : c.N) {
      const auto p = config_normalization(c, N);
      ojson r{{"N", N}, {"b_N", p.bN}};
      ojson ratios = ojson::array();
      for (std::size_t t = 0; t < p.aN.size(); ++t) ratios.push_back(p.aN[t] / p.bN);
      r["a_N_over_b_N"] = ratios;
      rows.push_back(r);
      pts.emplace_back(double(N), p.aN.front() / p.bN);
    }
    rb.trends.emplace_back("a_N_over_b_N:theta0", pts);
    out["trend"] = rows;
  }
  return out;
}

/// Plot-ready CSV for one kind: tail-ladder, cf-grid, path-sample, trend.
inline std::string emit_plot_data(ReportBundle& rb, const std::string& kind) {
  std::string name;
  if (kind == "tail-ladder") {
    if (!rb.tailFit) throw InvalidArgument("emit_plot_data: bundle has no tail_fit result");
    name = "tail_ladder.csv";
    CsvWriter w(rb.dir / name, rb.echo, {"z", "empirical_survival", "fitted_survival"});
    for (std::size_t i = 0; i < rb.tailFit->thresholds.size(); ++i)
      w.row({rb.tailFit->thresholds[i], rb.tailFit->empirical[i], rb.tailFit->fitted[i]});
    w.close();
  } else if (kind == "cf-grid") {
    if (rb.cfRows.empty()) throw InvalidArgument("emit_plot_data: bundle has no cf grid");
    name = "cf_grid.csv";
    CsvWriter w(rb.dir / name, rb.echo, {"xi", "re_emp", "im_emp", "re_theory", "im_theory"});
    for (const auto& r : rb.cfRows)
      w.row({r.xi, r.empirical.real(), r.empirical.imag(), r.theory.real(), r.theory.imag()});
    w.close();
  } else if (kind == "path-sample") {
    if (!rb.samplePath) throw InvalidArgument("emit_plot_data: bundle has no stored path");
    name = "path_sample.csv";
    CsvWriter w(rb.dir / name, rb.echo, {"t", "value"});
    const auto& p = rb.samplePath->sum;
    for (std::size_t m = 0; m < p.values.size(); ++m)
      w.row({static_cast<double>(m) / static_cast<double>(p.gridN), p.values[m]});
    w.close();
  } else if (kind == "trend") {
    if (rb.trends.empty()) throw InvalidArgument("emit_plot_data: bundle has no trend");
    name = "trend.csv";
    CsvWriter w(rb.dir / name, rb.echo, {"series", "x", "value"});
    for (const auto& [series, pts] : rb.trends)
      for (const auto& [x, v] : pts) w.row({series}, {x, v});
    w.close();
  } else {
    throw InvalidArgument("emit_plot_data: unknown kind '" + kind + "'");
  }
  rb.files.push_back(name);
  return name;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline ReportBundle open_bundle(const ExperimentConfig& c) {
  ReportBundle rb;
  rb.dir = output_dir(c.output);
  rb.echo = config_echo(c);
  return rb;
}

/// Writes one stage summary as <stage>.json and records it.
inline void write_stage(ReportBundle& rb, const std::string& stage, const ojson& payload) {
  rb.summaries[stage] = payload;
  write_json(rb.dir / (stage + ".json"), ojson{{"config", rb.echo}, {stage, payload}});
  rb.files.push_back(stage + ".json");
}

inline void write_manifest(ReportBundle& rb, const std::string& command, double seconds) {
  rb.manifest = ojson{{"tool", "nonconv"},
                      {"version", "1.0.0"},
                      {"command", command},
                      {"config", rb.echo},
                      {"seed", rb.echo.value("seed", std::uint64_t{0})},
                      {"scheme", HeavyTailSampler::scheme},
                      {"compiler", __VERSION__},
                      {"files", rb.files},
                      {"created_utc", utc_timestamp()},
                      {"wall_seconds", seconds}};
  write_json(rb.dir / "manifest.json", rb.manifest);
}

/// indices -> tails -> simulate -> diagnostics, with plot data.
inline ReportBundle run_experiment(const ExperimentConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  auto rb = open_bundle(c);
  write_stage(rb, "indices", run_indices(c));
  write_stage(rb, "tails", run_tails(c));
  auto sim = run_simulate(c, rb);
  write_stage(rb, "simulate", sim.summary);
  write_stage(rb, "diagnose", run_diagnose(c, sim, rb));
  emit_plot_data(rb, "path-sample");
  if (!rb.cfRows.empty()) emit_plot_data(rb, "cf-grid");
  if (rb.tailFit) emit_plot_data(rb, "tail-ladder");
  if (!rb.trends.empty()) emit_plot_data(rb, "trend");
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(rb, "report", secs);
  return rb;
}

}  // namespace nonconv
