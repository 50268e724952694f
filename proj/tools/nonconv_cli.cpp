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

// nonconv command line: tails, indices, decompose, simulate, diagnose, report.

#include <chrono>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nonconv/experiment.hpp"
#include "nonconv/studies.hpp"

namespace {

using namespace nonconv;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 0;
  std::vector<std::string> plots;
};

ExperimentConfig prepare(const Common& o, CLI::App* sub) {
  auto c = load_config(o.config);
  if (sub->count("--seed")) c.seed = o.seed;
  if (sub->count("--out")) c.output = o.out;
  if (sub->count("--threads")) {
    if (o.threads < 1) throw InvalidArgument("--threads must be >= 1");
    c.threads = o.threads;
  }
  return c;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void emit_requested(ReportBundle& rb, const std::vector<std::string>& kinds) {
  for (const auto& k : kinds) {
    // run_experiment may already have written it; rewriting is harmless
    const auto name = emit_plot_data(rb, k);
    std::cout << "wrote " << (rb.dir / name).string() << "\n";
  }
}

int dispatch(const std::string& cmd, const Common& o, CLI::App* sub) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = prepare(o, sub);
  if (cmd == "report" && !c.study.empty()) {
    auto rb = open_bundle(c);
    const auto res = run_study(c);
    write_stage(rb, "study", ojson{{"name", c.study}, {"result", res.payload}});
    write_manifest(rb, cmd, since(t0));
    std::cout << c.study << ": " << (res.pass ? "PASS" : "FAIL") << " " << res.line << "\n";
    return exit_code::ok;
  }
  if (cmd == "report") {
    auto rb = run_experiment(c);
    emit_requested(rb, o.plots);
    if (!o.plots.empty()) write_manifest(rb, cmd, since(t0));
    std::cout << "report written to " << rb.dir.string() << "\n";
    return exit_code::ok;
  }
  auto rb = open_bundle(c);
  if (cmd == "tails" || cmd == "indices" || cmd == "decompose") {
    const auto j = cmd == "tails" ? run_tails(c) : cmd == "indices" ? run_indices(c) : run_decompose(c);
    write_stage(rb, cmd, j);
    std::cout << j.dump(2) << "\n";
  } else {
    auto sim = run_simulate(c, rb);
    write_stage(rb, "simulate", sim.summary);
    if (cmd == "diagnose") write_stage(rb, "diagnose", run_diagnose(c, sim, rb));
    emit_requested(rb, o.plots);
    std::cout << (cmd == "diagnose" ? rb.summaries["diagnose"] : sim.summary).dump(2) << "\n";
  }
  write_manifest(rb, cmd, since(t0));
  return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonconv: heavy-tailed polynomial sums and their limits"};
  app.require_subcommand(1);
  Common o;
  const std::vector<std::pair<std::string, std::string>> cmds{
      {"tails", "tail constants of F(X), monomials and groups"},
      {"indices", "index summary and the shift/scale conditions"},
      {"decompose", "Gamma decomposition, coloring and equivalence classes"},
      {"simulate", "replicate ensemble; writes ensemble.csv"},
      {"diagnose", "simulate, then the configured diagnostics"},
      {"report", "full pipeline with plot data, or a named study"}};
  for (const auto& [name, help] : cmds) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--config", o.config, "JSON config file")->required();
    s->add_option("--seed", o.seed, "master seed (overrides the config)");
    s->add_option("--out", o.out, "output directory (else $NONCONV_OUT, else ./nonconv_out)");
    s->add_option("--threads", o.threads, "worker threads; never changes results");
    if (name == "simulate" || name == "diagnose" || name == "report")
      s->add_option("--plot", o.plots, "plot data: tail-ladder, cf-grid, path-sample, trend")
          ->check(CLI::IsMember({"tail-ladder", "cf-grid", "path-sample", "trend"}));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : nonconv::exit_code::invalid;
  }
  CLI::App* sub = app.get_subcommands().front();
  try {
    return dispatch(sub->get_name(), o, sub);
  } catch (const nonconv::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nonconv::exit_code::invalid;
  } catch (const nonconv::UndefinedMoment& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return nonconv::exit_code::numeric;
  } catch (const nonconv::NumericFailure& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return nonconv::exit_code::numeric;
  } catch (const nonconv::IoFailure& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return nonconv::exit_code::io;
  }
}
