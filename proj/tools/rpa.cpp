/* Copyright 2026 The rpasynth Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// rpa: command-line front end (synth, predict, bench, gen-fixtures, serve).

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "rpa/harness.hpp"
#include "rpa/http.hpp"
#include "rpa/service.hpp"
#include "rpa/synth.hpp"

namespace fs = std::filesystem;
using namespace rpa;

namespace {

struct SynthFlags {
  std::string trace;
  std::string data;
  int timeout_ms = 1000;
  bool no_selector = false;
  bool no_incremental = false;
  int top = 5;
};

SynthOptions options_of(const SynthFlags& f) {
  SynthOptions o;
  o.budget = std::chrono::milliseconds(f.timeout_ms);
  o.selector_search = !f.no_selector;
  return o;
}

// Incremental mode feeds the trace one action at a time, as the interactive
// loop would; otherwise a single call sees the whole trace.
SynthResult run_synth(const SynthFlags& f) {
  Recording r = recording_from_json(read_json(f.trace));
  if (!f.data.empty()) r.input = read_json(f.data);
  if (r.actions.empty()) throw std::invalid_argument("trace has no actions");
  auto opt = options_of(f);
  if (f.no_incremental) return synthesize(r.actions, r.doms, r.input, opt);
  std::shared_ptr<SynthState> st;
  SynthResult res;
  for (std::size_t k = 1; k <= r.actions.size(); ++k) {
    ActionTrace A(r.actions.begin(), r.actions.begin() + static_cast<std::ptrdiff_t>(k));
    DomTrace pi(r.doms.begin(), r.doms.begin() + static_cast<std::ptrdiff_t>(k + 1));
    res = synthesize(A, pi, r.input, opt, &st);
  }
  return res;
}

void print_predictions(const SynthResult& res) {
  if (res.predictions.empty()) {
    std::cout << "no prediction\n";
    return;
  }
  for (const auto& p : res.predictions) std::cout << serialize(p.action) << "\n";
}

std::vector<std::pair<Fixture, fs::path>> load_fixtures(const fs::path& dir) {
  std::vector<std::pair<Fixture, fs::path>> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto n = e.path().filename().string();
    if (n.size() > 13 && n.substr(n.size() - 13) == ".fixture.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    Fixture fx = fixture_from_json(read_json(f));
    out.emplace_back(std::move(fx), dir / (fx.name + ".trace.json"));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"web RPA synthesis from demonstrations"};
  app.require_subcommand(1);

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "print ranked programs and predictions for a trace file");
  auto* predict = app.add_subcommand("predict", "print the deduplicated next-action predictions");
  for (auto* c : {synth, predict}) {
    c->add_option("trace", sf.trace, "trace file {input_data, actions, doms}")->required()->check(CLI::ExistingFile);
    c->add_option("--data", sf.data, "input data JSON (overrides the trace's)")->check(CLI::ExistingFile);
    c->add_option("--timeout", sf.timeout_ms, "synthesis budget per call, ms")->check(CLI::PositiveNumber);
    c->add_flag("--no-selector", sf.no_selector, "disable alternative selectors");
    c->add_flag("--no-incremental", sf.no_incremental, "single call instead of prefix-by-prefix");
  }
  synth->add_option("--top", sf.top, "programs to print")->check(CLI::NonNegativeNumber);

  std::string bench_dir, bench_out;
  SynthFlags bf;
  auto* bench = app.add_subcommand("bench", "prefix-prediction benchmark over a fixture directory");
  bench->add_option("dir", bench_dir, "directory written by gen-fixtures")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--out", bench_out, "report directory (default: the fixture directory)");
  bench->add_option("--timeout", bf.timeout_ms, "synthesis budget per test, ms")->check(CLI::PositiveNumber);
  bench->add_flag("--no-selector", bf.no_selector, "disable alternative selectors");
  bench->add_flag("--no-incremental", bf.no_incremental, "fresh synthesis state per prefix");

  unsigned seed = 1;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-fixtures", "write the fixture suite and its recorded traces");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  int port = 0;
  std::string serve_fixture, host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "HTTP session service");
  serve->add_option("--port", port, "port (default $RPA_PORT or 8080)");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--fixture", serve_fixture, "fixture file or directory (default: built-in suite)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      auto res = run_synth(sf);
      if (res.programs.empty()) {
        std::cout << "no prediction\n";
        return 0;
      }
      for (std::size_t k = 0; k < res.programs.size() && k < static_cast<std::size_t>(sf.top); ++k)
        std::cout << "# program " << k + 1 << " (size " << program_size(res.programs[k]) << ")\n"
                  << pretty(res.programs[k]) << "\n";
      std::cout << "# predictions\n";
      print_predictions(res);
      return 0;
    }
    if (predict->parsed()) {
      print_predictions(run_synth(sf));
      return 0;
    }
    if (bench->parsed()) {
      BenchmarkOptions opt;
      opt.synth = options_of(bf);
      opt.incremental = !bf.no_incremental;
      std::vector<BenchmarkReport> reps;
      Json all = Json::array();
      for (auto& [fx, trace] : load_fixtures(bench_dir)) {
        Recording r = recording_from_json(read_json(trace));
        reps.push_back(run_prefix_benchmark(fx.name, r, &fx.program, opt));
        all.push_back(report_to_json(reps.back()));
      }
      if (reps.empty()) throw std::runtime_error("no *.fixture.json files in " + bench_dir);
      fs::path out = bench_out.empty() ? fs::path(bench_dir) : fs::path(bench_out);
      fs::create_directories(out);
      std::string table = report_table(reps);
      write_text(out / "report.json", all.dump(1) + "\n");
      write_text(out / "report.txt", table);
      std::cout << table;
      return 0;
    }
    if (gen->parsed()) {
      for (const auto& p : write_fixture_suite(generate_fixture_suite(seed), gen_out)) std::cout << p.string() << "\n";
      return 0;
    }
    if (serve->parsed()) {
      ServiceConfig cfg;
      if (serve_fixture.empty()) {
        for (auto& f : generate_fixture_suite(1)) cfg.fixtures[f.name] = f;
        cfg.default_fixture = "store-locator";
      } else if (fs::is_directory(serve_fixture)) {
        for (auto& [f, trace] : load_fixtures(serve_fixture)) {
          if (cfg.default_fixture.empty()) cfg.default_fixture = f.name;
          cfg.fixtures[f.name] = f;
        }
      } else {
        Fixture f = fixture_from_json(read_json(serve_fixture));
        cfg.default_fixture = f.name;
        cfg.fixtures[f.name] = f;
      }
      if (cfg.fixtures.empty()) throw std::runtime_error("no fixtures to serve");
      if (port == 0) {
        const char* env = std::getenv("RPA_PORT");
        port = env ? std::atoi(env) : 8080;
      }
      SessionService svc(std::move(cfg));
      httplib::Server srv;
      bind_routes(srv, svc);
      std::cerr << "serving on " << host << ":" << port << "\n";
      if (!srv.listen(host, port)) throw std::runtime_error("cannot listen on port " + std::to_string(port));
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
