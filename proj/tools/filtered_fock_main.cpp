// Copyright 2026 The filtered-fock Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// filtered-fock: batch driver for scenario files.
// Exit codes: 0 all tasks pass, 1 a task failed, 2 usage or parse error.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "filtered_fock/scenario.hpp"

namespace {

struct RunArgs {
  std::string scenario;
  std::string report = "csv";
  uint64_t seed = 1;
  bool strict = false;
  int nmax = 0;
  std::string out;
  bool timing = false;
};

bool read_file(const std::string& path, std::string& text) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  text = ss.str();
  return true;
}

int emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return 0;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) {
    std::cerr << "error: cannot write " << out << "\n";
    return 2;
  }
  f << text;
  return 0;
}

// Parses the file and prints diagnostics. Returns false on error.
bool load(const std::string& path, ffock::Scenario& sc) {
  std::string text;
  if (!read_file(path, text)) {
    std::cerr << "error: cannot read " << path << "\n";
    return false;
  }
  try {
    sc = ffock::parse_scenario(text);
    return true;
  } catch (const ffock::ScenarioError& e) {
    for (auto& d : e.diagnostics) std::cerr << d.str(path) << "\n";
    return false;
  }
}

int run(const RunArgs& a, const std::string& only) {
  ffock::Scenario sc;
  if (!load(a.scenario, sc)) return 2;
  if (!only.empty()) {
    std::vector<ffock::TaskSpec> kept;
    for (auto& t : sc.tasks)
      if (t.kind == only) kept.push_back(t);
    sc.tasks = kept;
  }
  ffock::RunOptions opt;
  opt.seed = a.seed;
  opt.strict = a.strict;
  if (a.nmax > 0) opt.n_max = a.nmax;
  ffock::Report rep;
  try {
    auto t0 = std::chrono::steady_clock::now();
    rep = ffock::run_scenario(sc, opt);
    if (a.timing) {
      double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      for (auto& t : rep.tasks) t.metrics.push_back({"runtime_total_ms", ms, std::nullopt, std::nullopt});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::string text = a.report == "json" ? ffock::format_json(rep) : ffock::format_csv(rep);
  if (int rc = emit(text, a.out)) return rc;
  for (auto& t : rep.tasks)
    if (!t.pass) std::cerr << "FAIL task " << t.index << " " << t.task << " " << t.target << ": " << t.message << "\n";
  return rep.all_pass() ? 0 : 1;
}

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("scenario", a.scenario, "scenario file")->required();
  cmd->add_option("--report", a.report, "report format")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--seed", a.seed, "seed for randomized probes");
  cmd->add_flag("--strict", a.strict, "stop at the first failing task");
  cmd->add_option("--nmax", a.nmax, "override the grid's occupation cutoff")->check(CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "write the report to a file");
  cmd->add_flag("--timing", a.timing, "append wall-clock runtime (breaks byte determinism)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"filtered-fock: filtered stochastic calculus on a truncated Fock space"};
  app.require_subcommand(1);

  RunArgs args;
  auto* run_cmd = app.add_subcommand("run", "run every task of a scenario");
  add_run_options(run_cmd, args);

  std::map<CLI::App*, std::string> filtered;
  for (const char* kind : {"solve", "check-unitarity", "sweep-m", "verify-ito"}) {
    auto* c = app.add_subcommand(kind, std::string("run only the ") + kind + " tasks of a scenario");
    add_run_options(c, args);
    filtered[c] = kind;
  }

  std::string calculus = "boson";
  auto* table_cmd = app.add_subcommand("ito-table", "print an Ito multiplication table");
  table_cmd->add_option("--calculus", calculus, "boson or mfree:m");
  auto* tables_cmd = app.add_subcommand("tables", "print the boson table and the m-free tables for m=1..3");

  std::string parse_path;
  bool pretty = false;
  auto* parse_cmd = app.add_subcommand("parse", "check a scenario and dump its syntax tree");
  parse_cmd->add_option("scenario", parse_path, "scenario file")->required();
  parse_cmd->add_flag("--pretty", pretty, "print the canonical source instead of the tree");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (run_cmd->parsed()) return run(args, "");
  for (auto& [cmd, kind] : filtered)
    if (cmd->parsed()) return run(args, kind);

  if (table_cmd->parsed()) {
    if (calculus == "boson") {
      std::cout << ffock::format_boson_table();
      return 0;
    }
    if (calculus.rfind("mfree:", 0) == 0) {
      try {
        size_t n = 0;
        int m = std::stoi(calculus.substr(6), &n);
        if (m >= 1 && n == calculus.size() - 6) {
          std::cout << ffock::format_mfree_table(m);
          return 0;
        }
      } catch (const std::exception&) {
      }
    }
    std::cerr << "error: --calculus must be boson or mfree:m with m >= 1\n";
    return 2;
  }
  if (tables_cmd->parsed()) {
    std::cout << ffock::format_boson_table();
    for (int m = 1; m <= 3; ++m) std::cout << "\n" << ffock::format_mfree_table(m);
    return 0;
  }
  if (parse_cmd->parsed()) {
    ffock::Scenario sc;
    if (!load(parse_path, sc)) return 2;
    std::cout << (pretty ? ffock::print_ast(sc.ast) : ffock::dump_ast(sc.ast));
    return 0;
  }
  return 2;
}
