// Copyright 2026 The superrad Authors
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

// superrad command line: single runs, sweeps, and coupling / equation dumps.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure,
// 3 sweep finished with failed points.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "superrad/config.hpp"
#include "superrad/io.hpp"
#include "superrad/superrad.hpp"

#ifndef SUPERRAD_PLAN_DIR
#define SUPERRAD_PLAN_DIR "plans"
#endif

namespace fs = std::filesystem;
using namespace superrad;

namespace {

struct Overrides {
  std::optional<std::string> order;
  std::optional<std::string> hamiltonian;
  std::optional<int> max_exact_n;
  std::optional<std::string> out_dir;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--order", o.order, "truncation order")->check(CLI::IsMember({"2", "3", "exact"}));
  cmd->add_option("--hamiltonian", o.hamiltonian, "exchange Hamiltonian")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--max-exact-n", o.max_exact_n, "largest N for the exact solver")
      ->check(CLI::Range(1, kAbsoluteMaxExactEmitters));
  cmd->add_option("--out-dir", o.out_dir, "output directory");
}

fs::path resolve_plan(const std::string& name) {
  const fs::path direct(name);
  if (fs::exists(direct) && fs::is_regular_file(direct)) return direct;
  std::vector<fs::path> dirs{"plans"};
  if (const char* env = std::getenv("SUPERRAD_PLAN_DIR")) dirs.emplace_back(env);
  dirs.emplace_back(SUPERRAD_PLAN_DIR);
  for (const auto& d : dirs) {
    for (const char* ext : {".yaml", ".yml", ""}) {
      const fs::path p = d / (name + ext);
      if (fs::exists(p) && fs::is_regular_file(p)) return p;
    }
  }
  throw ConfigError("no plan named '" + name + "' (searched ./plans, $SUPERRAD_PLAN_DIR, " SUPERRAD_PLAN_DIR ")");
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
  RunConfig cfg = load_run_config(config_path);
  if (ov.order) {
    const Method m = *parse_method(*ov.order);
    if (m != cfg.options.method) {
      const bool tol_default = cfg.options.integrator.rel_tol == default_integrator(cfg.options.method).rel_tol;
      cfg.options.method = m;
      if (tol_default) cfg.options.integrator.rel_tol = default_integrator(m).rel_tol;
    }
  }
  if (ov.hamiltonian) cfg.options.hamiltonian = *ov.hamiltonian == "on";
  if (ov.max_exact_n) cfg.options.max_exact_n = *ov.max_exact_n;
  if (ov.out_dir) cfg.output_dir = *ov.out_dir;
  if (cfg.options.method == Method::exact && cfg.system.n > cfg.options.max_exact_n) {
    throw CapacityError("exact propagation limited to " + std::to_string(cfg.options.max_exact_n) +
                        " emitters, got N=" + std::to_string(cfg.system.n) + " (see --max-exact-n)");
  }
  const System sys = build_system(cfg.system);
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult res = simulate(sys.array, sys.couplings, cfg.options);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fs::path trace_path = cfg.output_dir / (cfg.name + "_trace.csv");
  write_run_trace(trace_path, cfg, res);
  for (const auto& w : res.trace.warnings) std::cerr << "warning: " << w << "\n";
  fmt::print("R_peak={:.10g} t_peak={:.10g} reliable={}\n", res.trace.R_peak, res.trace.t_peak,
             res.trace.reliable ? "true" : "false");
  fmt::print("trace={} config_hash={} steps={} rhs_evals={} runtime={:.2f}s\n", trace_path.string(), config_hash(cfg),
             res.stats.accepted, res.stats.rhs_evaluations, secs);
  return 0;
}

int cmd_sweep(const std::string& plan_name, int jobs, const Overrides& ov) {
  const fs::path plan_path = resolve_plan(plan_name);
  SweepPlan plan = load_sweep_plan(plan_path);
  if (ov.order) plan.methods = {*parse_method(*ov.order)};
  if (ov.hamiltonian) plan.hamiltonian = *ov.hamiltonian == "on";
  if (ov.max_exact_n) plan.max_exact_n = *ov.max_exact_n;
  for (Method m : plan.methods) {
    if (m != Method::exact) continue;
    for (int n : plan.sizes) {
      if (n > plan.max_exact_n) {
        throw CapacityError("plan '" + plan.name + "' asks for an exact run at N=" + std::to_string(n) +
                            " beyond max_exact_n=" + std::to_string(plan.max_exact_n));
      }
    }
  }
  const fs::path dir = fs::path(ov.out_dir.value_or("out")) / plan.name;
  std::size_t finished = 0;
  const std::size_t total = expand_plan(plan).size();
  const auto t0 = std::chrono::steady_clock::now();
  const ScalingResult result = run_sweep(plan, jobs, [&](const ScalingResult& partial) {
    write_sweep_outputs(dir, partial, plan);
    ++finished;
    std::cerr << fmt::format("[{}/{}] {:.1f}s\n", finished, total,
                             std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  });
  write_sweep_outputs(dir, result, plan);
  for (const auto& s : result.series) {
    fmt::print("series order={} polarization={} a_or_theta={}\n", s.order, s.polarization, s.a_or_theta);
    for (const auto& a : s.alphas) fmt::print("  N={:<5d} alpha={:.6f} ({})\n", a.n, a.alpha, to_string(a.stencil));
    if (s.beta) fmt::print("  beta={:.6f} (alpha fixed {}, N {}..{})\n", s.beta->beta, plan.beta_alpha, s.beta->n_min, s.beta->n_max);
  }
  const std::size_t failed = result.failures();
  for (const auto& r : result.records) {
    if (r.status != "ok") std::cerr << fmt::format("point N={} a_or_theta={} order={}: {}\n", r.n, r.a_or_theta, r.order, r.status);
  }
  fmt::print("outputs in {} (config_hash={})\n", dir.string(), config_hash(plan));
  if (failed > 0) {
    fmt::print("{} of {} points failed\n", failed, result.records.size());
    return 3;
  }
  return 0;
}

int cmd_couplings(const std::string& config_path) {
  const RunConfig cfg = load_run_config(config_path);
  const System sys = build_system(cfg.system);
  write_couplings_csv(std::cout, sys.couplings);
  return 0;
}

int cmd_eom(int order, bool hamiltonian) {
  std::cout << eom_plan(order, hamiltonian).to_string();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Superradiant decay of inverted emitter arrays: cumulant and exact dynamics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SUPERRAD_VERSION);

  std::string config_path;
  Overrides run_ov;
  auto* run = app.add_subcommand("run", "single trajectory from a config file");
  run->add_option("--config", config_path, "run configuration (YAML)")->required();
  add_overrides(run, run_ov);

  std::string plan_name;
  int jobs = 1;
  Overrides sweep_ov;
  auto* sweep = app.add_subcommand("sweep", "scaling sweep from a plan");
  sweep->add_option("--plan", plan_name, "bundled plan name or plan file")->required();
  sweep->add_option("--jobs", jobs, "parallel trajectories")->check(CLI::PositiveNumber);
  add_overrides(sweep, sweep_ov);

  std::string coupling_config;
  auto* couplings = app.add_subcommand("couplings", "print J and Gamma for a run config as CSV");
  couplings->add_option("--config", coupling_config, "run configuration (YAML)")->required();

  int eom_order = 3;
  std::string eom_h = "off";
  auto* eom = app.add_subcommand("eom", "print the derived equations of motion");
  eom->add_option("--order", eom_order, "closure order")->check(CLI::IsMember({2, 3}));
  eom->add_option("--hamiltonian", eom_h, "exchange Hamiltonian")->check(CLI::IsMember({"on", "off"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config_path, run_ov);
    if (*sweep) return cmd_sweep(plan_name, jobs, sweep_ov);
    if (*couplings) return cmd_couplings(coupling_config);
    if (*eom) return cmd_eom(eom_order, eom_h == "on");
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
