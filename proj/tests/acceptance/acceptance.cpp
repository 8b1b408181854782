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

// Acceptance suite: one PASS/FAIL line per criterion, numbered 1 to 10.
// Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "superrad/config.hpp"
#include "superrad/io.hpp"
#include "superrad/superrad.hpp"

using namespace superrad;

namespace {

// Pinned tolerances.
constexpr double kSingleAtomMaxError = 1e-8;
constexpr double kSingleAtomMaxSeconds = 1.0;
constexpr double kConservationRelTol = 0.005;
constexpr double kDickePeakRelTol = 0.10;
constexpr double kDickeAlphaLo = 1.7, kDickeAlphaHi = 2.1;
constexpr double kOrder3PeakRelTol = 0.05;
constexpr double kWaveguideAlphaLo = 1.8, kWaveguideAlphaHi = 2.1;
constexpr double kChainAlphaMax = 1.3;
constexpr double kWideSpacingAlphaMax = 1.1;
constexpr double kPerformanceSeconds = 600.0;

struct Verdict {
  bool pass = false;
  std::string detail;
  bool soft = false;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int digits = 6) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

RunOptions exact_options(double t_end) {
  RunOptions opt;
  opt.method = Method::exact;
  opt.integrator = default_integrator(Method::exact);
  opt.integrator.t_end = t_end;
  return opt;
}

System chain_system(int n, double a, PolarizationKind pol = PolarizationKind::circular_plus) {
  return build_system({LatticeKind::chain, ReservoirKind::free_space, pol, n, a});
}

SweepPlan bundled_plan(const std::string& name) { return load_sweep_plan(std::string(SUPERRAD_PLAN_DIR) + "/" + name + ".yaml"); }

const SeriesResult* find_series(const ScalingResult& r, PolarizationKind pol, double a) {
  for (const auto& s : r.series) {
    if (s.polarization == to_string(pol) && s.a_or_theta == a) return &s;
  }
  return nullptr;
}

std::string alpha_list(const SeriesResult& s) {
  std::string out;
  for (const auto& a : s.alphas) out += (out.empty() ? "" : " ") + std::to_string(a.n) + ":" + num(a.alpha, 4);
  return out.empty() ? "none" : out;
}

std::optional<double> alpha_at(const SeriesResult& s, int n) {
  for (const auto& a : s.alphas) {
    if (a.n == n) return a.alpha;
  }
  return std::nullopt;
}

// 1. N = 1 oracle reproduces exp(-t).
Verdict single_atom() {
  const auto t0 = std::chrono::steady_clock::now();
  RunOptions opt = exact_options(10.0);
  opt.integrator.rel_tol = 1e-10;
  opt.integrator.abs_tol = 1e-13;
  opt.integrator.dense_samples = 1001;
  const System sys = chain_system(1, 0.1);
  const RunResult res = simulate(sys.array, sys.couplings, opt);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (std::size_t i = 0; i < res.trace.times.size(); ++i) {
    worst = std::max(worst, std::abs(res.trace.rates[i] - std::exp(-res.trace.times[i])));
  }
  return {worst < kSingleAtomMaxError && secs < kSingleAtomMaxSeconds && res.trace.times.size() >= 1001,
          "max |R - exp(-t)| = " + num(worst, 3) + " over " + std::to_string(res.trace.times.size()) +
              " samples, runtime " + num(secs, 3) + " s"};
}

// 2. Integral of R over [0, 20] equals N.
Verdict photon_conservation() {
  bool pass = true;
  std::string detail;
  for (int n : {2, 4, 8}) {
    const System sys = chain_system(n, 0.1);
    const RunResult res = simulate(sys.array, sys.couplings, exact_options(20.0));
    const double rel = std::abs(res.emitted - n) / n;
    pass = pass && rel <= kConservationRelTol;
    detail += "N=" + std::to_string(n) + ": int R = " + num(res.emitted, 8) + " (" + num(100.0 * rel, 3) +
              "%), left in array " + num(res.remaining, 4) + ", sum " + num(res.emitted + res.remaining, 10) + "; ";
  }
  return {pass, detail};
}

// 3. All-to-all coupling against (N/2)(N/2 + 1) and quadratic alpha.
Verdict dicke_quadratic() {
  bool pass = true;
  std::string detail;
  std::vector<PeakPoint> pts;
  for (int n : {4, 6, 8, 10}) {
    const System sys = build_system({LatticeKind::chain, ReservoirKind::dicke, PolarizationKind::circular_plus, n, 0.1});
    RunOptions opt = exact_options(2.0);
    opt.stop_after_peak = true;
    const RunResult res = simulate(sys.array, sys.couplings, opt);
    const double target = (n / 2.0) * (n / 2.0 + 1.0);
    const double rel = res.trace.R_peak / target - 1.0;
    pass = pass && std::abs(rel) <= kDickePeakRelTol;
    pts.push_back({n, res.trace.R_peak});
    detail += "N=" + std::to_string(n) + ": R_peak " + num(res.trace.R_peak) + " vs " + num(target) + " (" +
              num(100.0 * rel, 3) + "%); ";
  }
  detail += "alpha";
  for (const auto& a : extract_alpha(pts)) {
    pass = pass && a.alpha >= kDickeAlphaLo && a.alpha <= kDickeAlphaHi;
    detail += " " + std::to_string(a.n) + ":" + num(a.alpha, 4);
  }
  return {pass, detail};
}

// 4. Third-order closure at least as close to the oracle peak as second order.
Verdict closure_ordering() {
  bool pass = true;
  std::string detail;
  for (int n : {5, 6, 7, 8}) {
    const System sys = chain_system(n, 0.1);
    RunOptions opt;
    opt.stop_after_peak = true;
    opt.integrator.t_end = 2.0;
    auto peak = [&](Method m) {
      RunOptions o = m == Method::exact ? exact_options(2.0) : opt;
      o.method = m;
      o.stop_after_peak = true;
      return simulate(sys.array, sys.couplings, o).trace.R_peak;
    };
    const double ex = peak(Method::exact), r2 = peak(Method::order2), r3 = peak(Method::order3);
    const double e2 = std::abs(r2 - ex), e3 = std::abs(r3 - ex);
    pass = pass && e3 <= e2 && e3 / ex < kOrder3PeakRelTol;
    detail += "N=" + std::to_string(n) + ": exact " + num(ex, 7) + " order2 " + num(100.0 * (r2 / ex - 1.0), 3) +
              "% order3 " + num(100.0 * (r3 / ex - 1.0), 3) + "%; ";
  }
  return {pass, detail};
}

// 5. Waveguide interior alpha near 2 at every phase.
Verdict waveguide_quadratic() {
  SweepPlan plan = bundled_plan("fig2d_waveguide");
  plan.methods = {Method::order3};
  plan.spacings = {0.1, 0.2, 0.3};
  plan.sizes = {8, 16, 32, 64};
  const ScalingResult r = run_sweep(plan, 1);
  bool pass = r.failures() == 0;
  std::string detail;
  for (double th : plan.spacings) {
    const SeriesResult* s = find_series(r, PolarizationKind::circular_plus, th);
    int interior = 0;
    for (const auto& a : s->alphas) {
      if (a.stencil != Stencil::centered) continue;
      ++interior;
      pass = pass && a.alpha >= kWaveguideAlphaLo && a.alpha <= kWaveguideAlphaHi;
    }
    pass = pass && interior == 2;
    detail += "theta/pi=" + num(th) + ": " + alpha_list(*s) + "; ";
  }
  return {pass, detail};
}

ScalingResult chain_sweep(PolarizationKind pol) {
  SweepPlan plan = bundled_plan(pol == PolarizationKind::linear_z ? "fig3b_chain_linear" : "fig3a_chain_circular");
  plan.methods = {Method::order3};
  plan.spacings = {0.1, 0.15, 0.2};
  return run_sweep(plan, 1);
}

// 6. Chain alpha falls after its maximum and ends below 1.3.
Verdict chain_linearization(const ScalingResult& circ, const ScalingResult& lin) {
  bool pass = circ.failures() == 0 && lin.failures() == 0;
  std::string detail;
  for (const auto* r : {&circ, &lin}) {
    for (const auto& s : r->series) {
      const auto& al = s.alphas;
      const int n_max = r->records[s.records.back()].n;
      pass = pass && n_max >= 64 && !al.empty() && al.back().n == n_max;
      if (al.empty()) continue;
      const auto peak = std::max_element(al.begin(), al.end(), [](const AlphaPoint& x, const AlphaPoint& y) {
        return x.alpha < y.alpha;
      });
      for (auto it = peak; it + 1 != al.end(); ++it) pass = pass && (it + 1)->alpha < it->alpha;
      pass = pass && al.back().alpha < kChainAlphaMax;
      detail += s.polarization + " a=" + num(s.a_or_theta) + ": " + alpha_list(s) + "; ";
    }
  }
  return {pass, detail};
}

// 7. At N = 64 and a = 0.2: cube above square above chain.
Verdict dimensional_ordering(const ScalingResult& circ) {
  auto run = [](const char* name) {
    SweepPlan plan = bundled_plan(name);
    plan.spacings = {0.2};
    plan.methods = {Method::order3};
    return run_sweep(plan, 1);
  };
  const ScalingResult sq = run("fig2b_square");
  const ScalingResult cu = run("fig2c_cubic");
  const auto a_chain = alpha_at(*find_series(circ, PolarizationKind::circular_plus, 0.2), 64);
  const auto a_sq = alpha_at(*find_series(sq, PolarizationKind::circular_plus, 0.2), 64);
  const auto a_cu = alpha_at(*find_series(cu, PolarizationKind::circular_plus, 0.2), 64);
  auto show = [](const std::optional<double>& a) { return a ? num(*a, 5) : std::string("missing"); };
  const bool pass = a_chain && a_sq && a_cu && *a_cu > *a_sq && *a_sq > *a_chain;
  return {pass, "alpha(64): chain " + show(a_chain) + " (32..64), square " + show(a_sq) + " (49..64), cube " +
                    show(a_cu) + " (27..64)"};
}

// 8. Square lattice, N = 36: alpha decreasing in a, below 1.1 at a = 0.8.
Verdict spacing_monotonicity() {
  SweepPlan plan = bundled_plan("fig4_alpha_vs_spacing");
  plan.spacings = {0.15, 0.3, 0.8};
  plan.sizes = {25, 36, 49};
  plan.methods = {Method::order3};
  const ScalingResult r = run_sweep(plan, 1);
  std::vector<double> alphas;
  std::string detail;
  bool pass = r.failures() == 0;
  for (double a : plan.spacings) {
    const auto al = alpha_at(*find_series(r, PolarizationKind::circular_plus, a), 36);
    pass = pass && al.has_value();
    alphas.push_back(al.value_or(std::nan("")));
    detail += "a=" + num(a) + ": alpha(36) " + num(alphas.back(), 5) + "; ";
  }
  pass = pass && alphas[0] > alphas[1] && alphas[1] > alphas[2] && alphas[2] < kWideSpacingAlphaMax;
  return {pass, detail};
}

// 9. Rerunning a bundled plan gives byte-identical CSVs.
Verdict determinism() {
  const SweepPlan plan = bundled_plan("smoke");
  const std::string hash = config_hash(plan);
  auto render = [&](int jobs) {
    const ScalingResult r = run_sweep(plan, jobs);
    std::ostringstream out;
    write_records_csv(out, r, hash);
    write_alpha_csv(out, r, hash);
    return out.str();
  };
  const std::string a = render(1), b = render(1), c = render(2), d = render(2);
  return {a == b && c == d && !a.empty(), "jobs=1 rerun " + std::string(a == b ? "identical" : "differs") +
                                              ", jobs=2 rerun " + (c == d ? "identical" : "differs") + ", " +
                                              std::to_string(a.size()) + " bytes"};
}

// 10. N = 50 chain, order 3, full trajectory within ten minutes (soft gate).
Verdict performance() {
  const System sys = chain_system(50, 0.1);
  RunOptions opt;
  opt.method = Method::order3;
  opt.integrator = default_integrator(Method::order3);
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult res = simulate(sys.array, sys.couplings, opt);
  const double secs = seconds_since(t0);
  return {secs < kPerformanceSeconds,
          "t_end " + num(res.t_final) + ", " + std::to_string(res.state_size) + " moments, " +
              std::to_string(res.stats.accepted) + " steps, " + num(secs, 4) + " s (limit " + num(kPerformanceSeconds) +
              " s)",
          true};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int k) { return only.empty() || only.count(k) > 0; };

  int failed = 0;
  auto report = [&](int k, const char* title, const std::function<Verdict()>& f) {
    if (!wanted(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const char* tag = v.pass ? "PASS" : (v.soft ? "WARN" : "FAIL");
    if (!v.pass && !v.soft) ++failed;
    std::printf("[%s] %2d %s: %s [%.1f s]\n", tag, k, title, v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, "single-atom exactness", single_atom);
  report(2, "photon conservation", photon_conservation);
  report(3, "all-to-all quadratic peak", dicke_quadratic);
  report(4, "closure-order ordering", closure_ordering);
  report(5, "waveguide quadratic scaling", waveguide_quadratic);
  std::optional<ScalingResult> circ, lin;
  auto chains = [&] {
    if (!circ) circ = chain_sweep(PolarizationKind::circular_plus);
    if (!lin) lin = chain_sweep(PolarizationKind::linear_z);
  };
  report(6, "free-space chain linearization", [&] {
    chains();
    return chain_linearization(*circ, *lin);
  });
  report(7, "dimensional ordering at N = 64", [&] {
    if (!circ) circ = chain_sweep(PolarizationKind::circular_plus);
    return dimensional_ordering(*circ);
  });
  report(8, "spacing monotonicity", spacing_monotonicity);
  report(9, "determinism", determinism);
  report(10, "performance N = 50 order 3", performance);
  std::printf("%d hard failure(s)\n", failed);
  return failed == 0 ? 0 : 1;
}
