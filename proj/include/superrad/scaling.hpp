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

// Peak-rate scaling: logarithmic finite differences in N, prefactor fits and
// the sweep runner.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "superrad/common.hpp"
#include "superrad/run.hpp"

namespace superrad {

enum class Stencil { centered, forward, backward };

inline std::string_view to_string(Stencil s) {
  switch (s) {
    case Stencil::centered: return "centered";
    case Stencil::forward: return "forward";
    case Stencil::backward: return "backward";
  }
  return "unknown";
}

struct PeakPoint {
  int n = 0;
  double rate = 0.0;
};

struct AlphaPoint {
  int n = 0;
  double alpha = 0.0;
  Stencil stencil = Stencil::centered;
};

namespace detail {

inline std::vector<PeakPoint> sorted_points(std::vector<PeakPoint> pts) {
  std::sort(pts.begin(), pts.end(), [](const PeakPoint& a, const PeakPoint& b) { return a.n < b.n; });
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].n < 1) throw ConfigError("emitter count must be positive, got " + std::to_string(pts[i].n));
    if (!(pts[i].rate > 0.0)) {
      throw ConfigError("nonpositive peak rate " + std::to_string(pts[i].rate) + " at N=" + std::to_string(pts[i].n));
    }
    if (i > 0 && pts[i].n == pts[i - 1].n) throw ConfigError("duplicate N=" + std::to_string(pts[i].n));
  }
  return pts;
}

inline double log_slope(const PeakPoint& lo, const PeakPoint& hi) {
  return (std::log(hi.rate) - std::log(lo.rate)) / (std::log(static_cast<double>(hi.n)) - std::log(static_cast<double>(lo.n)));
}

}  // namespace detail

/// alpha(N_i) = d ln R_peak / d ln N by centered differences on interior
/// points and one-sided differences at the two ends. Input order is irrelevant.
inline std::vector<AlphaPoint> extract_alpha(std::vector<PeakPoint> points) {
  const auto pts = detail::sorted_points(std::move(points));
  if (pts.size() < 2) throw ConfigError("alpha extraction needs at least two distinct N");
  std::vector<AlphaPoint> out;
  out.push_back({pts.front().n, detail::log_slope(pts[0], pts[1]), Stencil::forward});
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    out.push_back({pts[i].n, detail::log_slope(pts[i - 1], pts[i + 1]), Stencil::centered});
  }
  out.push_back({pts.back().n, detail::log_slope(pts[pts.size() - 2], pts.back()), Stencil::backward});
  return out;
}

struct BetaFit {
  double beta = 0.0;
  double residual = 0.0;  // rms of ln R - alpha ln N - ln beta
  int n_min = 0;
  int n_max = 0;
};

/// Least-squares prefactor of R_peak = beta N^alpha_fixed over the points.
inline BetaFit extract_beta(std::vector<PeakPoint> points, double alpha_fixed) {
  if (points.empty()) throw ConfigError("beta fit: empty window");
  const auto pts = detail::sorted_points(std::move(points));
  double mean = 0.0;
  for (const auto& p : pts) mean += std::log(p.rate) - alpha_fixed * std::log(static_cast<double>(p.n));
  mean /= static_cast<double>(pts.size());
  double ss = 0.0;
  for (const auto& p : pts) {
    const double r = std::log(p.rate) - alpha_fixed * std::log(static_cast<double>(p.n)) - mean;
    ss += r * r;
  }
  return {std::exp(mean), std::sqrt(ss / static_cast<double>(pts.size())), pts.front().n, pts.back().n};
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepPlan {
  std::string name = "sweep";
  LatticeKind geometry = LatticeKind::chain;
  ReservoirKind reservoir = ReservoirKind::free_space;
  std::vector<PolarizationKind> polarizations{PolarizationKind::circular_plus};
  std::vector<double> spacings{0.1};  // a, or theta/pi for the waveguide
  std::vector<int> sizes;
  std::vector<Method> methods{Method::order3};
  bool hamiltonian = false;
  bool distance_classes = false;
  std::optional<IntegratorConfig> integrator;  // per-method defaults when unset
  int max_exact_n = kDefaultMaxExactEmitters;
  double beta_alpha = 1.0;
  int beta_window = 3;  // largest-N reliable records used for beta
};

struct SweepPoint {
  std::size_t series = 0;
  Method method = Method::order3;
  PolarizationKind polarization = PolarizationKind::circular_plus;
  double spacing = 0.0;
  int n = 0;
};

struct ScalingRecord {
  std::string geometry;
  std::string reservoir;
  std::string polarization;
  std::string order;
  double a_or_theta = 0.0;
  int n = 0;
  double R_peak = std::numeric_limits<double>::quiet_NaN();
  double t_peak = std::numeric_limits<double>::quiet_NaN();
  bool reliable = false;
  bool done = false;
  std::string status = "pending";
  std::optional<double> alpha;  // centered (interior) value only
  std::vector<std::string> warnings;
};

struct SeriesResult {
  std::string polarization;
  std::string order;
  double a_or_theta = 0.0;
  std::vector<std::size_t> records;  // indices into ScalingResult::records, ascending N
  std::vector<AlphaPoint> alphas;    // reliable contiguous runs only
  std::optional<BetaFit> beta;
};

struct ScalingResult {
  std::string name;
  std::vector<ScalingRecord> records;
  std::vector<SeriesResult> series;
  double beta_alpha = 1.0;
  [[nodiscard]] std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const ScalingRecord& r) {
      return r.done && r.status != "ok";
    }));
  }
};

/// Plan points in deterministic order: method, polarization, spacing, ascending N.
inline std::vector<SweepPoint> expand_plan(const SweepPlan& plan) {
  if (plan.sizes.empty()) throw ConfigError("sweep plan '" + plan.name + "' has no N values");
  if (plan.spacings.empty()) throw ConfigError("sweep plan '" + plan.name + "' has no spacings");
  if (plan.polarizations.empty() || plan.methods.empty()) {
    throw ConfigError("sweep plan '" + plan.name + "' needs at least one polarization and order");
  }
  std::vector<int> sizes = plan.sizes;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  std::vector<SweepPoint> pts;
  std::size_t series = 0;
  for (Method m : plan.methods) {
    for (PolarizationKind p : plan.polarizations) {
      for (double a : plan.spacings) {
        for (int n : sizes) pts.push_back({series, m, p, a, n});
        ++series;
      }
    }
  }
  return pts;
}

inline RunOptions run_options_for(const SweepPlan& plan, Method m) {
  RunOptions opt;
  opt.method = m;
  opt.hamiltonian = plan.hamiltonian;
  opt.distance_classes = plan.distance_classes;
  opt.integrator = plan.integrator ? *plan.integrator : default_integrator(m);
  opt.stop_after_peak = true;
  opt.max_exact_n = plan.max_exact_n;
  return opt;
}

/// Recomputes alpha and beta for every series from the finished records.
inline void analyze(ScalingResult& result, const SweepPlan& plan) {
  for (auto& s : result.series) {
    s.alphas.clear();
    s.beta.reset();
    for (std::size_t idx : s.records) result.records[idx].alpha.reset();
    // Unreliable or failed records split the series; no stencil crosses a gap.
    std::vector<std::vector<std::size_t>> runs(1);
    for (std::size_t idx : s.records) {
      const auto& r = result.records[idx];
      if (r.done && r.reliable && r.status == "ok") {
        runs.back().push_back(idx);
      } else if (!runs.back().empty()) {
        runs.emplace_back();
      }
    }
    std::vector<PeakPoint> usable;
    for (const auto& run : runs) {
      for (std::size_t idx : run) usable.push_back({result.records[idx].n, result.records[idx].R_peak});
      if (run.size() < 2) continue;
      std::vector<PeakPoint> pts;
      for (std::size_t idx : run) pts.push_back({result.records[idx].n, result.records[idx].R_peak});
      const auto alphas = extract_alpha(pts);
      for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (alphas[i].stencil == Stencil::centered) result.records[run[i]].alpha = alphas[i].alpha;
        s.alphas.push_back(alphas[i]);
      }
    }
    if (!usable.empty() && plan.beta_window > 0) {
      std::sort(usable.begin(), usable.end(), [](const PeakPoint& a, const PeakPoint& b) { return a.n < b.n; });
      const std::size_t w = std::min<std::size_t>(usable.size(), static_cast<std::size_t>(plan.beta_window));
      s.beta = extract_beta(std::vector<PeakPoint>(usable.end() - static_cast<long>(w), usable.end()), plan.beta_alpha);
    }
  }
}

/// Runs every plan point on up to `jobs` worker threads. Results land in
/// plan order regardless of completion order; `on_progress` is called
/// (serialized) after every finished point with the partial result.
inline ScalingResult run_sweep(const SweepPlan& plan, int jobs = 1,
                               const std::function<void(const ScalingResult&)>& on_progress = {}) {
  const auto points = expand_plan(plan);
  ScalingResult result;
  result.name = plan.name;
  result.beta_alpha = plan.beta_alpha;
  for (const auto& pt : points) {
    ScalingRecord r;
    r.geometry = std::string(to_string(plan.reservoir == ReservoirKind::waveguide ? LatticeKind::waveguide_chain
                                                                                 : plan.geometry));
    r.reservoir = std::string(to_string(plan.reservoir));
    r.polarization = std::string(to_string(pt.polarization));
    r.order = std::string(to_string(pt.method));
    r.a_or_theta = pt.spacing;
    r.n = pt.n;
    if (pt.series >= result.series.size()) {
      result.series.push_back({r.polarization, r.order, r.a_or_theta, {}, {}, {}});
    }
    result.series[pt.series].records.push_back(result.records.size());
    result.records.push_back(std::move(r));
  }

  std::mutex mu;
  std::exception_ptr progress_error;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      const auto& pt = points[i];
      ScalingRecord local;
      try {
        const System sys = build_system({plan.geometry, plan.reservoir, pt.polarization, pt.n, pt.spacing});
        const RunResult run = simulate(sys.array, sys.couplings, run_options_for(plan, pt.method));
        local.R_peak = run.trace.R_peak;
        local.t_peak = run.trace.t_peak;
        local.reliable = run.trace.reliable;
        local.status = "ok";
        local.warnings = run.trace.warnings;
      } catch (const std::exception& e) {
        local.reliable = false;
        local.status = std::string("failed: ") + e.what();
      }
      std::lock_guard lock(mu);
      auto& r = result.records[i];
      r.R_peak = local.R_peak;
      r.t_peak = local.t_peak;
      r.reliable = local.reliable;
      r.status = std::move(local.status);
      r.warnings = std::move(local.warnings);
      r.done = true;
      if (on_progress && !progress_error) {
        try {
          analyze(result, plan);
          on_progress(result);
        } catch (...) {
          progress_error = std::current_exception();
        }
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(points.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (progress_error) std::rethrow_exception(progress_error);
  analyze(result, plan);
  return result;
}

}  // namespace superrad
