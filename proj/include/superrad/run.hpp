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

// One trajectory from the fully inverted state: cumulant (order 2 or 3) or
// exact, with the emission trace and its refined peak.

#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "superrad/common.hpp"
#include "superrad/couplings.hpp"
#include "superrad/cumulant.hpp"
#include "superrad/exact.hpp"
#include "superrad/geometry.hpp"
#include "superrad/integrator.hpp"
#include "superrad/observables.hpp"

namespace superrad {

enum class Method { order2, order3, exact };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::order2: return "2";
    case Method::order3: return "3";
    case Method::exact: return "exact";
  }
  return "unknown";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "2") return Method::order2;
  if (s == "3") return Method::order3;
  if (s == "exact") return Method::exact;
  return std::nullopt;
}

/// Tolerances used unless overridden: tighter for the oracle.
inline IntegratorConfig default_integrator(Method m) {
  IntegratorConfig c;
  c.rel_tol = m == Method::exact ? 1e-8 : 1e-7;
  c.abs_tol = 1e-10;
  return c;
}

struct RunOptions {
  Method method = Method::order3;
  bool hamiltonian = false;
  bool distance_classes = false;
  IntegratorConfig integrator = default_integrator(Method::order3);
  /// Stop once lambda_max(|Gamma|) * E(t) drops below the best rate so far:
  /// no later rate can exceed it (rigorous for exact dynamics).
  bool stop_after_peak = false;
  int max_exact_n = kDefaultMaxExactEmitters;
  /// Dense working set beyond which a cumulant run is rejected up front.
  double max_memory_bytes = 4.0 * 1024 * 1024 * 1024;
};

struct RunResult {
  EmissionTrace trace;
  IntegrationStats stats;
  int num_emitters = 0;
  std::size_t state_size = 0;
  double emitted = 0.0;    // integral of R over [0, t_final]
  double remaining = 0.0;  // excitation left at t_final
  double t_final = 0.0;
  bool extended = false;
  bool stopped_early = false;
};

/// Rough dense working set of a cumulant run in bytes.
inline double cumulant_memory_estimate(int n, int order, bool complex_scalar) {
  const double nn = n;
  const double s = complex_scalar ? 16.0 : 8.0;
  double bytes = 3.0 * nn * nn * s + 2.0 * nn * nn * 4.0;
  if (order == 3) bytes += nn * nn * nn * (0.5 * s + 2.0 * 4.0 + 3.0 * s + (complex_scalar ? 6.0 : 3.0) * s);
  return bytes;
}

namespace detail {

template <StateVector V, class Rhs, class Soft>
RunResult drive(const Rhs& rhs, V y0, const AffineFunctional& rate, const AffineFunctional& excitation,
                double rate_bound, int n, const RunOptions& opt, Soft&& within_soft_bounds) {
  RunResult res;
  res.num_emitters = n;
  res.state_size = y0.size();
  IntegratorConfig cfg = opt.integrator;
  cfg.validate();
  const double dt = cfg.t_end / (cfg.dense_samples - 1);
  DenseScalarTrace rtrace;
  EmissionTrace& tr = res.trace;
  double best = rate(y0);
  bool soft_flagged = false;
  bool negative_flagged = false;
  std::size_t next_sample = 0;
  V last = y0;

  auto sample = [&](double t, double r) {
    tr.times.push_back(t);
    tr.rates.push_back(r);
    if (r < -kNegativeRateFraction * n && !negative_flagged) {
      negative_flagged = true;
      tr.reliable = false;
      tr.warnings.push_back("emission rate " + std::to_string(r) + " below -0.01 N at t=" + std::to_string(t));
    }
  };

  auto observer = [&](const DenseStep<V>& step) {
    const ScalarDenseStep piece = rate.project(step);
    rtrace.push(piece);
    while (next_sample * dt <= step.t1() * (1.0 + 1e-14)) {
      const double t = std::min(next_sample * dt, step.t1());
      const double r = piece(t);
      sample(next_sample * dt, r);
      best = std::max(best, r);
      ++next_sample;
    }
    const double r1 = piece(step.t1());
    best = std::max(best, r1);
    if (r1 < -kNegativeRateFraction * n && !negative_flagged) sample(step.t1(), r1);
    if (!soft_flagged && !within_soft_bounds(step.y1())) {
      soft_flagged = true;
      tr.reliable = false;
      tr.warnings.push_back("truncation breakdown: moments outside soft bounds at t=" + std::to_string(step.t1()));
    }
    res.emitted += piece.integral();
    last = step.y1();
    res.t_final = step.t1();
    if (opt.stop_after_peak && rate_bound * excitation(step.y1()) < best) {
      res.stopped_early = true;
      return false;
    }
    return true;
  };

  res.stats = integrate(rhs, y0, cfg, observer);
  Peak peak = find_peak(rtrace, cfg.dense_samples);
  if (peak.at_end && !res.stopped_early) {
    // Still rising at t_end: extend the run once to twice the horizon.
    res.extended = true;
    tr.warnings.push_back("emission still rising at t_end=" + std::to_string(cfg.t_end) + "; extended once");
    const double t0 = res.t_final;
    cfg.t_end = 2.0 * cfg.t_end;
    auto more = integrate(rhs, last, cfg, observer, t0);
    res.stats.accepted += more.accepted;
    res.stats.rejected += more.rejected;
    res.stats.rhs_evaluations += more.rhs_evaluations;
    res.stats.stopped_by_observer = more.stopped_by_observer;
    for (auto& w : more.warnings) res.stats.warnings.push_back(std::move(w));
    peak = find_peak(rtrace, cfg.dense_samples);
    if (peak.at_end) tr.warnings.push_back("emission still rising after extension; peak is a lower bound");
  }
  res.stats.t_final = res.t_final;
  if (tr.times.empty() || tr.times.back() < res.t_final) sample(res.t_final, rtrace(res.t_final));
  tr.R_peak = peak.rate;
  tr.t_peak = peak.time;
  res.remaining = excitation(last);
  for (const auto& w : res.stats.warnings) tr.warnings.push_back(w);
  return res;
}

}  // namespace detail

/// Physical system of one run: lattice, reservoir and emitter count.
struct SystemParams {
  LatticeKind geometry = LatticeKind::chain;
  ReservoirKind reservoir = ReservoirKind::free_space;
  PolarizationKind polarization = PolarizationKind::circular_plus;
  int n = 1;
  /// Lattice spacing a in wavelengths, or theta/pi for the waveguide.
  double spacing = 0.1;
  int max_emitters = kDefaultMaxEmitters;
};

struct System {
  EmitterArray array;
  CouplingMatrix couplings;
};

inline System build_system(const SystemParams& params) {
  if (params.n < 1) throw ConfigError("emitter count must be >= 1");
  if (params.reservoir == ReservoirKind::waveguide) {
    if (params.geometry != LatticeKind::chain && params.geometry != LatticeKind::waveguide_chain) {
      throw ConfigError("waveguide reservoir needs a chain geometry");
    }
    const double theta = kPi * params.spacing;
    EmitterArray array = build_lattice(LatticeKind::waveguide_chain, params.n, theta, params.max_emitters);
    return {std::move(array), couplings_waveguide(params.n, theta)};
  }
  if (params.geometry == LatticeKind::custom || params.geometry == LatticeKind::waveguide_chain) {
    throw ConfigError(std::string("geometry '") + std::string(to_string(params.geometry)) +
                      "' is not available for reservoir '" + std::string(to_string(params.reservoir)) + "'");
  }
  const int side = per_side_for_total(params.geometry, params.n);
  EmitterArray array = build_lattice(params.geometry, side, params.spacing, params.max_emitters);
  if (array.size() != params.n) {
    throw ConfigError("N=" + std::to_string(params.n) + " is not a perfect " +
                      (lattice_dimension(params.geometry) == 2 ? "square" : "cube") + " for geometry '" +
                      std::string(to_string(params.geometry)) + "'");
  }
  switch (params.reservoir) {
    case ReservoirKind::free_space:
      return {array, couplings_free_space(array, polarization(params.polarization))};
    case ReservoirKind::dicke: return {array, couplings_dicke(params.n)};
    case ReservoirKind::independent: return {array, couplings_independent(params.n)};
    case ReservoirKind::waveguide: break;
  }
  throw ConfigError("unknown reservoir");
}

/// Runs the fully inverted array to opt.integrator.t_end (or until the peak
/// is certified when stop_after_peak is set).
inline RunResult simulate(const EmitterArray& array, const CouplingMatrix& couplings, const RunOptions& opt) {
  const int n = couplings.size();
  if (n != array.size()) throw ConfigError("simulate: array and coupling sizes differ");
  const double bound = couplings.abs_spectral_radius();
  if (opt.method == Method::exact) {
    if (opt.max_exact_n > kAbsoluteMaxExactEmitters) {
      throw ConfigError("max_exact_n may not exceed " + std::to_string(kAbsoluteMaxExactEmitters));
    }
    if (n > opt.max_exact_n) {
      throw CapacityError("exact propagation limited to " + std::to_string(opt.max_exact_n) + " emitters, got " +
                          std::to_string(n));
    }
    const DensityMatrix rho0 = DensityMatrix::fully_excited(n);
    const ExactLindblad lindblad(rho0, couplings, opt.hamiltonian);
    const double trace0 = lindblad.trace()(rho0.data());
    auto trace_ok = [&](const std::vector<Complex>& y) {
      if (std::abs(lindblad.trace()(y) - trace0) > kTraceDriftLimit) {
        throw NumericalError("trace drift beyond " + std::to_string(kTraceDriftLimit));
      }
      return true;
    };
    return detail::drive(lindblad, rho0.data(), lindblad.emission_rate(), lindblad.excitation(), bound, n, opt,
                         trace_ok);
  }
  const int order = opt.method == Method::order2 ? 2 : 3;
  const bool complex_scalar = opt.hamiltonian && couplings.has_coherent_part();
  const double need = cumulant_memory_estimate(n, order, complex_scalar);
  if (need > opt.max_memory_bytes) {
    throw CapacityError("order-" + std::to_string(order) + " run with N=" + std::to_string(n) + " needs about " +
                        std::to_string(static_cast<long long>(need / (1024 * 1024))) + " MiB");
  }
  auto layout = std::make_shared<const MomentLayout>(opt.distance_classes ? MomentLayout::distance_classes(array, order)
                                                                          : MomentLayout::full(n, order));
  auto run = [&]<class S>(S) {
    const CumulantEngine<S> engine(layout, couplings, opt.hamiltonian);
    auto state = init_fully_excited<S>(layout);
    return detail::drive(engine, std::move(state.values), engine.emission_rate(), engine.excitation(), bound, n, opt,
                         [&](const std::vector<S>& y) { return engine.within_soft_bounds(y); });
  };
  return complex_scalar ? run(Complex{}) : run(0.0);
}

}  // namespace superrad
