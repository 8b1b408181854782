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

// Emission rate, dense scalar traces and peak localization.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "superrad/common.hpp"
#include "superrad/couplings.hpp"
#include "superrad/cumulant.hpp"
#include "superrad/exact.hpp"
#include "superrad/integrator.hpp"

namespace superrad {

/// R = sum_n Gamma_nn (1 + z_n)/2 + sum_{n != m} Gamma_nm Re C_nm.
inline double emission_rate(const Eigen::VectorXd& z, const Eigen::MatrixXcd& C, const CouplingMatrix& couplings) {
  const int n = couplings.size();
  if (z.size() != n || C.rows() != n || C.cols() != n) throw ConfigError("emission_rate: dimension mismatch");
  double r = 0.0;
  for (int a = 0; a < n; ++a) {
    r += couplings.Gamma(a, a) * (1.0 + z(a)) / 2.0;
    for (int b = 0; b < n; ++b) {
      if (a != b) r += couplings.Gamma(a, b) * C(a, b).real();
    }
  }
  return r;
}

template <StateScalar S>
double emission_rate(const CumulantState<S>& state, const CouplingMatrix& couplings) {
  const int n = couplings.size();
  if (state.layout->num_emitters() != n) throw ConfigError("emission_rate: dimension mismatch");
  double r = 0.0;
  for (int a = 0; a < n; ++a) {
    r += couplings.Gamma(a, a) * (1.0 + state.z(a)) / 2.0;
    for (int b = 0; b < n; ++b) {
      if (a != b) r += couplings.Gamma(a, b) * std::real(state.C(a, b));
    }
  }
  return r;
}

inline double emission_rate(const DensityMatrix& rho, const CouplingMatrix& couplings) {
  if (rho.num_emitters() != couplings.size()) throw ConfigError("emission_rate: dimension mismatch");
  return ExactLindblad(rho, couplings, false).emission_rate()(rho.data());
}

/// Piecewise quartic interpolant of a scalar observable, one piece per accepted step.
class DenseScalarTrace {
 public:
  void push(const ScalarDenseStep& s) {
    if (!steps_.empty() && std::abs(s.t0 - steps_.back().t1()) > 1e-12 * std::max(1.0, s.t0)) {
      throw Error("DenseScalarTrace: steps must be contiguous");
    }
    steps_.push_back(s);
  }

  [[nodiscard]] bool empty() const { return steps_.empty(); }
  [[nodiscard]] double t_begin() const { return steps_.front().t0; }
  [[nodiscard]] double t_end() const { return steps_.back().t1(); }
  [[nodiscard]] const std::vector<ScalarDenseStep>& steps() const { return steps_; }

  [[nodiscard]] double operator()(double t) const {
    if (steps_.empty()) throw Error("DenseScalarTrace: empty trace");
    auto it = std::upper_bound(steps_.begin(), steps_.end(), t,
                               [](double x, const ScalarDenseStep& s) { return x < s.t0; });
    const ScalarDenseStep& s = it == steps_.begin() ? steps_.front() : *std::prev(it);
    if (t >= s.t1()) return s(s.t1());
    return s(std::max(t, s.t0));
  }

  /// Sample times: every step boundary.
  [[nodiscard]] std::vector<double> knots() const {
    std::vector<double> t;
    t.reserve(steps_.size() + 1);
    for (const auto& s : steps_) t.push_back(s.t0);
    if (!steps_.empty()) t.push_back(t_end());
    return t;
  }

  [[nodiscard]] double integral() const {
    double sum = 0.0;
    for (const auto& s : steps_) sum += s.integral();
    return sum;
  }

 private:
  std::vector<ScalarDenseStep> steps_;
};

struct Peak {
  double rate = 0.0;
  double time = 0.0;
  bool at_end = false;  // maximum sits on the last sample: still rising
};

inline constexpr double kPeakTimeTolerance = 1e-6;

namespace detail {

/// Golden-section maximization on [lo, hi] down to a relative width tol.
inline std::pair<double, double> golden_max(const std::function<double(double)>& f, double lo, double hi,
                                            double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int it = 0; it < 200 && (hi - lo) > tol * std::max(std::abs(x1), 1e-3); ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    }
  }
  return f1 >= f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

}  // namespace detail

/// Global maximum of f over the ascending sample times, refined by golden
/// section between the neighbours of the best sample. A maximum at the first
/// sample returns that sample unrefined.
inline Peak find_peak(const std::function<double(double)>& f, std::vector<double> samples,
                      double tol = kPeakTimeTolerance) {
  if (samples.empty()) throw ConfigError("find_peak: no samples");
  std::sort(samples.begin(), samples.end());
  samples.erase(std::unique(samples.begin(), samples.end()), samples.end());
  std::size_t best = 0;
  double best_rate = f(samples[0]);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double r = f(samples[i]);
    if (r > best_rate) {
      best_rate = r;
      best = i;
    }
  }
  Peak p{best_rate, samples[best], false};
  if (best == 0) return p;
  if (best + 1 == samples.size()) {
    p.at_end = true;
    return p;
  }
  const auto [t, r] = detail::golden_max(f, samples[best - 1], samples[best + 1], tol);
  if (r > p.rate) {
    p.rate = r;
    p.time = t;
  }
  return p;
}

/// Peak of a dense trace over its knots plus `uniform` evenly spaced samples.
inline Peak find_peak(const DenseScalarTrace& trace, int uniform = 401, double tol = kPeakTimeTolerance) {
  if (trace.empty()) throw ConfigError("find_peak: empty trace");
  std::vector<double> samples = trace.knots();
  const double t0 = trace.t_begin();
  const double t1 = trace.t_end();
  for (int i = 0; i < uniform; ++i) samples.push_back(t0 + (t1 - t0) * i / std::max(1, uniform - 1));
  return find_peak([&trace](double t) { return trace(t); }, std::move(samples), tol);
}

/// Sampled R(t) with its refined peak and the truncation-breakdown marker.
struct EmissionTrace {
  std::vector<double> times;
  std::vector<double> rates;
  double R_peak = 0.0;
  double t_peak = 0.0;
  bool reliable = true;
  std::vector<std::string> warnings;
};

/// Rates below this fraction of -N flag the trace unreliable.
inline constexpr double kNegativeRateFraction = 0.01;

/// Trace CSV: '# key=value' metadata lines, then columns t,R.
inline void write_trace_csv(std::ostream& out, const EmissionTrace& trace,
                            const std::vector<std::pair<std::string, std::string>>& metadata) {
  for (const auto& [k, v] : metadata) out << "# " << k << "=" << v << "\n";
  out << "# reliable=" << (trace.reliable ? "true" : "false") << "\n";
  char buf[80];
  std::snprintf(buf, sizeof buf, "%.12g", trace.R_peak);
  out << "# R_peak=" << buf;
  std::snprintf(buf, sizeof buf, "%.12g", trace.t_peak);
  out << "\n# t_peak=" << buf << "\n";
  out << "t,R\n";
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10g,%.12g\n", trace.times[i], trace.rates[i]);
    out << buf;
  }
}

}  // namespace superrad
