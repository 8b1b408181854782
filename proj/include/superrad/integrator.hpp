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

// Adaptive Dormand-Prince 5(4) stepper with PI step-size control and the
// pair's continuous extension for dense output.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "superrad/common.hpp"

namespace superrad {

template <class T>
concept StateScalar = std::same_as<T, double> || std::same_as<T, std::complex<double>>;

/// Contiguous vector of real or complex components.
template <class V>
concept StateVector = requires(V v, const V cv, std::size_t i) {
  typename V::value_type;
  requires StateScalar<typename V::value_type>;
  { cv.size() } -> std::convertible_to<std::size_t>;
  v.resize(i);
  { v[i] } -> std::same_as<typename V::value_type&>;
  { cv[i] } -> std::convertible_to<typename V::value_type>;
};

struct IntegratorConfig {
  double rel_tol = 1e-7;
  double abs_tol = 1e-10;
  double t_end = 10.0;
  double max_step = std::numeric_limits<double>::infinity();
  double initial_step = 0.0;  // 0 selects automatically
  int dense_samples = 401;
  long max_steps = 2'000'000;
  int stiffness_rejections = 12;  // consecutive rejections before warning

  void validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw ConfigError("integrator tolerances must be positive");
    if (!(t_end > 0.0)) throw ConfigError("integrator t_end must be positive");
    if (!(max_step > 0.0)) throw ConfigError("integrator max_step must be positive");
    if (dense_samples < 2) throw ConfigError("integrator dense_samples must be >= 2");
  }
};

struct IntegrationStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evaluations = 0;
  double t_final = 0.0;
  bool stopped_by_observer = false;
  std::vector<std::string> warnings;
};

namespace dopri5 {

inline constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                        a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                        a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
inline constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                        a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                        e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace dopri5

/// Scalar continuous extension of one step, obtained by applying a linear
/// functional to the step's interpolation coefficients.
struct ScalarDenseStep {
  double t0 = 0.0;
  double h = 0.0;
  std::array<double, 5> c{};

  [[nodiscard]] double t1() const { return t0 + h; }

  [[nodiscard]] double operator()(double t) const {
    const double th = h > 0.0 ? (t - t0) / h : 0.0;
    const double th1 = 1.0 - th;
    return c[0] + th * (c[1] + th1 * (c[2] + th * (c[3] + th1 * c[4])));
  }

  /// Exact integral of the interpolant over [t0, t1].
  [[nodiscard]] double integral() const {
    return h * (c[0] + c[1] / 2.0 + c[2] / 6.0 + c[3] / 12.0 + c[4] / 30.0);
  }
};

/// One accepted step with its continuous extension on [t0, t1].
template <StateVector V>
class DenseStep {
 public:
  using Scalar = typename V::value_type;

  DenseStep(double t0, double h, const V& y0, const V& y1, const std::array<V, 5>& coeffs)
      : t0_(t0), h_(h), y0_(y0), y1_(y1), coeffs_(coeffs) {}

  [[nodiscard]] double t0() const { return t0_; }
  [[nodiscard]] double t1() const { return t0_ + h_; }
  [[nodiscard]] double h() const { return h_; }
  [[nodiscard]] const V& y0() const { return y0_; }
  [[nodiscard]] const V& y1() const { return y1_; }
  [[nodiscard]] const std::array<V, 5>& coefficients() const { return coeffs_; }

  void interpolate(double t, V& out) const {
    if (t == t0_) {
      out = y0_;
      return;
    }
    if (t == t1()) {
      out = y1_;
      return;
    }
    const double th = (t - t0_) / h_;
    const double th1 = 1.0 - th;
    const std::size_t n = y0_.size();
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = coeffs_[0][i] +
               th * (coeffs_[1][i] + th1 * (coeffs_[2][i] + th * (coeffs_[3][i] + th1 * coeffs_[4][i])));
    }
  }

  [[nodiscard]] V interpolate(double t) const {
    V out;
    interpolate(t, out);
    return out;
  }

  /// `linear` must be linear in its argument (no constant offset).
  template <class Linear>
  [[nodiscard]] ScalarDenseStep project(Linear&& linear) const {
    ScalarDenseStep s{t0_, h_, {}};
    for (int i = 0; i < 5; ++i) s.c[i] = linear(coeffs_[i]);
    return s;
  }

 private:
  double t0_;
  double h_;
  const V& y0_;
  const V& y1_;
  const std::array<V, 5>& coeffs_;
};

namespace detail {

template <class T>
double magnitude(const T& x) {
  return std::abs(x);
}

template <class T>
bool finite(const T& x) {
  if constexpr (std::is_same_v<T, double>) {
    return std::isfinite(x);
  } else {
    return std::isfinite(x.real()) && std::isfinite(x.imag());
  }
}

template <StateVector V>
double rms_scaled(const V& v, const V& ref_a, const V& ref_b, double atol, double rtol) {
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sk = atol + rtol * std::max(magnitude(ref_a[i]), magnitude(ref_b[i]));
    const double q = magnitude(v[i]) / sk;
    sum += q * q;
  }
  return std::sqrt(sum / static_cast<double>(n));
}

template <StateVector V>
double l2_norm(const V& v) {
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) sum += magnitude(v[i]) * magnitude(v[i]);
  return std::sqrt(sum);
}

}  // namespace detail

/// Integrates dy/dt = rhs(t, y, dydt) from t0 to config.t_end. After every
/// accepted step `observe(const DenseStep<V>&)` is called; returning false
/// stops the integration.
template <StateVector V, class Rhs, class Observer>
IntegrationStats integrate(Rhs&& rhs, V y, const IntegratorConfig& config, Observer&& observe,
                           double t0 = 0.0) {
  using namespace dopri5;
  using Scalar = typename V::value_type;
  config.validate();
  const std::size_t n = y.size();
  IntegrationStats stats;
  const double t_end = config.t_end;
  const double atol = config.abs_tol;
  const double rtol = config.rel_tol;
  const double hmax = std::min(config.max_step, t_end - t0);

  V k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), yerr(n);
  std::array<V, 5> dense;
  for (auto& d : dense) d.resize(n);

  auto eval = [&](double t, const V& state, V& out) {
    rhs(t, state, out);
    ++stats.rhs_evaluations;
  };
  auto check_finite = [&](const V& v, double t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!detail::finite(v[i])) {
        throw NumericalError("non-finite value in state at t=" + std::to_string(t) +
                             " (state norm " + std::to_string(detail::l2_norm(y)) + ")");
      }
    }
  };

  double t = t0;
  eval(t, y, k1);
  check_finite(k1, t);

  // Initial step guess.
  double h = config.initial_step;
  if (!(h > 0.0)) {
    const double dnf = detail::rms_scaled(k1, y, y, atol, rtol);
    const double dny = detail::rms_scaled(y, y, y, atol, rtol);
    h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * dny / dnf;
    h = std::min(h, hmax);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * k1[i];
    eval(t + h, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) yerr[i] = (k2[i] - k1[i]) / h;
    const double der2 = detail::rms_scaled(yerr, y, y, atol, rtol);
    const double der12 = std::max(der2, dnf);
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    h = std::min({100.0 * h, h1, hmax});
  }

  constexpr double safe = 0.9;
  constexpr double beta = 0.04;
  constexpr double expo1 = 0.2 - beta * 0.75;
  constexpr double fac_min = 0.2;   // maximal shrink 1/5
  constexpr double fac_max = 10.0;  // maximal growth 10x
  double facold = 1e-4;
  int consecutive_rejects = 0;
  bool stiffness_warned = false;
  bool last = false;

  while (!last) {
    if (stats.accepted + stats.rejected >= config.max_steps) {
      throw NumericalError("integrator exceeded max_steps at t=" + std::to_string(t));
    }
    if (t + 1.01 * h >= t_end) {
      h = t_end - t;
      last = true;
    }
    if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      throw NumericalError("step size underflow at t=" + std::to_string(t) + " (state norm " +
                           std::to_string(detail::l2_norm(y)) + ")");
    }

    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a21 * k1[i]);
    eval(t + c2 * h, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    eval(t + c3 * h, ytmp, k3);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    eval(t + c4 * h, ytmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    }
    eval(t + c5 * h, ytmp, k5);
    for (std::size_t i = 0; i < n; ++i) {
      ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    }
    eval(t + h, ytmp, k6);
    for (std::size_t i = 0; i < n; ++i) {
      ynew[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    }
    eval(t + h, ynew, k7);
    for (std::size_t i = 0; i < n; ++i) {
      yerr[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    }
    double err = detail::rms_scaled(yerr, y, ynew, atol, rtol);
    if (!std::isfinite(err)) {
      check_finite(ynew, t + h);
      err = 1e10;
    }

    const double fac11 = std::pow(std::max(err, 1e-300), expo1);
    if (err <= 1.0) {
      check_finite(ynew, t + h);
      const double fac = std::clamp(fac11 / std::pow(facold, beta) / safe, 1.0 / fac_max, 1.0 / fac_min);
      facold = std::max(err, 1e-4);
      consecutive_rejects = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Scalar ydiff = ynew[i] - y[i];
        const Scalar bspl = h * k1[i] - ydiff;
        dense[0][i] = y[i];
        dense[1][i] = ydiff;
        dense[2][i] = bspl;
        dense[3][i] = ydiff - h * k7[i] - bspl;
        dense[4][i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
      }
      ++stats.accepted;
      const double t_old = t;
      t = last ? t_end : t + h;
      const DenseStep<V> step(t_old, t - t_old, y, ynew, dense);
      const bool keep_going = observe(step);
      std::swap(y, ynew);
      std::swap(k1, k7);  // first-same-as-last
      if (!keep_going) {
        stats.stopped_by_observer = true;
        break;
      }
      h = std::min(h / fac, hmax);
    } else {
      ++stats.rejected;
      ++consecutive_rejects;
      last = false;
      if (consecutive_rejects >= config.stiffness_rejections && !stiffness_warned) {
        stats.warnings.push_back("repeated step rejections near t=" + std::to_string(t) +
                                 "; the problem may be stiff, consider a smaller max_step");
        stiffness_warned = true;
      }
      h = h / std::min(1.0 / fac_min, fac11 / safe);
    }
  }
  stats.t_final = t;
  return stats;
}

/// Stored dense solution; intended for small states.
template <StateVector V>
class Trajectory {
 public:
  struct Segment {
    double t0;
    double h;
    V y0;
    V y1;
    std::array<V, 5> coeffs;
  };

  void append(const DenseStep<V>& step) {
    segments_.push_back({step.t0(), step.h(), step.y0(), step.y1(), step.coefficients()});
  }

  [[nodiscard]] const std::vector<Segment>& segments() const { return segments_; }
  [[nodiscard]] double t_begin() const { return segments_.empty() ? 0.0 : segments_.front().t0; }
  [[nodiscard]] double t_end() const {
    return segments_.empty() ? 0.0 : segments_.back().t0 + segments_.back().h;
  }
  [[nodiscard]] const V& final_state() const { return segments_.back().y1; }

  [[nodiscard]] V at(double t) const {
    if (segments_.empty()) throw Error("Trajectory::at on empty trajectory");
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double x, const Segment& s) { return x < s.t0; });
    const Segment& s = it == segments_.begin() ? segments_.front() : *std::prev(it);
    return DenseStep<V>(s.t0, s.h, s.y0, s.y1, s.coeffs).interpolate(std::min(t, s.t0 + s.h));
  }

 private:
  std::vector<Segment> segments_;
};

template <StateVector V, class Rhs>
Trajectory<V> solve(Rhs&& rhs, V y0, const IntegratorConfig& config, IntegrationStats* stats = nullptr,
                    double t0 = 0.0) {
  Trajectory<V> traj;
  auto s = integrate(
      std::forward<Rhs>(rhs), std::move(y0), config,
      [&traj](const DenseStep<V>& step) {
        traj.append(step);
        return true;
      },
      t0);
  if (stats) *stats = std::move(s);
  return traj;
}

}  // namespace superrad
