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

// Shared test helpers: seeded generators and small independent references.

#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "superrad/couplings.hpp"
#include "superrad/spin_algebra.hpp"

namespace superrad::oracle {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Gram matrix of random unit vectors: symmetric, PSD, unit diagonal.
inline CouplingMatrix random_psd_couplings(int n, std::mt19937_64& gen, bool with_exchange) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd v(3, n);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) v(d, i) = normal(gen);
    v.col(i).normalize();
  }
  CouplingMatrix c;
  c.kind = ReservoirKind::free_space;
  c.Gamma = v.transpose() * v;
  c.J = Eigen::MatrixXd::Zero(n, n);
  if (with_exchange) {
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) c.J(a, b) = c.J(b, a) = u(gen);
    }
  }
  return c;
}

/// Random PauliString over sites [0, sites) with each site filled with probability 1/2.
inline PauliString random_string(int sites, std::mt19937_64& gen) {
  std::uniform_int_distribution<int> pick(0, 3);
  std::vector<SiteOp> ops;
  for (int s = 0; s < sites; ++s) {
    const int k = pick(gen);
    if (k == 3) continue;
    ops.push_back({s, static_cast<SpinOp>(k)});
  }
  return PauliString(ops);
}

/// Dense single-site operators in the bitmask basis (bit n set = site n excited).
inline Eigen::MatrixXcd dense_op(int n_sites, int site, SpinOp op) {
  const int dim = 1 << n_sites;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (int x = 0; x < dim; ++x) {
    const bool e = (x >> site) & 1;
    switch (op) {
      case SpinOp::plus:
        if (!e) m(x | (1 << site), x) = 1.0;
        break;
      case SpinOp::minus:
        if (e) m(x & ~(1 << site), x) = 1.0;
        break;
      case SpinOp::z: m(x, x) = e ? 1.0 : -1.0; break;
    }
  }
  return m;
}

/// Dense Lindblad right-hand side, built directly from the operator definitions.
inline Eigen::MatrixXcd dense_lindblad(const Eigen::MatrixXcd& rho, const CouplingMatrix& c, bool hamiltonian) {
  const int n = c.size();
  std::vector<Eigen::MatrixXcd> sp, sm;
  for (int a = 0; a < n; ++a) {
    sp.push_back(dense_op(n, a, SpinOp::plus));
    sm.push_back(dense_op(n, a, SpinOp::minus));
  }
  const Complex i(0.0, 1.0);
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(rho.rows(), rho.cols());
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(rho.rows(), rho.cols());
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const Eigen::MatrixXcd pm = sp[a] * sm[b];
      out += c.Gamma(a, b) * (sm[a] * rho * sp[b] - 0.5 * (pm * rho + rho * pm));
      if (hamiltonian && a != b) h += c.J(a, b) * pm;
    }
  }
  out += -i * (h * rho - rho * h);
  return out;
}

/// Classic fixed-step RK4 on a dense matrix ODE.
template <class F>
Eigen::MatrixXcd rk4(F&& f, Eigen::MatrixXcd y, double t_end, int steps) {
  const double h = t_end / steps;
  for (int s = 0; s < steps; ++s) {
    const Eigen::MatrixXcd k1 = f(y);
    const Eigen::MatrixXcd k2 = f(y + 0.5 * h * k1);
    const Eigen::MatrixXcd k3 = f(y + 0.5 * h * k2);
    const Eigen::MatrixXcd k4 = f(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

/// Peak of the mean emission rate on the symmetric Dicke ladder, by RK4 on
/// the level populations with rates (J+M)(J-M+1).
inline std::pair<double, double> dicke_ladder_peak(int n, double t_end = 1.0, int steps = 200000) {
  const double j = n / 2.0;
  const int levels = n + 1;
  std::vector<double> rate(levels);
  for (int k = 0; k < levels; ++k) {
    const double m = -j + k;
    rate[k] = (j + m) * (j - m + 1.0);
  }
  std::vector<double> p(levels, 0.0);
  p[levels - 1] = 1.0;
  auto deriv = [&](const std::vector<double>& q) {
    std::vector<double> d(levels);
    for (int k = 0; k < levels; ++k) {
      d[k] = -rate[k] * q[k] + (k + 1 < levels ? rate[k + 1] * q[k + 1] : 0.0);
    }
    return d;
  };
  auto emission = [&](const std::vector<double>& q) {
    double r = 0.0;
    for (int k = 0; k < levels; ++k) r += rate[k] * q[k];
    return r;
  };
  const double h = t_end / steps;
  double best = emission(p), t_best = 0.0;
  for (int s = 1; s <= steps; ++s) {
    std::vector<double> k1 = deriv(p), tmp(levels);
    for (int k = 0; k < levels; ++k) tmp[k] = p[k] + 0.5 * h * k1[k];
    std::vector<double> k2 = deriv(tmp);
    for (int k = 0; k < levels; ++k) tmp[k] = p[k] + 0.5 * h * k2[k];
    std::vector<double> k3 = deriv(tmp);
    for (int k = 0; k < levels; ++k) tmp[k] = p[k] + h * k3[k];
    std::vector<double> k4 = deriv(tmp);
    for (int k = 0; k < levels; ++k) p[k] += h / 6.0 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k]);
    const double r = emission(p);
    if (r > best) {
      best = r;
      t_best = s * h;
    }
  }
  return {best, t_best};
}

}  // namespace superrad::oracle
