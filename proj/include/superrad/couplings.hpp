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

// Coherent (J) and dissipative (Gamma) dipole-dipole couplings in units of
// the single-emitter decay rate.

#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string_view>

#include "superrad/common.hpp"
#include "superrad/geometry.hpp"

namespace superrad {

enum class ReservoirKind { free_space, waveguide, dicke, independent };

inline std::string_view to_string(ReservoirKind kind) {
  switch (kind) {
    case ReservoirKind::free_space: return "free_space";
    case ReservoirKind::waveguide: return "waveguide";
    case ReservoirKind::dicke: return "dicke";
    case ReservoirKind::independent: return "independent";
  }
  return "unknown";
}

inline std::optional<ReservoirKind> parse_reservoir_kind(std::string_view s) {
  for (auto k : {ReservoirKind::free_space, ReservoirKind::waveguide, ReservoirKind::dicke,
                 ReservoirKind::independent}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

/// Tolerated negative eigenvalue of the dissipative matrix.
inline constexpr double kPsdTolerance = 1e-9;

struct CouplingMatrix {
  Eigen::MatrixXd J;      // zero diagonal
  Eigen::MatrixXd Gamma;  // unit diagonal, symmetric
  ReservoirKind kind = ReservoirKind::independent;

  [[nodiscard]] int size() const { return static_cast<int>(Gamma.rows()); }
  [[nodiscard]] bool has_coherent_part() const { return J.size() > 0 && J.cwiseAbs().maxCoeff() > 0.0; }

  [[nodiscard]] double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Gamma, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
  }

  /// Largest eigenvalue of |Gamma| (elementwise absolute value). Bounds the
  /// emission rate by this factor times the remaining excitation.
  [[nodiscard]] double abs_spectral_radius() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Gamma.cwiseAbs(), Eigen::EigenvaluesOnly);
    return solver.eigenvalues().maxCoeff();
  }

  /// Throws NumericalError if Gamma is not positive semidefinite within kPsdTolerance.
  void check_psd() const {
    if (size() == 0) return;
    const double lo = min_eigenvalue();
    if (lo < -kPsdTolerance) {
      throw NumericalError("dissipative coupling matrix is not positive semidefinite (min eigenvalue " +
                           std::to_string(lo) + ")");
    }
  }
};

using GreensTensor = Eigen::Matrix3cd;

/// Free-space dyadic Green's tensor at separation r and wavenumber k0.
inline GreensTensor greens_free_space(const Vec3& r, double k0) {
  const double dist = norm(r);
  if (!(dist > 0.0)) throw ConfigError("greens_free_space: zero separation");
  const double x = k0 * dist;
  const Complex i(0.0, 1.0);
  const Complex pref = std::exp(i * x) / (4.0 * kPi * k0 * k0 * dist * dist * dist);
  const Complex iso = x * x + i * x - 1.0;
  const Complex aniso = -x * x - 3.0 * i * x + 3.0;
  GreensTensor g;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const double rr = r[a] * r[b] / (dist * dist);
      g(a, b) = pref * ((a == b ? iso : Complex(0.0)) + aniso * rr);
    }
  }
  return g;
}

/// J - i Gamma / 2 between two emitters separated by r, in units of the
/// single-emitter rate with k0 = omega0 (c = 1).
inline Complex free_space_pair_coupling(const Vec3& r, const Polarization& pol, double k0 = kWavenumber) {
  const GreensTensor g = greens_free_space(r, k0);
  const auto& d = pol.vector();
  Complex contraction = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) contraction += std::conj(d[a]) * g(a, b) * d[b];
  }
  return -(3.0 * kPi / k0) * contraction;
}

inline CouplingMatrix couplings_free_space(const EmitterArray& array, const Polarization& pol) {
  const int n = array.size();
  CouplingMatrix c;
  c.kind = ReservoirKind::free_space;
  c.J = Eigen::MatrixXd::Zero(n, n);
  c.Gamma = Eigen::MatrixXd::Identity(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const Vec3 r = array.positions[a] - array.positions[b];
      if (!(norm(r) > 0.0)) {
        throw ConfigError("couplings_free_space: emitters " + std::to_string(a) + " and " +
                          std::to_string(b) + " coincide");
      }
      // J - i Gamma/2 = V, so J = Re V and Gamma = -2 Im V. With this split
      // Gamma_ab -> 1 as the separation goes to zero.
      const Complex v = free_space_pair_coupling(r, pol);
      c.J(a, b) = c.J(b, a) = v.real();
      c.Gamma(a, b) = c.Gamma(b, a) = -2.0 * v.imag();
    }
  }
  c.check_psd();
  return c;
}

/// Bidirectional waveguide couplings for neighbor phase theta = k0 * a.
inline CouplingMatrix couplings_waveguide(int n, double theta) {
  if (n < 1) throw ConfigError("couplings_waveguide: need at least one emitter");
  CouplingMatrix c;
  c.kind = ReservoirKind::waveguide;
  c.J = Eigen::MatrixXd::Zero(n, n);
  c.Gamma = Eigen::MatrixXd::Identity(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const double phase = theta * (b - a);
      c.J(a, b) = c.J(b, a) = 0.5 * std::sin(phase);
      c.Gamma(a, b) = c.Gamma(b, a) = std::cos(phase);
    }
  }
  return c;
}

inline CouplingMatrix couplings_dicke(int n) {
  if (n < 1) throw ConfigError("couplings_dicke: need at least one emitter");
  CouplingMatrix c;
  c.kind = ReservoirKind::dicke;
  c.J = Eigen::MatrixXd::Zero(n, n);
  c.Gamma = Eigen::MatrixXd::Ones(n, n);
  return c;
}

inline CouplingMatrix couplings_independent(int n) {
  if (n < 1) throw ConfigError("couplings_independent: need at least one emitter");
  CouplingMatrix c;
  c.kind = ReservoirKind::independent;
  c.J = Eigen::MatrixXd::Zero(n, n);
  c.Gamma = Eigen::MatrixXd::Identity(n, n);
  return c;
}

/// Row-major CSV dump: a comment header, then the J block and the Gamma block.
inline void write_couplings_csv(std::ostream& out, const CouplingMatrix& c) {
  const int n = c.size();
  out << "# N=" << n << " reservoir=" << to_string(c.kind) << "\n";
  auto dump = [&](std::string_view name, const Eigen::MatrixXd& m) {
    out << "# " << name << "\n";
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", m(a, b));
        out << buf << (b + 1 < n ? "," : "\n");
      }
    }
  };
  dump("J", c.J);
  dump("Gamma", c.Gamma);
}

}  // namespace superrad
