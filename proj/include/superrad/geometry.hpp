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

// Emitter arrays and dipole polarizations. Lengths are in units of the
// resonant wavelength, so k0 = 2*pi.

#pragma once

#include <algorithm>
#include <cstddef>
#include <istream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "superrad/common.hpp"

namespace superrad {

enum class LatticeKind { chain, square, cubic, waveguide_chain, custom };

inline std::string_view to_string(LatticeKind kind) {
  switch (kind) {
    case LatticeKind::chain: return "chain";
    case LatticeKind::square: return "square";
    case LatticeKind::cubic: return "cubic";
    case LatticeKind::waveguide_chain: return "waveguide_chain";
    case LatticeKind::custom: return "custom";
  }
  return "unknown";
}

inline std::optional<LatticeKind> parse_lattice_kind(std::string_view s) {
  for (auto k : {LatticeKind::chain, LatticeKind::square, LatticeKind::cubic,
                 LatticeKind::waveguide_chain, LatticeKind::custom}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

/// Number of spatial dimensions spanned by a regular lattice kind.
inline int lattice_dimension(LatticeKind kind) {
  switch (kind) {
    case LatticeKind::square: return 2;
    case LatticeKind::cubic: return 3;
    default: return 1;
  }
}

using LatticeIndex = std::array<int, 3>;

struct EmitterArray {
  std::vector<Vec3> positions;
  LatticeKind kind = LatticeKind::custom;
  /// Nearest-neighbor distance in wavelengths; for waveguide chains the
  /// neighbor phase theta = k0 * a.
  double spacing = 0.0;
  int per_side = 0;
  /// Integer lattice coordinates, empty for custom arrays.
  std::vector<LatticeIndex> sites;

  [[nodiscard]] int size() const { return static_cast<int>(positions.size()); }
  [[nodiscard]] bool is_regular() const { return !sites.empty(); }
};

inline constexpr int kDefaultMaxEmitters = 1024;

/// Regular array with per_side^dim emitters, axis aligned, one corner at the origin.
inline EmitterArray build_lattice(LatticeKind kind, int per_side, double spacing,
                                  int max_emitters = kDefaultMaxEmitters) {
  if (kind == LatticeKind::custom) {
    throw ConfigError("build_lattice: custom arrays are read from a file");
  }
  if (!(spacing > 0.0) || !std::isfinite(spacing)) {
    throw ConfigError("build_lattice: spacing must be positive, got " + std::to_string(spacing));
  }
  if (per_side < 1) {
    throw ConfigError("build_lattice: per-side count must be >= 1");
  }
  const int dim = lattice_dimension(kind);
  long long total = 1;
  for (int d = 0; d < dim; ++d) {
    total *= per_side;
    if (total > max_emitters) {
      throw CapacityError("build_lattice: " + std::to_string(per_side) + "^" +
                          std::to_string(dim) + " emitters exceeds the maximum of " +
                          std::to_string(max_emitters));
    }
  }

  EmitterArray array;
  array.kind = kind;
  array.spacing = spacing;
  array.per_side = per_side;
  // Waveguide chains are parameterized by the phase; the physical spacing is theta / k0.
  const double step = kind == LatticeKind::waveguide_chain ? spacing / kWavenumber : spacing;
  const int ny = dim >= 2 ? per_side : 1;
  const int nz = dim >= 3 ? per_side : 1;
  for (int iz = 0; iz < nz; ++iz) {
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < per_side; ++ix) {
        array.sites.push_back({ix, iy, iz});
        array.positions.push_back({ix * step, iy * step, iz * step});
      }
    }
  }
  return array;
}

/// Largest per-side count whose lattice holds at most `total` emitters.
inline int per_side_for_total(LatticeKind kind, int total) {
  if (total < 1) throw ConfigError("emitter count must be >= 1");
  const int dim = lattice_dimension(kind);
  int side = static_cast<int>(std::floor(std::pow(static_cast<double>(total), 1.0 / dim)));
  auto power = [dim](long long s) {
    long long p = 1;
    for (int d = 0; d < dim; ++d) p *= s;
    return p;
  };
  while (side > 1 && power(side) > total) --side;
  while (power(side + 1) <= total) ++side;
  return std::max(side, 1);
}

inline EmitterArray build_lattice_total(LatticeKind kind, int total, double spacing,
                                        int max_emitters = kDefaultMaxEmitters) {
  return build_lattice(kind, per_side_for_total(kind, total), spacing, max_emitters);
}

inline double min_pairwise_distance(const std::vector<Vec3>& positions) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      best = std::min(best, norm(positions[i] - positions[j]));
    }
  }
  return best;
}

inline EmitterArray custom_array(std::vector<Vec3> positions) {
  if (positions.empty()) throw ConfigError("custom array: no emitters");
  EmitterArray array;
  array.kind = LatticeKind::custom;
  array.positions = std::move(positions);
  if (array.positions.size() > 1) {
    array.spacing = min_pairwise_distance(array.positions);
    if (!(array.spacing > 0.0)) throw ConfigError("custom array: coincident emitters");
  }
  return array;
}

/// Reads one emitter per line as three whitespace-separated coordinates.
/// Blank lines and '#' comments are skipped.
inline EmitterArray read_custom_array(std::istream& in, const std::string& source = "<stream>") {
  std::vector<Vec3> positions;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    Vec3 r{};
    if (!(fields >> r[0])) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected three coordinates");
    }
    std::string extra;
    if (!(fields >> r[1] >> r[2]) || (fields >> extra)) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected three coordinates");
    }
    positions.push_back(r);
  }
  return custom_array(std::move(positions));
}

enum class PolarizationKind { linear_z, circular_plus, circular_minus };

inline std::string_view to_string(PolarizationKind kind) {
  switch (kind) {
    case PolarizationKind::linear_z: return "linear_z";
    case PolarizationKind::circular_plus: return "circular_plus";
    case PolarizationKind::circular_minus: return "circular_minus";
  }
  return "unknown";
}

inline std::optional<PolarizationKind> parse_polarization_kind(std::string_view s) {
  for (auto k : {PolarizationKind::linear_z, PolarizationKind::circular_plus,
                 PolarizationKind::circular_minus}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

/// Unit-normalized transition dipole.
class Polarization {
 public:
  explicit Polarization(const CVec3& d) : d_(d) {
    const double n2 = std::norm(d[0]) + std::norm(d[1]) + std::norm(d[2]);
    if (std::abs(n2 - 1.0) > 1e-12) {
      throw ConfigError("polarization vector must be unit normalized");
    }
  }

  [[nodiscard]] const CVec3& vector() const { return d_; }

  /// |r_hat . d|^2 for a unit direction r_hat.
  [[nodiscard]] double projection_sq(const Vec3& r_hat) const {
    Complex dot = 0.0;
    for (int i = 0; i < 3; ++i) dot += r_hat[i] * d_[i];
    return std::norm(dot);
  }

 private:
  CVec3 d_;
};

inline Polarization polarization(PolarizationKind kind) {
  const double s = 1.0 / std::sqrt(2.0);
  switch (kind) {
    case PolarizationKind::linear_z:
      return Polarization({Complex(0), Complex(0), Complex(1)});
    case PolarizationKind::circular_plus:
      return Polarization({Complex(s), Complex(0, s), Complex(0)});
    case PolarizationKind::circular_minus:
      return Polarization({Complex(s), Complex(0, -s), Complex(0)});
  }
  throw ConfigError("unknown polarization");
}

}  // namespace superrad
