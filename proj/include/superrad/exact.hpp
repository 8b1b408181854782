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

// Exact density-matrix propagation for small emitter numbers.
//
// Basis states are bitmasks, bit n set meaning emitter n is excited. The
// generator maps the block between excitation sectors (p, q) onto itself and
// onto (p-1, q-1), so only blocks with an excitation difference p - q present
// in the initial state are stored. The fully inverted state needs just the
// diagonal blocks. Lindblad terms are applied element by element from
// precomputed hopping tables; the superoperator is never formed.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cstdint>
#include <memory>
#include <set>
#include <vector>

#include "superrad/common.hpp"
#include "superrad/couplings.hpp"
#include "superrad/functional.hpp"
#include "superrad/integrator.hpp"
#include "superrad/spin_algebra.hpp"

namespace superrad {

inline constexpr int kDefaultMaxExactEmitters = 12;
/// Hard ceiling independent of configuration (bitmask width and memory).
inline constexpr int kAbsoluteMaxExactEmitters = 20;

/// Basis states grouped by excitation number.
class SectorBasis {
 public:
  explicit SectorBasis(int n) : n_(n), sectors_(n + 1), local_(std::size_t{1} << n) {
    if (n < 1 || n > kAbsoluteMaxExactEmitters) {
      throw CapacityError("exact basis: emitter count " + std::to_string(n) + " outside [1, " +
                          std::to_string(kAbsoluteMaxExactEmitters) + "]");
    }
    for (std::uint32_t s = 0; s < (std::uint32_t{1} << n); ++s) {
      auto& sec = sectors_[std::popcount(s)];
      local_[s] = static_cast<std::uint32_t>(sec.size());
      sec.push_back(s);
    }
  }

  [[nodiscard]] int num_emitters() const { return n_; }
  [[nodiscard]] std::size_t dim() const { return std::size_t{1} << n_; }
  [[nodiscard]] const std::vector<std::uint32_t>& sector(int p) const { return sectors_[p]; }
  [[nodiscard]] std::uint32_t local_index(std::uint32_t state) const { return local_[state]; }

 private:
  int n_;
  std::vector<std::vector<std::uint32_t>> sectors_;
  std::vector<std::uint32_t> local_;
};

/// 2^N x 2^N density matrix stored as the excitation-sector blocks that can
/// be nonzero. Entries outside stored blocks are zero.
class DensityMatrix {
 public:
  struct Block {
    int p;
    int q;
    std::size_t rows;
    std::size_t cols;
    std::size_t offset;
  };

  DensityMatrix(std::shared_ptr<const SectorBasis> basis, std::set<int> offsets)
      : basis_(std::move(basis)), offsets_(std::move(offsets)) {
    const int n = basis_->num_emitters();
    block_of_.assign(static_cast<std::size_t>((n + 1) * (n + 1)), -1);
    std::size_t total = 0;
    for (int d : offsets_) {
      for (int p = 0; p <= n; ++p) {
        const int q = p - d;
        if (q < 0 || q > n) continue;
        Block b{p, q, basis_->sector(p).size(), basis_->sector(q).size(), total};
        block_of_[p * (n + 1) + q] = static_cast<int>(blocks_.size());
        blocks_.push_back(b);
        total += b.rows * b.cols;
      }
    }
    data_.assign(total, Complex(0.0));
  }

  static DensityMatrix fully_excited(int n) {
    DensityMatrix rho(std::make_shared<SectorBasis>(n), {0});
    const std::uint32_t all = (std::uint32_t{1} << n) - 1;
    rho.ref(all, all) = 1.0;
    return rho;
  }

  static DensityMatrix maximally_mixed(int n) {
    DensityMatrix rho(std::make_shared<SectorBasis>(n), {0});
    const double w = 1.0 / static_cast<double>(rho.dim());
    for (std::uint32_t s = 0; s < rho.dim(); ++s) rho.ref(s, s) = w;
    return rho;
  }

  static DensityMatrix from_dense(int n, const Eigen::MatrixXcd& m) {
    auto basis = std::make_shared<SectorBasis>(n);
    if (static_cast<std::size_t>(m.rows()) != basis->dim() || m.rows() != m.cols()) {
      throw ConfigError("DensityMatrix::from_dense: expected a 2^N x 2^N matrix");
    }
    std::set<int> offsets;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (m(i, j) != 0.0) {
          offsets.insert(std::popcount(static_cast<std::uint32_t>(i)) -
                         std::popcount(static_cast<std::uint32_t>(j)));
        }
      }
    }
    if (offsets.empty()) offsets.insert(0);
    DensityMatrix rho(basis, offsets);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (m(i, j) != 0.0) rho.ref(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)) = m(i, j);
      }
    }
    return rho;
  }

  [[nodiscard]] int num_emitters() const { return basis_->num_emitters(); }
  [[nodiscard]] std::size_t dim() const { return basis_->dim(); }
  [[nodiscard]] const SectorBasis& basis() const { return *basis_; }
  [[nodiscard]] const std::shared_ptr<const SectorBasis>& basis_ptr() const { return basis_; }
  [[nodiscard]] const std::set<int>& offsets() const { return offsets_; }
  [[nodiscard]] const std::vector<Block>& blocks() const { return blocks_; }
  [[nodiscard]] std::vector<Complex>& data() { return data_; }
  [[nodiscard]] const std::vector<Complex>& data() const { return data_; }

  [[nodiscard]] int block_index(int p, int q) const {
    const int n = num_emitters();
    if (p < 0 || q < 0 || p > n || q > n) return -1;
    return block_of_[p * (n + 1) + q];
  }

  /// Flat index of entry (row, col), or -1 when it lies outside stored blocks.
  [[nodiscard]] long flat_index(std::uint32_t row, std::uint32_t col) const {
    const int bi = block_index(std::popcount(row), std::popcount(col));
    if (bi < 0) return -1;
    const Block& b = blocks_[bi];
    return static_cast<long>(b.offset + basis_->local_index(row) * b.cols + basis_->local_index(col));
  }

  [[nodiscard]] Complex operator()(std::uint32_t row, std::uint32_t col) const {
    const long idx = flat_index(row, col);
    return idx < 0 ? Complex(0.0) : data_[idx];
  }

  Complex& ref(std::uint32_t row, std::uint32_t col) {
    const long idx = flat_index(row, col);
    if (idx < 0) throw Error("DensityMatrix: entry outside stored blocks");
    return data_[idx];
  }

  [[nodiscard]] Complex trace() const {
    Complex t = 0.0;
    for (std::uint32_t s = 0; s < dim(); ++s) t += (*this)(s, s);
    return t;
  }

  [[nodiscard]] double hermiticity_error() const {
    double worst = 0.0;
    for (const auto& b : blocks_) {
      const auto& rows = basis_->sector(b.p);
      const auto& cols = basis_->sector(b.q);
      for (std::size_t i = 0; i < b.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
          worst = std::max(worst, std::abs(data_[b.offset + i * b.cols + j] - std::conj((*this)(cols[j], rows[i]))));
        }
      }
    }
    return worst;
  }

  [[nodiscard]] Eigen::MatrixXcd to_dense() const {
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(dim()));
    for (const auto& b : blocks_) {
      const auto& rows = basis_->sector(b.p);
      const auto& cols = basis_->sector(b.q);
      for (std::size_t i = 0; i < b.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) m(rows[i], cols[j]) = data_[b.offset + i * b.cols + j];
      }
    }
    return m;
  }

  /// Smallest eigenvalue of the Hermitian part.
  [[nodiscard]] double min_eigenvalue() const {
    if (offsets_ == std::set<int>{0}) {
      double lo = std::numeric_limits<double>::infinity();
      for (const auto& b : blocks_) {
        Eigen::MatrixXcd m(static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
        for (std::size_t i = 0; i < b.rows; ++i) {
          for (std::size_t j = 0; j < b.cols; ++j) m(i, j) = data_[b.offset + i * b.cols + j];
        }
        Eigen::MatrixXcd herm = 0.5 * (m + m.adjoint());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(herm, Eigen::EigenvaluesOnly);
        lo = std::min(lo, solver.eigenvalues().minCoeff());
      }
      return lo;
    }
    const Eigen::MatrixXcd m = to_dense();
    Eigen::MatrixXcd herm = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(herm, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
  }

 private:
  std::shared_ptr<const SectorBasis> basis_;
  std::set<int> offsets_;
  std::vector<Block> blocks_;
  std::vector<int> block_of_;
  std::vector<Complex> data_;
};

/// Applies a PauliString to a basis state: O|x> = coef |image>.
inline std::pair<Complex, std::uint32_t> apply_string(const PauliString& s, std::uint32_t x) {
  Complex c = 1.0;
  for (const auto& f : s.factors()) {
    const std::uint32_t bit = std::uint32_t{1} << f.site;
    const bool excited = (x & bit) != 0;
    switch (f.op) {
      case SpinOp::plus:
        if (excited) return {0.0, x};
        x |= bit;
        break;
      case SpinOp::minus:
        if (!excited) return {0.0, x};
        x &= ~bit;
        break;
      case SpinOp::z:
        if (!excited) c = -c;
        break;
    }
  }
  return {c, x};
}

/// Tr[rho O].
inline Complex moments_exact(const DensityMatrix& rho, const PauliString& s) {
  if (s.max_site() >= rho.num_emitters()) throw ConfigError("moments_exact: site outside the array");
  Complex sum = 0.0;
  for (std::uint32_t x = 0; x < rho.dim(); ++x) {
    const auto [c, y] = apply_string(s, x);
    if (c != 0.0) sum += c * rho(x, y);
  }
  return sum;
}

inline Complex moments_exact(const DensityMatrix& rho, const OperatorSum& o) {
  Complex sum = 0.0;
  for (const auto& [s, c] : o.terms()) sum += c * moments_exact(rho, s);
  return sum;
}

/// Right-hand side of the master equation on the stored blocks of a
/// DensityMatrix layout, together with the linear observables on it.
class ExactLindblad {
 public:
  ExactLindblad(const DensityMatrix& layout, const CouplingMatrix& couplings, bool include_hamiltonian)
      : layout_(layout), n_(layout.num_emitters()) {
    if (couplings.size() != n_) throw ConfigError("ExactLindblad: coupling matrix size mismatch");
    const SectorBasis& basis = layout.basis();
    gamma_ = couplings.Gamma;
    hops_.resize(n_ + 1);
    ups_.resize(n_ + 1);
    diag_.resize(n_ + 1);
    for (int p = 0; p <= n_; ++p) {
      const auto& states = basis.sector(p);
      auto& hop = hops_[p];
      auto& up = ups_[p];
      hop.start.push_back(0);
      up.start.push_back(0);
      for (std::uint32_t x : states) {
        double d = 0.0;
        for (int a = 0; a < n_; ++a) {
          const std::uint32_t abit = std::uint32_t{1} << a;
          if (x & abit) {
            d += couplings.Gamma(a, a);
            // Excitation at a moves from site b: (M rho)_x,: gets M_x,x' rho_x',: with x' = x - a + b.
            for (int b = 0; b < n_; ++b) {
              const std::uint32_t bbit = std::uint32_t{1} << b;
              if (x & bbit) continue;
              const std::uint32_t xp = (x & ~abit) | bbit;
              const double j = include_hamiltonian ? couplings.J(a, b) : 0.0;
              const Complex m(-0.5 * couplings.Gamma(a, b), -j);
              if (m != 0.0) hop.entries.push_back({basis.local_index(xp), m});
            }
          } else if (p < n_) {
            up.entries.push_back({basis.local_index(x | abit), a});
          }
        }
        diag_[p].push_back(-0.5 * d);
        hop.start.push_back(static_cast<std::uint32_t>(hop.entries.size()));
        up.start.push_back(static_cast<std::uint32_t>(up.entries.size()));
      }
    }
    build_functionals(couplings);
  }

  [[nodiscard]] const DensityMatrix& layout() const { return layout_; }
  [[nodiscard]] std::size_t size() const { return layout_.data().size(); }

  /// drho = -i[H, rho] + sum Gamma_nm (s_n rho s_m^+ - 1/2 {s_n^+ s_m, rho}).
  void operator()(double /*t*/, const std::vector<Complex>& rho, std::vector<Complex>& drho) const {
    drho.resize(rho.size());
    const auto& blocks = layout_.blocks();
    for (const auto& b : blocks) {
      const Complex* r = rho.data() + b.offset;
      Complex* out = drho.data() + b.offset;
      const auto& hp = hops_[b.p];
      const auto& hq = hops_[b.q];
      const int src = layout_.block_index(b.p + 1, b.q + 1);
      const Complex* rs = src >= 0 ? rho.data() + blocks[src].offset : nullptr;
      const std::size_t src_cols = src >= 0 ? blocks[src].cols : 0;
      for (std::size_t i = 0; i < b.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
          Complex acc = (diag_[b.p][i] + diag_[b.q][j]) * r[i * b.cols + j];
          for (std::uint32_t e = hp.start[i]; e < hp.start[i + 1]; ++e) {
            acc += hp.entries[e].coef * r[hp.entries[e].target * b.cols + j];
          }
          for (std::uint32_t e = hq.start[j]; e < hq.start[j + 1]; ++e) {
            acc += std::conj(hq.entries[e].coef) * r[i * b.cols + hq.entries[e].target];
          }
          if (rs) {
            const auto& up_p = ups_[b.p];
            const auto& up_q = ups_[b.q];
            for (std::uint32_t e = up_p.start[i]; e < up_p.start[i + 1]; ++e) {
              const auto& ei = up_p.entries[e];
              const Complex* row = rs + ei.target * src_cols;
              for (std::uint32_t f = up_q.start[j]; f < up_q.start[j + 1]; ++f) {
                const auto& fj = up_q.entries[f];
                acc += gamma_(ei.site, fj.site) * row[fj.target];
              }
            }
          }
          out[i * b.cols + j] = acc;
        }
      }
    }
  }

  /// R = sum_{n,m} Gamma_nm <s_n^+ s_m^->.
  [[nodiscard]] const AffineFunctional& emission_rate() const { return emission_; }
  /// sum_n <s_n^+ s_n^->.
  [[nodiscard]] const AffineFunctional& excitation() const { return excitation_; }
  /// Re Tr rho.
  [[nodiscard]] const AffineFunctional& trace() const { return trace_; }

  [[nodiscard]] DensityMatrix to_density(const std::vector<Complex>& flat) const {
    DensityMatrix rho = layout_;
    rho.data() = flat;
    return rho;
  }

 private:
  struct Hop {
    std::uint32_t target;
    Complex coef;
  };
  struct Up {
    std::uint32_t target;
    int site;
  };
  template <class E>
  struct Table {
    std::vector<std::uint32_t> start;
    std::vector<E> entries;
  };

  void build_functionals(const CouplingMatrix& couplings) {
    const SectorBasis& basis = layout_.basis();
    for (std::uint32_t x = 0; x < layout_.dim(); ++x) {
      const long diag = layout_.flat_index(x, x);
      if (diag < 0) continue;
      trace_.add(static_cast<std::size_t>(diag), 1.0);
      double g = 0.0;
      for (int a = 0; a < n_; ++a) {
        if (x & (std::uint32_t{1} << a)) g += couplings.Gamma(a, a);
      }
      emission_.add(static_cast<std::size_t>(diag), g);
      excitation_.add(static_cast<std::size_t>(diag), std::popcount(x));
      // <s_a^+ s_b^-> picks rho(x, y) with y = x - a + b.
      for (int a = 0; a < n_; ++a) {
        const std::uint32_t abit = std::uint32_t{1} << a;
        if (!(x & abit)) continue;
        for (int b = 0; b < n_; ++b) {
          const std::uint32_t bbit = std::uint32_t{1} << b;
          if (x & bbit || couplings.Gamma(a, b) == 0.0) continue;
          const long idx = layout_.flat_index(x, (x & ~abit) | bbit);
          if (idx >= 0) emission_.add(static_cast<std::size_t>(idx), couplings.Gamma(b, a));
        }
      }
    }
    (void)basis;
  }

  DensityMatrix layout_;
  int n_;
  Eigen::MatrixXd gamma_;
  std::vector<Table<Hop>> hops_;
  std::vector<Table<Up>> ups_;
  std::vector<std::vector<double>> diag_;
  AffineFunctional emission_;
  AffineFunctional excitation_;
  AffineFunctional trace_;
};

inline constexpr double kTraceDriftLimit = 1e-6;

/// Propagates rho0 and returns snapshots at the ascending times in t_grid.
inline std::vector<DensityMatrix> evolve_exact(const DensityMatrix& rho0, const CouplingMatrix& couplings,
                                               bool include_hamiltonian, const std::vector<double>& t_grid,
                                               IntegratorConfig config = {},
                                               int max_emitters = kDefaultMaxExactEmitters) {
  if (rho0.num_emitters() > max_emitters) {
    throw CapacityError("exact propagation limited to " + std::to_string(max_emitters) + " emitters, got " +
                        std::to_string(rho0.num_emitters()));
  }
  if (!std::is_sorted(t_grid.begin(), t_grid.end())) throw ConfigError("evolve_exact: t_grid must be ascending");
  std::vector<DensityMatrix> out;
  if (t_grid.empty()) return out;
  if (t_grid.front() < 0.0) throw ConfigError("evolve_exact: negative time");
  const ExactLindblad lindblad(rho0, couplings, include_hamiltonian);
  std::size_t next = 0;
  while (next < t_grid.size() && t_grid[next] == 0.0) {
    out.push_back(rho0);
    ++next;
  }
  if (next == t_grid.size()) return out;
  config.t_end = t_grid.back();
  using V = std::vector<Complex>;
  V y0 = rho0.data();
  const double trace0 = lindblad.trace()(y0);
  V buf;
  integrate(lindblad, y0, config, [&](const DenseStep<V>& step) {
    if (std::abs(lindblad.trace()(step.y1()) - trace0) > kTraceDriftLimit) {
      throw NumericalError("trace drift beyond " + std::to_string(kTraceDriftLimit) + " at t=" +
                           std::to_string(step.t1()));
    }
    while (next < t_grid.size() && t_grid[next] <= step.t1()) {
      step.interpolate(t_grid[next], buf);
      out.push_back(lindblad.to_density(buf));
      ++next;
    }
    return next < t_grid.size();
  });
  return out;
}

}  // namespace superrad
