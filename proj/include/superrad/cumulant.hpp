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

// Truncated moment dynamics.
//
// The tracked moments {z, C, Z, T, Y} live in a flat vector of independent
// variables described by a MomentLayout. For every right-hand-side
// evaluation the variables are scattered into dense per-family tensors
// (all index orders filled, coincident indices zero), and the cached
// equation-of-motion plan is evaluated at each variable's representative
// site tuple. Summed-site terms reduce to dot products of a coupling row
// with a tensor fibre laid out with the summed index last.
//
// Without the exchange Hamiltonian all moments stay real for the fully
// inverted start, so the engine is templated on the scalar type and runs in
// double precision reals unless the Hamiltonian is switched on.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "superrad/common.hpp"
#include "superrad/couplings.hpp"
#include "superrad/functional.hpp"
#include "superrad/geometry.hpp"
#include "superrad/spin_algebra.hpp"

namespace superrad {

/// Independent variables of the truncated moment hierarchy and their
/// placement in dense per-family tensors.
class MomentLayout {
 public:
  struct Variable {
    Family family;
    std::array<int, 3> sites;  // representative tuple in family order
  };

  /// One variable per distinct moment: C over n<m, T over (n; m<l), Z and Y ascending.
  static MomentLayout full(int n, int order) {
    MomentLayout L(n, order, false);
    const auto families = tracked_families(order);
    auto tracked = [&](Family f) { return std::find(families.begin(), families.end(), f) != families.end(); };
    for (int a = 0; a < n; ++a) L.add_variable(Family::z, {a, 0, 0}, {{{a, 0, 0}, false}});
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) L.add_variable(Family::c, {a, b, 0}, {{{a, b, 0}, false}, {{b, a, 0}, true}});
    }
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) L.add_variable(Family::zz, {a, b, 0}, {{{a, b, 0}, false}, {{b, a, 0}, false}});
    }
    if (tracked(Family::t)) {
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          for (int c = b + 1; c < n; ++c) {
            if (a == b || a == c) continue;
            L.add_variable(Family::t, {a, b, c}, {{{a, b, c}, false}, {{a, c, b}, true}});
          }
        }
      }
    }
    if (tracked(Family::y)) {
      for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
          for (int c = b + 1; c < n; ++c) {
            std::vector<Placement> p;
            for (const auto& perm : permutations3({a, b, c})) p.push_back({perm, false});
            L.add_variable(Family::y, {a, b, c}, p);
          }
        }
      }
    }
    return L;
  }

  /// Moments keyed by lattice displacement classes: every site tuple related
  /// by a lattice translation shares one variable. Exact only for
  /// translation-invariant states, i.e. it neglects open-boundary effects.
  static MomentLayout distance_classes(const EmitterArray& array, int order) {
    if (!array.is_regular()) {
      throw ConfigError("distance-class reduction needs a regular lattice, not a custom array");
    }
    const int n = array.size();
    MomentLayout L(n, order, true);
    const auto families = tracked_families(order);
    // Lattice centre, used to pick the most central representative of each class.
    std::array<double, 3> centre{};
    for (const auto& s : array.sites) {
      for (int d = 0; d < 3; ++d) centre[d] += s[d];
    }
    for (auto& c : centre) c /= n;

    for (Family f : families) {
      const int k = family_sites(f);
      struct ClassInfo {
        std::vector<Placement> members;
        std::array<int, 3> rep;
        double rep_score;
      };
      std::map<std::vector<int>, ClassInfo> classes;
      std::array<int, 3> t{};
      auto visit = [&](const std::array<int, 3>& tuple) {
        // Canonical orientation: the symmetry-equivalent ordering with the
        // smallest displacement signature.
        std::vector<int> best_sig;
        std::array<int, 3> best_tuple{};
        bool best_conj = false;
        bool first = true;
        for (const auto& [perm, conj] : family_symmetries(f, tuple)) {
          std::vector<int> sig;
          for (int i = 1; i < k; ++i) {
            for (int d = 0; d < 3; ++d) sig.push_back(array.sites[perm[i]][d] - array.sites[perm[0]][d]);
          }
          if (first || sig < best_sig) {
            first = false;
            best_sig = sig;
            best_tuple = perm;
            best_conj = conj;
          }
        }
        double score = 0.0;
        for (int d = 0; d < 3; ++d) {
          double mean = 0.0;
          for (int i = 0; i < k; ++i) mean += array.sites[best_tuple[i]][d];
          mean /= k;
          score += (mean - centre[d]) * (mean - centre[d]);
        }
        auto [it, inserted] = classes.try_emplace(best_sig, ClassInfo{{}, best_tuple, score});
        if (!inserted && score < it->second.rep_score - 1e-12) {
          it->second.rep = best_tuple;
          it->second.rep_score = score;
        }
        it->second.members.push_back({tuple, best_conj});
      };
      for (t[0] = 0; t[0] < n; ++t[0]) {
        if (k == 1) {
          visit({t[0], 0, 0});
          continue;
        }
        for (t[1] = 0; t[1] < n; ++t[1]) {
          if (t[1] == t[0]) continue;
          if (k == 2) {
            visit({t[0], t[1], 0});
            continue;
          }
          for (t[2] = 0; t[2] < n; ++t[2]) {
            if (t[2] == t[0] || t[2] == t[1]) continue;
            visit(t);
          }
        }
      }
      for (auto& [sig, info] : classes) L.add_variable(f, info.rep, info.members);
    }
    return L;
  }

  [[nodiscard]] int num_emitters() const { return n_; }
  [[nodiscard]] int order() const { return order_; }
  [[nodiscard]] bool reduced() const { return reduced_; }
  [[nodiscard]] std::size_t size() const { return vars_.size(); }
  [[nodiscard]] const std::vector<Variable>& variables() const { return vars_; }

  [[nodiscard]] std::size_t count(Family f) const {
    return static_cast<std::size_t>(
        std::count_if(vars_.begin(), vars_.end(), [f](const Variable& v) { return v.family == f; }));
  }

  /// Encoded map from dense tensor entry to variable: v >= 0 direct,
  /// v <= -2 conjugate of variable (-v - 2), -1 unused.
  [[nodiscard]] const std::vector<std::int32_t>& entry_map(Family f) const {
    return maps_[static_cast<int>(f)];
  }

  [[nodiscard]] std::size_t entry_index(Family f, const std::array<int, 3>& s) const {
    const std::size_t n = static_cast<std::size_t>(n_);
    switch (family_sites(f)) {
      case 1: return static_cast<std::size_t>(s[0]);
      case 2: return s[0] * n + s[1];
      default: return (s[0] * n + s[1]) * n + s[2];
    }
  }

  /// Variable index and conjugation flag for a tracked moment on concrete sites.
  [[nodiscard]] std::pair<std::int32_t, bool> lookup(const MomentRef& m) const {
    const std::int32_t v = entry_map(m.family)[entry_index(m.family, m.sites)];
    if (v == -1) throw Error("MomentLayout: moment " + m.to_string() + " not tracked");
    return v >= 0 ? std::pair{v, false} : std::pair{-v - 2, true};
  }

 private:
  struct Placement {
    std::array<int, 3> tuple;
    bool conj;
  };

  MomentLayout(int n, int order, bool reduced) : n_(n), order_(order), reduced_(reduced) {
    if (n < 1) throw ConfigError("moment layout needs at least one emitter");
    tracked_families(order);  // validates
    const std::size_t nn = static_cast<std::size_t>(n);
    for (Family f : kAllFamilies) {
      std::size_t entries = 0;
      const auto tf = tracked_families(order);
      if (std::find(tf.begin(), tf.end(), f) != tf.end()) {
        entries = family_sites(f) == 1 ? nn : (family_sites(f) == 2 ? nn * nn : nn * nn * nn);
      }
      maps_[static_cast<int>(f)].assign(entries, -1);
    }
  }

  static std::vector<std::array<int, 3>> permutations3(std::array<int, 3> t) {
    std::vector<std::array<int, 3>> out;
    std::sort(t.begin(), t.end());
    do {
      out.push_back(t);
    } while (std::next_permutation(t.begin(), t.end()));
    return out;
  }

  /// Orderings of a tuple that name the same moment, with conjugation flags.
  static std::vector<std::pair<std::array<int, 3>, bool>> family_symmetries(Family f, const std::array<int, 3>& t) {
    switch (f) {
      case Family::z: return {{t, false}};
      case Family::c: return {{t, false}, {{t[1], t[0], 0}, true}};
      case Family::zz: return {{t, false}, {{t[1], t[0], 0}, false}};
      case Family::t: return {{t, false}, {{t[0], t[2], t[1]}, true}};
      case Family::y: {
        std::vector<std::pair<std::array<int, 3>, bool>> out;
        std::array<int, 3> p = t;
        std::sort(p.begin(), p.end());
        do {
          out.push_back({p, false});
        } while (std::next_permutation(p.begin(), p.end()));
        return out;
      }
    }
    return {};
  }

  void add_variable(Family f, const std::array<int, 3>& rep, const std::vector<Placement>& placements) {
    const auto idx = static_cast<std::int32_t>(vars_.size());
    vars_.push_back({f, rep});
    auto& map = maps_[static_cast<int>(f)];
    for (const auto& p : placements) map[entry_index(f, p.tuple)] = p.conj ? -idx - 2 : idx;
  }

  int n_;
  int order_;
  bool reduced_;
  std::vector<Variable> vars_;
  std::array<std::vector<std::int32_t>, 5> maps_;
};

/// Snapshot of the truncated moments.
template <StateScalar S>
struct CumulantState {
  std::shared_ptr<const MomentLayout> layout;
  std::vector<S> values;
  double t = 0.0;

  [[nodiscard]] S moment(const MomentRef& m) const {
    const auto [v, conj] = layout->lookup(m);
    if constexpr (std::is_same_v<S, double>) {
      return values[v];
    } else {
      return conj ? std::conj(values[v]) : values[v];
    }
  }

  [[nodiscard]] double z(int n) const { return std::real(moment({Family::z, {n, 0, 0}})); }
  [[nodiscard]] S C(int n, int m) const {
    if (n == m) return S((1.0 + z(n)) / 2.0);
    return moment({Family::c, {n, m, 0}});
  }
  [[nodiscard]] double Z(int n, int m) const { return std::real(moment({Family::zz, {n, m, 0}})); }
  [[nodiscard]] S T(int n, int m, int l) const { return moment({Family::t, {n, m, l}}); }
  [[nodiscard]] double Y(int n, int m, int l) const { return std::real(moment({Family::y, {n, m, l}})); }
};

/// Product state |e...e>: z = 1, C = 0, Z = 1, T = 0, Y = 1.
template <StateScalar S = double>
CumulantState<S> init_fully_excited(std::shared_ptr<const MomentLayout> layout) {
  CumulantState<S> st;
  st.values.assign(layout->size(), S(0.0));
  for (std::size_t i = 0; i < layout->size(); ++i) {
    const Family f = layout->variables()[i].family;
    if (f == Family::z || f == Family::zz || f == Family::y) st.values[i] = S(1.0);
  }
  st.layout = std::move(layout);
  return st;
}

template <StateScalar S = double>
CumulantState<S> init_fully_excited(int n, int order) {
  return init_fully_excited<S>(std::make_shared<const MomentLayout>(MomentLayout::full(n, order)));
}

/// Soft physicality bounds; beyond these a trajectory is flagged unreliable.
inline constexpr double kSoftBound = 1.05;

/// Right-hand side of the truncated hierarchy for one coupling matrix.
template <StateScalar S>
class CumulantEngine {
 public:
  using State = std::vector<S>;

  CumulantEngine(std::shared_ptr<const MomentLayout> layout, const CouplingMatrix& couplings, bool include_hamiltonian)
      : layout_(std::move(layout)), n_(layout_->num_emitters()), hamiltonian_(include_hamiltonian && couplings.has_coherent_part()) {
    if (couplings.size() != n_) {
      throw ConfigError("CumulantEngine: coupling matrix has " + std::to_string(couplings.size()) +
                        " emitters, layout has " + std::to_string(n_));
    }
    if (hamiltonian_ && std::is_same_v<S, double>) {
      throw ConfigError("CumulantEngine: the exchange Hamiltonian needs complex moments");
    }
    const std::size_t nn = static_cast<std::size_t>(n_);
    gamma_.resize(nn * nn);
    exchange_.resize(nn * nn);
    for (int a = 0; a < n_; ++a) {
      for (int b = 0; b < n_; ++b) {
        gamma_[a * nn + b] = couplings.Gamma(a, b);
        exchange_[a * nn + b] = a == b ? 0.0 : couplings.J(a, b);
      }
    }
    gamma_mat_ = couplings.Gamma.cast<S>();
    exchange_mat_ = couplings.J.cast<S>();
    exchange_mat_.diagonal().setZero();
    // With J = 0 the Hamiltonian drops out, so the real plan applies.
    compile(eom_plan(layout_->order(), hamiltonian_));
    int dummy[3] = {0, 1, 2};
    for (const auto& eq : equations_) {
      for (const auto& g : eq.groups) fibre_used_[g.exchange ? 1 : 0][fibre(g.k_factor, dummy).tensor] = true;
    }
    zf_.assign(nn, S(0.0));
    cf_.assign(nn * nn, S(0.0));
    zzf_.assign(nn * nn, S(0.0));
    if (layout_->order() == 3) {
      tf_.assign(nn * nn * nn, S(0.0));
      tz_.assign(nn * nn * nn, S(0.0));
      yf_.assign(nn * nn * nn, S(0.0));
    }
    build_functionals(couplings);
  }

  [[nodiscard]] const MomentLayout& layout() const { return *layout_; }
  [[nodiscard]] const std::shared_ptr<const MomentLayout>& layout_ptr() const { return layout_; }
  [[nodiscard]] int num_emitters() const { return n_; }

  void operator()(double /*t*/, const State& y, State& dydt) const {
    if (y.size() != layout_->size()) throw ConfigError("CumulantEngine: state dimension mismatch");
    dydt.resize(y.size());
    unpack(y);
    contract();
    const auto& vars = layout_->variables();
    const long nv = static_cast<long>(vars.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < nv; ++i) {
      const auto& v = vars[i];
      S d = evaluate(equations_[static_cast<int>(v.family)], v.sites.data());
      if constexpr (!std::is_same_v<S, double>) {
        if (v.family == Family::z || v.family == Family::zz || v.family == Family::y) d = S(std::real(d));
      }
      dydt[i] = d;
    }
  }

  /// Time derivative of one tracked moment on concrete distinct sites,
  /// evaluated on the dense tensors of the last unpacked state.
  [[nodiscard]] S derivative(const State& y, const MomentRef& m) const {
    unpack(y);
    contract();
    return evaluate(equations_[static_cast<int>(m.family)], m.sites.data());
  }

  /// R = sum_n Gamma_nn (1 + z_n)/2 + sum_{n != m} Gamma_nm C_nm.
  [[nodiscard]] const AffineFunctional& emission_rate() const { return emission_; }
  /// sum_n (1 + z_n)/2.
  [[nodiscard]] const AffineFunctional& excitation() const { return excitation_; }

  /// True when every z and |C| lies within the soft bounds.
  [[nodiscard]] bool within_soft_bounds(const State& y) const {
    const auto& vars = layout_->variables();
    for (std::size_t i = 0; i < vars.size(); ++i) {
      if (vars[i].family == Family::z && std::abs(std::real(y[i])) > kSoftBound) return false;
      if (vars[i].family == Family::c && std::abs(y[i]) > kSoftBound) return false;
    }
    return true;
  }

 private:
  struct Factor {
    Family family;
    std::array<std::int8_t, 3> labels;
  };
  struct Term {
    S coef;
    bool coupled = false;
    bool exchange = false;
    std::int8_t ca = 0;
    std::int8_t cb = 0;
    std::vector<Factor> factors;
  };
  struct Group {
    bool exchange = false;
    std::int8_t anchor = 0;
    Factor k_factor;
    std::vector<Term> prefactors;
  };
  struct Equation {
    int support = 0;
    std::vector<Term> local;
    std::vector<Group> groups;
  };

  static S to_scalar(Complex c) {
    if constexpr (std::is_same_v<S, double>) {
      if (c.imag() != 0.0) throw Error("CumulantEngine: complex coefficient in a real plan");
      return c.real();
    } else {
      return c;
    }
  }

  static Factor to_factor(const MomentRef& m) {
    Factor f{m.family, {0, 0, 0}};
    for (int i = 0; i < m.num_sites(); ++i) f.labels[i] = static_cast<std::int8_t>(m.sites[i]);
    return f;
  }

  static Term to_term(const PlanTerm& p) {
    Term t;
    t.coef = to_scalar(p.coef);
    if (p.coupling) {
      t.coupled = true;
      t.exchange = p.coupling->kind == CouplingKind::exchange;
      t.ca = static_cast<std::int8_t>(p.coupling->a);
      t.cb = static_cast<std::int8_t>(p.coupling->b);
    }
    for (const auto& m : p.factors) t.factors.push_back(to_factor(m));
    return t;
  }

  void compile(const EomPlan& plan) {
    for (const auto& eq : plan.equations) {
      Equation& out = equations_[static_cast<int>(eq.family)];
      out.support = family_sites(eq.family);
      for (const auto& t : eq.local) out.local.push_back(to_term(t));
      for (const auto& g : eq.free) {
        Group grp;
        grp.exchange = g.coupling.kind == CouplingKind::exchange;
        grp.anchor = static_cast<std::int8_t>(g.anchor_label());
        grp.k_factor = to_factor(g.k_factor);
        for (const auto& t : g.prefactors) grp.prefactors.push_back(to_term(t));
        out.groups.push_back(std::move(grp));
      }
    }
  }

  void build_functionals(const CouplingMatrix& couplings) {
    for (int a = 0; a < n_; ++a) {
      const auto [v, conj] = layout_->lookup({Family::z, {a, 0, 0}});
      emission_.constant += 0.5 * couplings.Gamma(a, a);
      emission_.add(static_cast<std::size_t>(v), 0.5 * couplings.Gamma(a, a));
      excitation_.constant += 0.5;
      excitation_.add(static_cast<std::size_t>(v), 0.5);
      for (int b = 0; b < n_; ++b) {
        if (a == b || couplings.Gamma(a, b) == 0.0) continue;
        const auto [vc, cc] = layout_->lookup({Family::c, {a, b, 0}});
        emission_.add(static_cast<std::size_t>(vc), couplings.Gamma(a, b));
      }
    }
    // Merge repeated indices so projections stay cheap for reduced layouts.
    for (AffineFunctional* f : {&emission_, &excitation_}) {
      std::map<std::size_t, double> merged;
      for (const auto& [i, w] : f->weights) merged[i] += w;
      f->weights.assign(merged.begin(), merged.end());
    }
  }

  static S conj_if(S v, bool conj) {
    if constexpr (std::is_same_v<S, double>) {
      return v;
    } else {
      return conj ? std::conj(v) : v;
    }
  }

  static void scatter(const std::vector<std::int32_t>& map, const State& y, std::vector<S>& out) {
    for (std::size_t e = 0; e < map.size(); ++e) {
      const std::int32_t v = map[e];
      out[e] = v >= 0 ? y[v] : (v == -1 ? S(0.0) : conj_if(y[-v - 2], true));
    }
  }

  void unpack(const State& y) const {
    scatter(layout_->entry_map(Family::z), y, zf_);
    scatter(layout_->entry_map(Family::c), y, cf_);
    scatter(layout_->entry_map(Family::zz), y, zzf_);
    if (layout_->order() == 3) {
      scatter(layout_->entry_map(Family::t), y, tf_);
      scatter(layout_->entry_map(Family::y), y, yf_);
      const std::size_t n = static_cast<std::size_t>(n_);
      // tz_[(m, l, n)] = T(n; m, l): z index last.
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
          const S* src = tf_.data() + (a * n + b) * n;
          for (std::size_t c = 0; c < n; ++c) tz_[(b * n + c) * n + a] = src[c];
        }
      }
    }
  }

  [[nodiscard]] S moment_value(const Factor& f, const int* sites) const {
    const std::size_t n = static_cast<std::size_t>(n_);
    const std::size_t a = static_cast<std::size_t>(sites[f.labels[0]]);
    switch (f.family) {
      case Family::z: return zf_[a];
      case Family::c: return cf_[a * n + sites[f.labels[1]]];
      case Family::zz: return zzf_[a * n + sites[f.labels[1]]];
      case Family::t: return tf_[(a * n + sites[f.labels[1]]) * n + sites[f.labels[2]]];
      case Family::y: return yf_[(a * n + sites[f.labels[1]]) * n + sites[f.labels[2]]];
    }
    return S(0.0);
  }

  enum Tensor : int { kZ, kC, kZZ, kT, kTz, kY, kNumTensors };

  struct Fibre {
    Tensor tensor;
    std::size_t row;
    bool conj;
  };

  /// Fibre of a moment along the free label: row of a dense tensor indexed by k.
  [[nodiscard]] Fibre fibre(const Factor& f, const int* sites) const {
    const std::size_t n = static_cast<std::size_t>(n_);
    auto site = [&](int i) { return static_cast<std::size_t>(sites[f.labels[i]]); };
    switch (f.family) {
      case Family::z: return {kZ, 0, false};
      case Family::c:
        // C(x, k) directly, C(k, y) = conj C(y, k).
        if (f.labels[1] == kFreeLabel) return {kC, site(0), false};
        return {kC, site(1), true};
      case Family::zz: return {kZZ, f.labels[0] == kFreeLabel ? site(1) : site(0), false};
      case Family::t:
        if (f.labels[2] == kFreeLabel) return {kT, site(0) * n + site(1), false};
        if (f.labels[1] == kFreeLabel) return {kT, site(0) * n + site(2), true};
        return {kTz, site(1) * n + site(2), false};
      case Family::y: {
        std::size_t o[2];
        int j = 0;
        for (int i = 0; i < 3; ++i) {
          if (f.labels[i] != kFreeLabel) o[j++] = site(i);
        }
        return {kY, o[0] * n + o[1], false};
      }
    }
    return {kZ, 0, false};
  }

  [[nodiscard]] S term_value(const Term& t, const int* sites) const {
    S v = t.coef;
    if (t.coupled) {
      const auto& g = t.exchange ? exchange_ : gamma_;
      v *= g[static_cast<std::size_t>(sites[t.ca]) * static_cast<std::size_t>(n_) + sites[t.cb]];
    }
    for (const auto& f : t.factors) v *= moment_value(f, sites);
    return v;
  }

  [[nodiscard]] const std::vector<S>& tensor(Tensor t) const {
    switch (t) {
      case kZ: return zf_;
      case kC: return cf_;
      case kZZ: return zzf_;
      case kT: return tf_;
      case kTz: return tz_;
      case kY: return yf_;
      default: break;
    }
    return zf_;
  }

  /// Full contractions sums_[c][t][row * n + s] = sum_k coupling(s, k) tensor_t[row * n + k]
  /// for every tensor used as a free-label fibre.
  void contract() const {
    const Eigen::Index n = n_;
    for (int c = 0; c < 2; ++c) {
      if (c == 1 && !hamiltonian_) continue;
      const auto& g = c == 0 ? gamma_mat_ : exchange_mat_;
      for (int t = 0; t < kNumTensors; ++t) {
        if (!fibre_used_[c][t]) continue;
        const auto& src = tensor(static_cast<Tensor>(t));
        auto& dst = sums_[c][t];
        dst.resize(src.size());
        const Eigen::Index rows = static_cast<Eigen::Index>(src.size()) / n;
        using RowMajor = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const RowMajor> a(src.data(), rows, n);
        Eigen::Map<RowMajor> out(dst.data(), rows, n);
        out.noalias() = a * g;  // coupling matrices are symmetric
      }
    }
  }

  [[nodiscard]] S evaluate(const Equation& eq, const int* sites) const {
    S acc = S(0.0);
    for (const auto& t : eq.local) acc += term_value(t, sites);
    if (eq.groups.empty()) return acc;
    // The summed site runs over all sites minus the support: full
    // contraction less the support terms.
    std::array<int, 3> excluded{};
    for (int i = 0; i < eq.support; ++i) excluded[i] = sites[i];
    const std::size_t n = static_cast<std::size_t>(n_);
    for (const auto& g : eq.groups) {
      S pre = S(0.0);
      for (const auto& t : g.prefactors) pre += term_value(t, sites);
      if (pre == S(0.0)) continue;
      const std::size_t s = static_cast<std::size_t>(sites[g.anchor]);
      const int c = g.exchange ? 1 : 0;
      const double* row = (g.exchange ? exchange_ : gamma_).data() + s * n;
      const Fibre f = fibre(g.k_factor, sites);
      const S* fib = tensor(f.tensor).data() + f.row * n;
      S dot = sums_[c][f.tensor][f.row * n + s];
      for (int i = 0; i < eq.support; ++i) dot -= row[excluded[i]] * fib[excluded[i]];
      acc += pre * conj_if(dot, f.conj);
    }
    return acc;
  }

  std::shared_ptr<const MomentLayout> layout_;
  int n_;
  bool hamiltonian_;
  std::vector<double> gamma_;
  std::vector<double> exchange_;
  std::array<Equation, 5> equations_;
  AffineFunctional emission_;
  AffineFunctional excitation_;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> gamma_mat_;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> exchange_mat_;
  std::array<std::array<bool, kNumTensors>, 2> fibre_used_{};
  mutable std::vector<S> zf_, cf_, zzf_, tf_, tz_, yf_;
  mutable std::array<std::array<std::vector<S>, kNumTensors>, 2> sums_;
};

/// Flat CSV dump of a snapshot: family, sites, real, imag.
template <StateScalar S>
void write_state_csv(std::ostream& out, const CumulantState<S>& st) {
  out << "# t=" << st.t << " variables=" << st.values.size() << "\n";
  out << "family,s0,s1,s2,re,im\n";
  const auto& vars = st.layout->variables();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const auto& v = vars[i];
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", std::real(st.values[i]), std::imag(st.values[i]));
    out << to_string(v.family) << ',' << v.sites[0] << ',' << (family_sites(v.family) > 1 ? v.sites[1] : -1) << ','
        << (family_sites(v.family) > 2 ? v.sites[2] : -1) << ',' << buf << "\n";
  }
}

}  // namespace superrad
