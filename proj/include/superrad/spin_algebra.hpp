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

// Symbolic algebra of on-site spin-1/2 operators.
//
// Products of sigma^+, sigma^- and sigma^z on distinct sites are kept in
// normal form (sites ascending, one operator per site). On top of that sit
// the Heisenberg-picture Lindblad generator, the moment-cumulant closure,
// and the derivation of closed equations of motion for the tracked moment
// families. The derivation works on site *labels*: labels 0..2 stand for the
// distinct sites of a tracked moment and label 3 for a summed site that is
// distinct from all of them. The result is an N-independent plan that the
// cumulant engine evaluates numerically.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "superrad/common.hpp"
#include "superrad/couplings.hpp"

namespace superrad {

enum class SpinOp : std::uint8_t { plus, minus, z };

inline char symbol(SpinOp op) {
  switch (op) {
    case SpinOp::plus: return '+';
    case SpinOp::minus: return '-';
    case SpinOp::z: return 'z';
  }
  return '?';
}

struct SiteOp {
  int site;
  SpinOp op;
  auto operator<=>(const SiteOp&) const = default;
};

/// Normal-ordered product of single-site operators; the empty string is the identity.
class PauliString {
 public:
  PauliString() = default;

  PauliString(std::initializer_list<SiteOp> ops) : factors_(ops) { normalize(); }
  explicit PauliString(std::vector<SiteOp> ops) : factors_(std::move(ops)) { normalize(); }

  static PauliString single(int site, SpinOp op) { return PauliString{{site, op}}; }

  [[nodiscard]] const std::vector<SiteOp>& factors() const { return factors_; }
  [[nodiscard]] bool is_identity() const { return factors_.empty(); }
  [[nodiscard]] int num_sites() const { return static_cast<int>(factors_.size()); }

  [[nodiscard]] int count(SpinOp op) const {
    return static_cast<int>(std::count_if(factors_.begin(), factors_.end(),
                                          [op](const SiteOp& f) { return f.op == op; }));
  }

  /// Equal numbers of raising and lowering operators.
  [[nodiscard]] bool balanced() const { return count(SpinOp::plus) == count(SpinOp::minus); }

  [[nodiscard]] std::optional<SpinOp> at(int site) const {
    for (const auto& f : factors_) {
      if (f.site == site) return f.op;
    }
    return std::nullopt;
  }

  [[nodiscard]] bool contains_site(int site) const { return at(site).has_value(); }

  [[nodiscard]] int max_site() const { return factors_.empty() ? -1 : factors_.back().site; }

  /// Sub-string restricted to the factors at the given positions.
  [[nodiscard]] PauliString subset(const std::vector<int>& positions) const {
    std::vector<SiteOp> ops;
    ops.reserve(positions.size());
    for (int p : positions) ops.push_back(factors_[p]);
    return PauliString(std::move(ops));
  }

  [[nodiscard]] PauliString adjoint() const {
    std::vector<SiteOp> ops = factors_;
    for (auto& f : ops) {
      if (f.op == SpinOp::plus) {
        f.op = SpinOp::minus;
      } else if (f.op == SpinOp::minus) {
        f.op = SpinOp::plus;
      }
    }
    return PauliString(std::move(ops));
  }

  [[nodiscard]] std::string to_string() const {
    if (factors_.empty()) return "1";
    std::string out;
    for (const auto& f : factors_) {
      if (!out.empty()) out += ' ';
      out += symbol(f.op);
      out += std::to_string(f.site);
    }
    return out;
  }

  auto operator<=>(const PauliString&) const = default;

 private:
  void normalize() {
    std::sort(factors_.begin(), factors_.end());
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (factors_[i].site < 0) throw ConfigError("PauliString: negative site index");
      if (i > 0 && factors_[i].site == factors_[i - 1].site) {
        throw ConfigError("PauliString: more than one operator on site " +
                          std::to_string(factors_[i].site));
      }
    }
  }

  std::vector<SiteOp> factors_;
};

inline constexpr double kPruneTolerance = 1e-14;

/// Linear combination of PauliStrings with complex weights.
class OperatorSum {
 public:
  OperatorSum() = default;
  explicit OperatorSum(const PauliString& s, Complex c = 1.0) { add(s, c); }

  static OperatorSum identity(Complex c = 1.0) { return OperatorSum(PauliString{}, c); }

  void add(const PauliString& s, Complex c) {
    if (c == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(s, c);
    if (!inserted) {
      it->second += c;
      if (std::abs(it->second) < kPruneTolerance) terms_.erase(it);
    } else if (std::abs(c) < kPruneTolerance) {
      terms_.erase(it);
    }
  }

  OperatorSum& operator+=(const OperatorSum& other) {
    for (const auto& [s, c] : other.terms_) add(s, c);
    return *this;
  }

  OperatorSum& operator-=(const OperatorSum& other) {
    for (const auto& [s, c] : other.terms_) add(s, -c);
    return *this;
  }

  OperatorSum& operator*=(Complex factor) {
    if (factor == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto it = terms_.begin(); it != terms_.end();) {
      it->second *= factor;
      it = std::abs(it->second) < kPruneTolerance ? terms_.erase(it) : std::next(it);
    }
    return *this;
  }

  [[nodiscard]] const std::map<PauliString, Complex>& terms() const { return terms_; }
  [[nodiscard]] bool empty() const { return terms_.empty(); }
  [[nodiscard]] std::size_t size() const { return terms_.size(); }

  [[nodiscard]] Complex coefficient(const PauliString& s) const {
    auto it = terms_.find(s);
    return it == terms_.end() ? Complex(0.0) : it->second;
  }

  [[nodiscard]] std::string to_string() const {
    if (terms_.empty()) return "0";
    std::ostringstream out;
    bool first = true;
    for (const auto& [s, c] : terms_) {
      if (!first) out << " + ";
      first = false;
      out << "(" << c.real();
      if (c.imag() != 0.0) out << (c.imag() < 0 ? "-" : "+") << std::abs(c.imag()) << "i";
      out << ")*[" << s.to_string() << "]";
    }
    return out.str();
  }

 private:
  std::map<PauliString, Complex> terms_;
};

inline OperatorSum operator+(OperatorSum a, const OperatorSum& b) { return a += b; }
inline OperatorSum operator-(OperatorSum a, const OperatorSum& b) { return a -= b; }
inline OperatorSum operator*(Complex c, OperatorSum a) { return a *= c; }

namespace detail {

/// Product of two single-site operators: up to two terms over {1, z}.
struct OnSiteProduct {
  int count = 0;
  std::array<std::pair<Complex, std::optional<SpinOp>>, 2> terms{};
};

inline OnSiteProduct on_site_product(SpinOp a, SpinOp b) {
  using enum SpinOp;
  OnSiteProduct p;
  auto push = [&p](double c, std::optional<SpinOp> op) { p.terms[p.count++] = {Complex(c), op}; };
  if (a == plus && b == minus) {
    push(0.5, std::nullopt);
    push(0.5, z);
  } else if (a == minus && b == plus) {
    push(0.5, std::nullopt);
    push(-0.5, z);
  } else if (a == z && b == plus) {
    push(1.0, plus);
  } else if (a == plus && b == z) {
    push(-1.0, plus);
  } else if (a == z && b == minus) {
    push(-1.0, minus);
  } else if (a == minus && b == z) {
    push(1.0, minus);
  } else if (a == z && b == z) {
    push(1.0, std::nullopt);
  }
  // sigma+ sigma+ and sigma- sigma- vanish.
  return p;
}

}  // namespace detail

inline OperatorSum multiply(const PauliString& a, const PauliString& b) {
  // Expand site by site; partial products are (coefficient, operator list).
  std::vector<std::pair<Complex, std::vector<SiteOp>>> partial{{Complex(1.0), {}}};
  const auto& fa = a.factors();
  const auto& fb = b.factors();
  std::size_t i = 0;
  std::size_t j = 0;
  auto append_all = [&partial](const SiteOp& op) {
    for (auto& [c, ops] : partial) ops.push_back(op);
  };
  while (i < fa.size() || j < fb.size()) {
    if (j == fb.size() || (i < fa.size() && fa[i].site < fb[j].site)) {
      append_all(fa[i++]);
    } else if (i == fa.size() || fb[j].site < fa[i].site) {
      append_all(fb[j++]);
    } else {
      const int site = fa[i].site;
      const auto prod = detail::on_site_product(fa[i].op, fb[j].op);
      ++i;
      ++j;
      std::vector<std::pair<Complex, std::vector<SiteOp>>> next;
      next.reserve(partial.size() * prod.count);
      for (const auto& [c, ops] : partial) {
        for (int t = 0; t < prod.count; ++t) {
          auto ops2 = ops;
          if (prod.terms[t].second) ops2.push_back({site, *prod.terms[t].second});
          next.emplace_back(c * prod.terms[t].first, std::move(ops2));
        }
      }
      partial = std::move(next);
      if (partial.empty()) return {};
    }
  }
  OperatorSum out;
  for (auto& [c, ops] : partial) out.add(PauliString(std::move(ops)), c);
  return out;
}

inline OperatorSum multiply(const OperatorSum& a, const OperatorSum& b) {
  OperatorSum out;
  for (const auto& [sa, ca] : a.terms()) {
    for (const auto& [sb, cb] : b.terms()) {
      const OperatorSum p = multiply(sa, sb);
      for (const auto& [s, c] : p.terms()) out.add(s, ca * cb * c);
    }
  }
  return out;
}

inline OperatorSum multiply(const OperatorSum& a, const OperatorSum& b, const OperatorSum& c) {
  return multiply(multiply(a, b), c);
}

inline OperatorSum commutator(const OperatorSum& a, const OperatorSum& b) {
  return multiply(a, b) - multiply(b, a);
}

inline OperatorSum sigma(int site, SpinOp op) { return OperatorSum(PauliString::single(site, op)); }

/// Heisenberg-picture generator: the operator whose expectation value is d<O>/dt,
///   sum_{n,m} Gamma_nm (s+_m O s-_n - 1/2 {s+_n s-_m, O})  [+ i [H, O]].
inline OperatorSum adjoint_lindblad(const OperatorSum& o, const CouplingMatrix& couplings,
                                    bool include_hamiltonian) {
  const int n_sites = couplings.size();
  OperatorSum out;
  for (int n = 0; n < n_sites; ++n) {
    for (int m = 0; m < n_sites; ++m) {
      const double g = couplings.Gamma(n, m);
      if (g != 0.0) {
        const OperatorSum sp_m = sigma(m, SpinOp::plus);
        const OperatorSum sm_n = sigma(n, SpinOp::minus);
        const OperatorSum hop = multiply(sigma(n, SpinOp::plus), sigma(m, SpinOp::minus));
        OperatorSum term = multiply(sp_m, o, sm_n);
        term -= 0.5 * (multiply(hop, o) + multiply(o, hop));
        out += g * term;
      }
      if (include_hamiltonian && n != m && couplings.J(n, m) != 0.0) {
        const OperatorSum hop = multiply(sigma(n, SpinOp::plus), sigma(m, SpinOp::minus));
        out += Complex(0.0, couplings.J(n, m)) * commutator(hop, o);
      }
    }
  }
  return out;
}

inline OperatorSum adjoint_lindblad(const PauliString& o, const CouplingMatrix& couplings,
                                    bool include_hamiltonian) {
  return adjoint_lindblad(OperatorSum(o), couplings, include_hamiltonian);
}

// ---------------------------------------------------------------------------
// Tracked moment families and closure.

/// Moment families of the U(1) sector tracked by the cumulant engine.
enum class Family : std::uint8_t {
  z,   ///< <z_a>
  c,   ///< <+_a -_b>
  zz,  ///< <z_a z_b>
  t,   ///< <z_a +_b -_c>
  y,   ///< <z_a z_b z_c>
};

inline constexpr std::array<Family, 5> kAllFamilies{Family::z, Family::c, Family::zz, Family::t,
                                                    Family::y};

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::z: return "z";
    case Family::c: return "C";
    case Family::zz: return "Z";
    case Family::t: return "T";
    case Family::y: return "Y";
  }
  return "?";
}

inline int family_sites(Family f) {
  switch (f) {
    case Family::z: return 1;
    case Family::c:
    case Family::zz: return 2;
    case Family::t:
    case Family::y: return 3;
  }
  return 0;
}

/// Families tracked at a given truncation order.
inline std::vector<Family> tracked_families(int order) {
  if (order == 2) return {Family::z, Family::c, Family::zz};
  if (order == 3) return {Family::z, Family::c, Family::zz, Family::t, Family::y};
  throw ConfigError("cumulant order must be 2 or 3, got " + std::to_string(order));
}

/// A tracked moment on concrete sites (or labels). Site order is canonical:
/// c = (+site, -site), t = (z site, +site, -site), zz and y ascending.
struct MomentRef {
  Family family = Family::z;
  std::array<int, 3> sites{};

  [[nodiscard]] int num_sites() const { return family_sites(family); }

  [[nodiscard]] bool involves(int site) const {
    for (int i = 0; i < num_sites(); ++i) {
      if (sites[i] == site) return true;
    }
    return false;
  }

  [[nodiscard]] PauliString as_string() const {
    switch (family) {
      case Family::z: return PauliString{{sites[0], SpinOp::z}};
      case Family::c: return PauliString{{sites[0], SpinOp::plus}, {sites[1], SpinOp::minus}};
      case Family::zz: return PauliString{{sites[0], SpinOp::z}, {sites[1], SpinOp::z}};
      case Family::t:
        return PauliString{{sites[0], SpinOp::z}, {sites[1], SpinOp::plus}, {sites[2], SpinOp::minus}};
      case Family::y:
        return PauliString{{sites[0], SpinOp::z}, {sites[1], SpinOp::z}, {sites[2], SpinOp::z}};
    }
    return {};
  }

  [[nodiscard]] std::string to_string(std::string_view labels = {}) const {
    auto name = [&](int s) {
      if (!labels.empty() && s >= 0 && s < static_cast<int>(labels.size())) return std::string(1, labels[s]);
      return std::to_string(s);
    };
    std::string out(superrad::to_string(family));
    out += '(';
    for (int i = 0; i < num_sites(); ++i) {
      if (i) out += ',';
      out += name(sites[i]);
    }
    return out + ')';
  }

  auto operator<=>(const MomentRef&) const = default;
};

/// Maps a balanced string of at most three sites to its tracked family.
inline std::optional<MomentRef> tracked_moment(const PauliString& s) {
  const int nz = s.count(SpinOp::z);
  const int np = s.count(SpinOp::plus);
  const int nm = s.count(SpinOp::minus);
  if (np != nm || s.num_sites() == 0 || s.num_sites() > 3) return std::nullopt;
  MomentRef r;
  int zi = 0;
  int zs[3]{};
  int plus_site = -1;
  int minus_site = -1;
  for (const auto& f : s.factors()) {
    if (f.op == SpinOp::z) zs[zi++] = f.site;
    if (f.op == SpinOp::plus) plus_site = f.site;
    if (f.op == SpinOp::minus) minus_site = f.site;
  }
  if (np == 0) {
    r.family = nz == 1 ? Family::z : (nz == 2 ? Family::zz : Family::y);
    for (int i = 0; i < nz; ++i) r.sites[i] = zs[i];
    return r;
  }
  if (np == 1 && nz == 0) {
    r.family = Family::c;
    r.sites = {plus_site, minus_site, 0};
    return r;
  }
  if (np == 1 && nz == 1) {
    r.family = Family::t;
    r.sites = {zs[0], plus_site, minus_site};
    return r;
  }
  return std::nullopt;
}

using Monomial = std::vector<MomentRef>;

/// Polynomial in tracked moments; the empty monomial is the constant term.
class MomentPolynomial {
 public:
  MomentPolynomial() = default;

  static MomentPolynomial constant(Complex c) {
    MomentPolynomial p;
    p.add({}, c);
    return p;
  }

  static MomentPolynomial moment(const MomentRef& m) {
    MomentPolynomial p;
    p.add({m}, 1.0);
    return p;
  }

  void add(Monomial mono, Complex c) {
    if (c == 0.0) return;
    std::sort(mono.begin(), mono.end());
    auto [it, inserted] = terms_.try_emplace(std::move(mono), c);
    if (!inserted) {
      it->second += c;
      if (std::abs(it->second) < kPruneTolerance) terms_.erase(it);
    }
  }

  MomentPolynomial& operator+=(const MomentPolynomial& o) {
    for (const auto& [m, c] : o.terms_) add(m, c);
    return *this;
  }

  [[nodiscard]] MomentPolynomial operator*(const MomentPolynomial& o) const {
    MomentPolynomial out;
    for (const auto& [ma, ca] : terms_) {
      for (const auto& [mb, cb] : o.terms_) {
        Monomial m = ma;
        m.insert(m.end(), mb.begin(), mb.end());
        out.add(std::move(m), ca * cb);
      }
    }
    return out;
  }

  [[nodiscard]] MomentPolynomial scaled(Complex s) const {
    MomentPolynomial out;
    for (const auto& [m, c] : terms_) out.add(m, c * s);
    return out;
  }

  [[nodiscard]] const std::map<Monomial, Complex>& terms() const { return terms_; }
  [[nodiscard]] bool empty() const { return terms_.empty(); }

  [[nodiscard]] Complex coefficient(Monomial m) const {
    std::sort(m.begin(), m.end());
    auto it = terms_.find(m);
    return it == terms_.end() ? Complex(0.0) : it->second;
  }

  /// Evaluates with a callback giving the value of each tracked moment.
  template <class MomentValue>
  [[nodiscard]] Complex evaluate(MomentValue&& value) const {
    Complex sum = 0.0;
    for (const auto& [mono, c] : terms_) {
      Complex p = c;
      for (const auto& m : mono) p *= value(m);
      sum += p;
    }
    return sum;
  }

 private:
  std::map<Monomial, Complex> terms_;
};

namespace detail {

/// All set partitions of {0..n-1}, each block ascending.
inline std::vector<std::vector<std::vector<int>>> set_partitions(int n) {
  std::vector<std::vector<std::vector<int>>> out;
  std::vector<int> label(n, 0);
  // Restricted growth strings enumerate each partition once.
  auto rec = [&](auto&& self, int i, int blocks) -> void {
    if (i == n) {
      std::vector<std::vector<int>> p(blocks);
      for (int k = 0; k < n; ++k) p[label[k]].push_back(k);
      out.push_back(std::move(p));
      return;
    }
    for (int b = 0; b <= blocks; ++b) {
      label[i] = b;
      self(self, i + 1, std::max(blocks, b + 1));
    }
  };
  if (n == 0) {
    out.push_back({});
  } else {
    rec(rec, 0, 0);
  }
  return out;
}

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Raw moment of a sub-string as a polynomial: zero unless balanced.
inline MomentPolynomial raw_moment(const PauliString& s) {
  if (s.is_identity()) return MomentPolynomial::constant(1.0);
  if (!s.balanced()) return {};
  auto m = tracked_moment(s);
  if (!m) throw Error("raw_moment: untracked moment " + s.to_string());
  return MomentPolynomial::moment(*m);
}

/// Joint cumulant of the factors of s, in raw moments of sub-strings.
inline MomentPolynomial cumulant_of(const PauliString& s) {
  MomentPolynomial out;
  const int n = s.num_sites();
  for (const auto& partition : set_partitions(n)) {
    const int k = static_cast<int>(partition.size());
    MomentPolynomial prod = MomentPolynomial::constant(((k - 1) % 2 ? -1.0 : 1.0) * factorial(k - 1));
    for (const auto& block : partition) {
      prod = prod * raw_moment(s.subset(block));
      if (prod.empty()) break;
    }
    out += prod;
  }
  return out;
}

}  // namespace detail

/// Moment-cumulant closure: expands <s> over set partitions of its factors,
/// keeps blocks of size <= order (higher joint cumulants vanish), and writes
/// each surviving cumulant back in tracked moments. Strings with no more
/// than `order` sites are returned as their tracked moment.
inline MomentPolynomial cumulant_close(const PauliString& s, int order) {
  if (order != 2 && order != 3) {
    throw ConfigError("cumulant_close: order must be 2 or 3, got " + std::to_string(order));
  }
  if (!s.balanced()) return {};
  if (s.num_sites() <= order) return detail::raw_moment(s);
  if (s.num_sites() > 4) throw Error("cumulant_close: more than four sites in " + s.to_string());
  MomentPolynomial out;
  const int n = s.num_sites();
  for (const auto& partition : detail::set_partitions(n)) {
    bool admissible = true;
    for (const auto& block : partition) admissible = admissible && static_cast<int>(block.size()) <= order;
    if (!admissible) continue;
    MomentPolynomial prod = MomentPolynomial::constant(1.0);
    for (const auto& block : partition) {
      prod = prod * detail::cumulant_of(s.subset(block));
      if (prod.empty()) break;
    }
    out += prod;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Equations of motion.

enum class CouplingKind : std::uint8_t { gamma, exchange };

/// Off-diagonal coupling between two labels, stored with a < b.
struct CouplingRef {
  CouplingKind kind = CouplingKind::gamma;
  int a = 0;
  int b = 0;
  auto operator<=>(const CouplingRef&) const = default;
};

/// Label of the summed site in a plan.
inline constexpr int kFreeLabel = 3;

struct PlanTerm {
  Complex coef;
  std::optional<CouplingRef> coupling;
  Monomial factors;
};

/// sum_{k not in support} coupling(s, k) * k_factor(k) * sum(prefactors)
struct FreeGroup {
  CouplingRef coupling;
  MomentRef k_factor;
  std::vector<PlanTerm> prefactors;  // no coupling, no free label

  [[nodiscard]] int anchor_label() const { return coupling.a == kFreeLabel ? coupling.b : coupling.a; }
};

struct FamilyEquation {
  Family family;
  std::vector<PlanTerm> local;
  std::vector<FreeGroup> free;
};

struct EomPlan {
  int order = 3;
  bool hamiltonian = false;
  std::vector<FamilyEquation> equations;

  [[nodiscard]] const FamilyEquation& equation(Family f) const {
    for (const auto& e : equations) {
      if (e.family == f) return e;
    }
    throw Error("EomPlan: family not tracked at this order");
  }

  /// Human-readable dump, one equation per tracked family.
  [[nodiscard]] std::string to_string() const;
};

inline MomentRef family_template(Family f) {
  MomentRef r;
  r.family = f;
  r.sites = {0, 1, 2};
  return r;
}

namespace detail {

struct LabelledSum {
  std::optional<CouplingRef> coupling;
  Complex weight;
  OperatorSum ops;
};

inline std::optional<CouplingRef> label_coupling(CouplingKind kind, int n, int m) {
  if (n == m) return std::nullopt;  // Gamma_nn = 1, J_nn = 0
  return CouplingRef{kind, std::min(n, m), std::max(n, m)};
}

/// Generator applied to a family template, as (coupling, operator) pieces
/// over labels. Uses Gamma symmetry to write the dissipator as
///   1/2 sum_{n,m} Gamma_nm (s+_m [O, s-_n] + [s+_m, O] s-_n),
/// so at least one of n, m lies in the support and a single free label suffices.
inline std::vector<LabelledSum> generator_on_labels(const PauliString& o, bool hamiltonian) {
  std::vector<int> labels;
  for (const auto& f : o.factors()) labels.push_back(f.site);
  labels.push_back(kFreeLabel);
  std::vector<LabelledSum> out;
  const OperatorSum op(o);
  for (int n : labels) {
    for (int m : labels) {
      if (n == kFreeLabel && m == kFreeLabel) continue;
      OperatorSum piece = multiply(sigma(m, SpinOp::plus), commutator(op, sigma(n, SpinOp::minus)));
      piece += multiply(commutator(sigma(m, SpinOp::plus), op), sigma(n, SpinOp::minus));
      if (!piece.empty()) out.push_back({label_coupling(CouplingKind::gamma, n, m), 0.5, std::move(piece)});
      if (hamiltonian && n != m) {
        OperatorSum h = multiply(sigma(n, SpinOp::plus), commutator(sigma(m, SpinOp::minus), op));
        h += multiply(commutator(sigma(n, SpinOp::plus), op), sigma(m, SpinOp::minus));
        if (!h.empty()) out.push_back({label_coupling(CouplingKind::exchange, n, m), Complex(0.0, 1.0), std::move(h)});
      }
    }
  }
  return out;
}

inline FamilyEquation derive_family_equation(Family family, int order, bool hamiltonian) {
  const PauliString o = family_template(family).as_string();
  using LocalKey = std::pair<std::optional<CouplingRef>, Monomial>;
  std::map<LocalKey, Complex> local;
  std::map<std::pair<CouplingRef, MomentRef>, MomentPolynomial> free;

  for (const auto& piece : generator_on_labels(o, hamiltonian)) {
    for (const auto& [s, c] : piece.ops.terms()) {
      const MomentPolynomial expr = cumulant_close(s, order);
      for (const auto& [mono, pc] : expr.terms()) {
        const Complex coef = piece.weight * c * pc;
        const bool coupled_to_free =
            piece.coupling && (piece.coupling->a == kFreeLabel || piece.coupling->b == kFreeLabel);
        if (!coupled_to_free) {
          for (const auto& m : mono) {
            if (m.involves(kFreeLabel)) throw Error("derive: free label without free coupling");
          }
          Monomial sorted = mono;
          std::sort(sorted.begin(), sorted.end());
          auto& slot = local[{piece.coupling, sorted}];
          slot += coef;
          continue;
        }
        std::optional<MomentRef> kf;
        Monomial rest;
        for (const auto& m : mono) {
          if (m.involves(kFreeLabel)) {
            if (kf) throw Error("derive: free label in more than one factor");
            kf = m;
          } else {
            rest.push_back(m);
          }
        }
        if (!kf) throw Error("derive: free coupling without free moment");
        free[{*piece.coupling, *kf}].add(rest, coef);
      }
    }
  }

  FamilyEquation eq{family, {}, {}};
  for (const auto& [key, c] : local) {
    if (std::abs(c) < kPruneTolerance) continue;
    eq.local.push_back({c, key.first, key.second});
  }
  for (const auto& [key, poly] : free) {
    FreeGroup g{key.first, key.second, {}};
    for (const auto& [mono, c] : poly.terms()) g.prefactors.push_back({c, std::nullopt, mono});
    if (!g.prefactors.empty()) eq.free.push_back(std::move(g));
  }
  return eq;
}

}  // namespace detail

/// Derives closed equations of motion for every family tracked at `order`.
inline EomPlan derive_eom_plan(int order, bool hamiltonian) {
  EomPlan plan;
  plan.order = order;
  plan.hamiltonian = hamiltonian;
  for (Family f : tracked_families(order)) {
    plan.equations.push_back(detail::derive_family_equation(f, order, hamiltonian));
  }
  return plan;
}

/// Cached plan; derivation runs once per (order, hamiltonian).
inline const EomPlan& eom_plan(int order, bool hamiltonian) {
  static std::mutex mutex;
  static std::map<std::pair<int, bool>, EomPlan> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find({order, hamiltonian});
  if (it == cache.end()) it = cache.emplace(std::pair{order, hamiltonian}, derive_eom_plan(order, hamiltonian)).first;
  return it->second;
}

inline std::string EomPlan::to_string() const {
  constexpr std::string_view labels = "abck";
  auto coef_str = [](Complex c) {
    std::ostringstream s;
    s << c.real();
    if (c.imag() != 0.0) s << (c.imag() < 0 ? "-" : "+") << std::abs(c.imag()) << "i";
    return s.str();
  };
  auto coupling_str = [&](const CouplingRef& r) {
    std::string s = r.kind == CouplingKind::gamma ? "G(" : "J(";
    return s + labels[r.a] + ',' + labels[r.b] + ')';
  };
  auto mono_str = [&](const Monomial& m) {
    std::string s;
    for (const auto& f : m) s += " " + f.to_string(labels);
    return s;
  };
  std::ostringstream out;
  out << "# closed equations of motion, order " << order << ", hamiltonian "
      << (hamiltonian ? "on" : "off") << "\n";
  for (const auto& eq : equations) {
    out << "d/dt " << family_template(eq.family).to_string(labels) << " =\n";
    for (const auto& t : eq.local) {
      out << "    " << coef_str(t.coef);
      if (t.coupling) out << " " << coupling_str(*t.coupling);
      out << mono_str(t.factors) << "\n";
    }
    for (const auto& g : eq.free) {
      out << "  + sum_k " << coupling_str(g.coupling) << " " << g.k_factor.to_string(labels) << " * [";
      bool first = true;
      for (const auto& t : g.prefactors) {
        out << (first ? " " : " + ") << coef_str(t.coef) << mono_str(t.factors);
        first = false;
      }
      out << " ]\n";
    }
  }
  return out.str();
}

}  // namespace superrad
