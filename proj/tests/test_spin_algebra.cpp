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

#include <gtest/gtest.h>

#include <random>

#include "superrad/exact.hpp"
#include "superrad/spin_algebra.hpp"
#include "support.hpp"

using namespace superrad;

namespace {

PauliString s1(int site, SpinOp op) { return PauliString::single(site, op); }

void expect_sums_equal(const OperatorSum& a, const OperatorSum& b, double tol = 1e-13) {
  const OperatorSum d = a - b;
  for (const auto& [s, c] : d.terms()) EXPECT_LT(std::abs(c), tol) << s.to_string() << " differs by " << c;
}

/// Dense matrix of an OperatorSum on n sites.
Eigen::MatrixXcd dense(const OperatorSum& o, int n) {
  const int dim = 1 << n;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (const auto& [s, c] : o.terms()) {
    Eigen::MatrixXcd p = Eigen::MatrixXcd::Identity(dim, dim);
    for (const auto& f : s.factors()) p = p * oracle::dense_op(n, f.site, f.op);
    m += c * p;
  }
  return m;
}

}  // namespace

TEST(Multiply, OnSiteTable) {
  const OperatorSum pm = multiply(s1(0, SpinOp::plus), s1(0, SpinOp::minus));
  EXPECT_EQ(pm.size(), 2u);
  EXPECT_EQ(pm.coefficient(PauliString{}), Complex(0.5));
  EXPECT_EQ(pm.coefficient(s1(0, SpinOp::z)), Complex(0.5));
  EXPECT_TRUE(multiply(s1(0, SpinOp::plus), s1(0, SpinOp::plus)).empty());
  EXPECT_TRUE(multiply(s1(0, SpinOp::minus), s1(0, SpinOp::minus)).empty());
  const OperatorSum mp = multiply(s1(0, SpinOp::minus), s1(0, SpinOp::plus));
  EXPECT_EQ(mp.coefficient(PauliString{}), Complex(0.5));
  EXPECT_EQ(mp.coefficient(s1(0, SpinOp::z)), Complex(-0.5));
  EXPECT_EQ(multiply(s1(0, SpinOp::z), s1(0, SpinOp::plus)).coefficient(s1(0, SpinOp::plus)), Complex(1.0));
  EXPECT_EQ(multiply(s1(0, SpinOp::plus), s1(0, SpinOp::z)).coefficient(s1(0, SpinOp::plus)), Complex(-1.0));
  EXPECT_EQ(multiply(s1(0, SpinOp::z), s1(0, SpinOp::minus)).coefficient(s1(0, SpinOp::minus)), Complex(-1.0));
  EXPECT_EQ(multiply(s1(0, SpinOp::minus), s1(0, SpinOp::z)).coefficient(s1(0, SpinOp::minus)), Complex(1.0));
  EXPECT_EQ(multiply(s1(0, SpinOp::z), s1(0, SpinOp::z)).coefficient(PauliString{}), Complex(1.0));
}

TEST(Multiply, DifferentSitesCommute) {
  const OperatorSum p = multiply(s1(1, SpinOp::z), s1(2, SpinOp::plus));
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p.coefficient(PauliString{{1, SpinOp::z}, {2, SpinOp::plus}}), Complex(1.0));
  expect_sums_equal(p, multiply(s1(2, SpinOp::plus), s1(1, SpinOp::z)));
}

TEST(Multiply, AssociativeOnRandomTriples) {
  auto gen = oracle::rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    const OperatorSum a(oracle::random_string(4, gen));
    const OperatorSum b(oracle::random_string(4, gen));
    const OperatorSum c(oracle::random_string(4, gen));
    expect_sums_equal(multiply(multiply(a, b), c), multiply(a, multiply(b, c)));
  }
}

TEST(Multiply, AgreesWithDenseMatrices) {
  auto gen = oracle::rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const OperatorSum a(oracle::random_string(3, gen));
    const OperatorSum b(oracle::random_string(3, gen));
    EXPECT_LT((dense(multiply(a, b), 3) - dense(a, 3) * dense(b, 3)).norm(), 1e-13);
  }
}

TEST(PauliString, CanonicalForm) {
  const PauliString s{{3, SpinOp::minus}, {1, SpinOp::plus}};
  EXPECT_EQ(s.factors().front().site, 1);
  EXPECT_TRUE(s.balanced());
  EXPECT_EQ(s.adjoint(), (PauliString{{1, SpinOp::minus}, {3, SpinOp::plus}}));
  EXPECT_THROW((PauliString{{1, SpinOp::plus}, {1, SpinOp::z}}), ConfigError);
}

TEST(AdjointLindblad, SingleEmitterInversion) {
  const auto l = adjoint_lindblad(s1(0, SpinOp::z), couplings_independent(1), false);
  EXPECT_EQ(l.size(), 2u);
  EXPECT_NEAR(std::abs(l.coefficient(PauliString{}) - Complex(-1.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(l.coefficient(s1(0, SpinOp::z)) - Complex(-1.0)), 0.0, 1e-15);
}

TEST(AdjointLindblad, IndependentCoherenceDecays) {
  const PauliString o{{0, SpinOp::plus}, {1, SpinOp::minus}};
  const auto l = adjoint_lindblad(o, couplings_independent(2), false);
  ASSERT_EQ(l.size(), 1u);
  EXPECT_NEAR(std::abs(l.coefficient(o) - Complex(-1.0)), 0.0, 1e-15);
}

TEST(AdjointLindblad, MatchesDenseSuperoperator) {
  // Tr[(L^dag O) rho] = Tr[O L(rho)] for random rho and couplings, N = 3.
  auto gen = oracle::rng(8);
  std::normal_distribution<double> normal;
  for (bool h : {false, true}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto c = oracle::random_psd_couplings(3, gen, h);
      Eigen::MatrixXcd a(8, 8);
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) a(i, j) = Complex(normal(gen), normal(gen));
      }
      const Eigen::MatrixXcd rho = a * a.adjoint() / (a * a.adjoint()).trace();
      const PauliString o = oracle::random_string(3, gen);
      const Complex lhs = (dense(adjoint_lindblad(o, c, h), 3) * rho).trace();
      const Complex rhs = (dense(OperatorSum(o), 3) * oracle::dense_lindblad(rho, c, h)).trace();
      EXPECT_LT(std::abs(lhs - rhs), 1e-12) << o.to_string();
    }
  }
}

TEST(AdjointLindblad, TotalExcitationLosesEmissionRate) {
  auto gen = oracle::rng(21);
  const auto c = oracle::random_psd_couplings(3, gen, false);
  OperatorSum excitation;
  for (int n = 0; n < 3; ++n) {
    excitation.add(PauliString{}, 0.5);
    excitation.add(s1(n, SpinOp::z), 0.5);
  }
  OperatorSum emission;
  for (int n = 0; n < 3; ++n) {
    for (int m = 0; m < 3; ++m) emission += multiply(OperatorSum(s1(n, SpinOp::plus)), OperatorSum(s1(m, SpinOp::minus))) *= c.Gamma(n, m);
  }
  expect_sums_equal(adjoint_lindblad(excitation, c, true), -1.0 * emission, 1e-12);
}

TEST(AdjointLindblad, IdentityIsStationary) {
  auto gen = oracle::rng(2);
  const auto c = oracle::random_psd_couplings(4, gen, true);
  EXPECT_TRUE(adjoint_lindblad(PauliString{}, c, true).empty());
}

TEST(AdjointLindblad, MatchesOracleFiniteDifferences) {
  // d<O>/dt from the symbolic generator against a fourth-order central
  // difference of the exact trajectory, for every tracked family.
  auto gen = oracle::rng(99);
  for (int n : {4, 5}) {
    for (bool h : {false, true}) {
      const auto c = oracle::random_psd_couplings(n, gen, h);
      const DensityMatrix rho0 = DensityMatrix::fully_excited(n);
      const ExactLindblad lindblad(rho0, c, h);
      IntegratorConfig cfg;
      cfg.rel_tol = 1e-12;
      cfg.abs_tol = 1e-14;
      cfg.t_end = 0.6;
      const auto traj = solve(lindblad, rho0.data(), cfg);
      const double t = 0.4, dt = 0.01;
      const DensityMatrix at = lindblad.to_density(traj.at(t));
      const std::vector<PauliString> probes{
          s1(1, SpinOp::z),
          PauliString{{0, SpinOp::plus}, {2, SpinOp::minus}},
          PauliString{{1, SpinOp::z}, {3, SpinOp::z}},
          PauliString{{0, SpinOp::z}, {1, SpinOp::plus}, {3, SpinOp::minus}},
          PauliString{{0, SpinOp::z}, {2, SpinOp::z}, {3, SpinOp::z}}};
      for (const auto& o : probes) {
        auto value = [&](double s) { return moments_exact(lindblad.to_density(traj.at(s)), o); };
        const Complex fd = (-value(t + 2 * dt) + 8.0 * value(t + dt) - 8.0 * value(t - dt) + value(t - 2 * dt)) / (12.0 * dt);
        const Complex sym = moments_exact(at, adjoint_lindblad(o, c, h));
        EXPECT_LT(std::abs(fd - sym), 1e-6) << "N=" << n << " H=" << h << " O=" << o.to_string();
      }
    }
  }
}

TEST(CumulantClose, FourPointPairing) {
  const PauliString s{{1, SpinOp::plus}, {2, SpinOp::plus}, {3, SpinOp::minus}, {4, SpinOp::minus}};
  const auto p = cumulant_close(s, 3);
  const MomentRef c13{Family::c, {1, 3, 0}}, c24{Family::c, {2, 4, 0}}, c14{Family::c, {1, 4, 0}}, c23{Family::c, {2, 3, 0}};
  EXPECT_EQ(p.terms().size(), 2u);
  EXPECT_NEAR(std::abs(p.coefficient({c13, c24}) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(p.coefficient({c14, c23}) - 1.0), 0.0, 1e-15);
}

TEST(CumulantClose, FourZAtSecondOrder) {
  // Sum over pairings minus twice the product of the means, as in the
  // explicit part of the four-operator factorization.
  const PauliString s{{0, SpinOp::z}, {1, SpinOp::z}, {2, SpinOp::z}, {3, SpinOp::z}};
  const auto p = cumulant_close(s, 2);
  auto zz = [](int a, int b) { return MomentRef{Family::zz, {a, b, 0}}; };
  auto z = [](int a) { return MomentRef{Family::z, {a, 0, 0}}; };
  EXPECT_NEAR(std::abs(p.coefficient({zz(0, 1), zz(2, 3)}) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(p.coefficient({zz(0, 2), zz(1, 3)}) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(p.coefficient({zz(0, 3), zz(1, 2)}) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(p.coefficient({z(0), z(1), z(2), z(3)}) - (-2.0)), 0.0, 1e-15);
  EXPECT_EQ(p.terms().size(), 4u);
}

TEST(CumulantClose, ExactOnProductStates) {
  // Random diagonal product state on four sites: every connected
  // correlation vanishes, so the closure reproduces the exact moment.
  auto gen = oracle::rng(17);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4;
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(16, 16);
    std::vector<double> pe(n);
    for (auto& p : pe) p = u(gen);
    for (int x = 0; x < 16; ++x) {
      double w = 1.0;
      for (int a = 0; a < n; ++a) w *= ((x >> a) & 1) ? pe[a] : 1.0 - pe[a];
      rho(x, x) = w;
    }
    const DensityMatrix dm = DensityMatrix::from_dense(n, rho);
    auto value = [&](const MomentRef& m) { return moments_exact(dm, m.as_string()); };
    for (int order : {2, 3}) {
      for (const PauliString& s : {PauliString{{0, SpinOp::z}, {1, SpinOp::z}, {2, SpinOp::z}, {3, SpinOp::z}},
                                   PauliString{{0, SpinOp::plus}, {1, SpinOp::z}, {2, SpinOp::minus}, {3, SpinOp::z}}}) {
        EXPECT_NEAR(std::abs(cumulant_close(s, order).evaluate(value) - moments_exact(dm, s)), 0.0, 1e-12);
      }
    }
  }
}

TEST(CumulantClose, UnbalancedVanishesAndOrderChecked) {
  EXPECT_TRUE(cumulant_close(PauliString{{0, SpinOp::plus}, {1, SpinOp::z}, {2, SpinOp::z}, {3, SpinOp::z}}, 3).empty());
  EXPECT_TRUE(cumulant_close(PauliString{{0, SpinOp::plus}, {1, SpinOp::plus}, {2, SpinOp::minus}, {3, SpinOp::plus}}, 2).empty());
  EXPECT_THROW(cumulant_close(PauliString{{0, SpinOp::z}}, 4), ConfigError);
  EXPECT_THROW(cumulant_close(PauliString{{0, SpinOp::z}}, 1), ConfigError);
}

TEST(EomPlan, CoversTrackedFamilies) {
  const auto& p3 = eom_plan(3, false);
  EXPECT_EQ(p3.equations.size(), 5u);
  const auto& p2 = eom_plan(2, true);
  EXPECT_EQ(p2.equations.size(), 3u);
  const std::string dump = p3.to_string();
  for (const char* f : {"z", "C", "Z", "T", "Y"}) EXPECT_NE(dump.find(std::string("d/dt ") + f + "("), std::string::npos) << dump;
  EXPECT_EQ(&eom_plan(3, false), &p3);
}
