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

#include <sstream>

#include "superrad/observables.hpp"
#include "superrad/run.hpp"
#include "support.hpp"

using namespace superrad;

namespace {

RunOptions exact_options(double t_end) {
  RunOptions opt;
  opt.method = Method::exact;
  opt.integrator = default_integrator(Method::exact);
  opt.integrator.rel_tol = 1e-10;
  opt.integrator.abs_tol = 1e-12;
  opt.integrator.t_end = t_end;
  return opt;
}

RunResult run_dicke(int n, const RunOptions& opt) {
  const auto array = build_lattice(LatticeKind::chain, n, 0.1);
  return simulate(array, couplings_dicke(n), opt);
}

}  // namespace

TEST(EmissionRate, FromMoments) {
  const auto c = couplings_dicke(2);
  EXPECT_DOUBLE_EQ(emission_rate(Eigen::VectorXd::Ones(2), Eigen::MatrixXcd::Zero(2, 2), c), 2.0);
  EXPECT_DOUBLE_EQ(emission_rate(-Eigen::VectorXd::Ones(2), Eigen::MatrixXcd::Zero(2, 2), c), 0.0);
  Eigen::MatrixXcd corr = Eigen::MatrixXcd::Zero(2, 2);
  corr(0, 1) = corr(1, 0) = 0.25;
  EXPECT_DOUBLE_EQ(emission_rate(Eigen::VectorXd::Zero(2), corr, c), 1.5);
  EXPECT_THROW(emission_rate(Eigen::VectorXd::Zero(3), corr, c), ConfigError);
}

TEST(EmissionRate, AgreesAcrossRepresentations) {
  auto gen = oracle::rng(12);
  const auto c = oracle::random_psd_couplings(3, gen, false);
  EXPECT_NEAR(emission_rate(DensityMatrix::fully_excited(3), c), 3.0, 1e-14);
  EXPECT_NEAR(emission_rate(init_fully_excited<double>(3, 3), c), 3.0, 1e-14);
  EXPECT_NEAR(emission_rate(DensityMatrix::maximally_mixed(3), c), 1.5, 1e-14);
}

TEST(FindPeak, Examples) {
  auto parabola = [](double t) { return 2.0 - (t - 0.3137) * (t - 0.3137); };
  std::vector<double> grid;
  for (int k = 0; k <= 10; ++k) grid.push_back(0.1 * k);
  const Peak p = find_peak(parabola, grid);
  EXPECT_NEAR(p.time, 0.3137, 1e-5);
  EXPECT_GE(p.rate, parabola(0.3));
  EXPECT_FALSE(p.at_end);

  const Peak falling = find_peak([](double t) { return std::exp(-t); }, grid);
  EXPECT_EQ(falling.time, 0.0);
  EXPECT_EQ(falling.rate, 1.0);

  const Peak rising = find_peak([](double t) { return t; }, grid);
  EXPECT_TRUE(rising.at_end);
  EXPECT_EQ(rising.time, 1.0);

  EXPECT_THROW(find_peak(parabola, {}), ConfigError);
}

TEST(FindPeak, RefinementNeverLosesToSamples) {
  auto gen = oracle::rng(6);
  std::uniform_real_distribution<double> u(0.05, 0.95), w(2.0, 40.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double centre = u(gen), width = w(gen);
    auto f = [&](double t) { return std::exp(-width * (t - centre) * (t - centre)) + 0.1 * std::sin(7.0 * t); };
    std::vector<double> grid;
    for (int k = 0; k <= 20; ++k) grid.push_back(0.05 * k);
    double best = -1e300;
    for (double t : grid) best = std::max(best, f(t));
    EXPECT_GE(find_peak(f, grid).rate, best);
  }
}

TEST(DenseScalarTrace, InterpolatesAndIntegrates) {
  IntegratorConfig cfg;
  cfg.rel_tol = 1e-10;
  cfg.abs_tol = 1e-12;
  cfg.t_end = 2.0;
  DenseScalarTrace trace;
  using Vec = std::vector<double>;
  integrate([](double, const Vec& y, Vec& dy) { dy = {-y[0]}; }, Vec{1.0}, cfg, [&](const DenseStep<Vec>& s) {
    trace.push(s.project([](const Vec& v) { return v[0]; }));
    return true;
  });
  EXPECT_NEAR(trace(0.77), std::exp(-0.77), 1e-9);
  EXPECT_NEAR(trace.integral(), 1.0 - std::exp(-2.0), 1e-9);
  EXPECT_EQ(trace.knots().front(), 0.0);
  EXPECT_EQ(trace.knots().back(), 2.0);
  EXPECT_THROW(trace.push(ScalarDenseStep{5.0, 1.0, {}}), Error);
}

TEST(Peak, IndependentEmittersPeakAtStart) {
  RunOptions opt;
  opt.integrator.t_end = 3.0;
  const auto array = build_lattice(LatticeKind::chain, 10, 0.1);
  const auto res = simulate(array, couplings_independent(10), opt);
  EXPECT_NEAR(res.trace.R_peak, 10.0, 1e-12);
  EXPECT_EQ(res.trace.t_peak, 0.0);
  EXPECT_TRUE(res.trace.reliable);
}

TEST(Peak, DickeEightMatchesLadderOracle) {
  const auto [oracle_rate, oracle_time] = oracle::dicke_ladder_peak(8);
  const auto res = run_dicke(8, exact_options(1.0));
  EXPECT_NEAR(res.trace.R_peak, oracle_rate, 1e-6 * oracle_rate);
  EXPECT_NEAR(res.trace.t_peak, oracle_time, 1e-4);
  EXPECT_GT(res.trace.R_peak, 15.0);
}

TEST(Peak, CollectiveArraysBurst) {
  for (int n : {4, 6}) {
    const auto res = run_dicke(n, exact_options(1.0));
    EXPECT_GE(res.trace.R_peak, n);
    EXPECT_GT(res.trace.t_peak, 0.0);
  }
  const auto array = build_lattice(LatticeKind::chain, 6, 0.1);
  const auto res = simulate(array, couplings_free_space(array, polarization(PolarizationKind::circular_plus)),
                            exact_options(2.0));
  EXPECT_GE(res.trace.R_peak, 6.0);
}

TEST(Peak, EarlyStopKeepsThePeak) {
  RunOptions full = exact_options(5.0);
  RunOptions early = full;
  early.stop_after_peak = true;
  const auto a = run_dicke(6, full);
  const auto b = run_dicke(6, early);
  EXPECT_TRUE(b.stopped_early);
  EXPECT_LT(b.t_final, a.t_final);
  EXPECT_NEAR(a.trace.R_peak, b.trace.R_peak, 1e-9 * a.trace.R_peak);
  EXPECT_NEAR(a.trace.t_peak, b.trace.t_peak, 1e-6);
}

TEST(EmissionTrace, CsvDump) {
  EmissionTrace trace;
  trace.times = {0.0, 0.5};
  trace.rates = {2.0, 1.25};
  trace.R_peak = 2.0;
  std::ostringstream out;
  write_trace_csv(out, trace, {{"N", "2"}});
  EXPECT_EQ(out.str(), "# N=2\n# reliable=true\n# R_peak=2\n# t_peak=0\nt,R\n0,2\n0.5,1.25\n");
}
