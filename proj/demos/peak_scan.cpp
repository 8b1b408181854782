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

// Peak emission of a dense chain at second order, third order and exactly,
// followed by the local scaling exponent of the third-order peaks.

#include <cstdio>
#include <vector>

#include "superrad/superrad.hpp"

using namespace superrad;

int main() {
  const double a = 0.1;
  std::vector<PeakPoint> order3;
  std::printf("%4s %12s %12s %12s\n", "N", "order 2", "order 3", "exact");
  for (int n : {4, 6, 8}) {
    const System sys = build_system({LatticeKind::chain, ReservoirKind::free_space, PolarizationKind::circular_plus, n, a});
    double peak[3];
    for (Method m : {Method::order2, Method::order3, Method::exact}) {
      RunOptions opt;
      opt.method = m;
      opt.integrator = default_integrator(m);
      opt.stop_after_peak = true;
      peak[static_cast<int>(m)] = simulate(sys.array, sys.couplings, opt).trace.R_peak;
    }
    std::printf("%4d %12.6f %12.6f %12.6f\n", n, peak[0], peak[1], peak[2]);
    order3.push_back({n, peak[1]});
  }
  for (const auto& p : extract_alpha(order3)) {
    std::printf("alpha(N=%d) = %.4f (%s)\n", p.n, p.alpha, std::string(to_string(p.stencil)).c_str());
  }
}
