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

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "superrad/integrator.hpp"

namespace superrad {

/// Real affine functional f(y) = constant + sum_i w_i Re(y_i) over a flat state.
/// Emission rate, excitation number and trace are all of this form, so their
/// dense interpolants follow from the state interpolant exactly.
struct AffineFunctional {
  double constant = 0.0;
  std::vector<std::pair<std::size_t, double>> weights;

  void add(std::size_t index, double w) { weights.emplace_back(index, w); }

  template <StateVector V>
  [[nodiscard]] double linear(const V& y) const {
    double sum = 0.0;
    for (const auto& [i, w] : weights) sum += w * std::real(y[i]);
    return sum;
  }

  template <StateVector V>
  [[nodiscard]] double operator()(const V& y) const {
    return constant + linear(y);
  }

  /// Scalar dense output of the functional over one step.
  template <StateVector V>
  [[nodiscard]] ScalarDenseStep project(const DenseStep<V>& step) const {
    ScalarDenseStep s = step.project([this](const V& v) { return linear(v); });
    s.c[0] += constant;
    return s;
  }
};

}  // namespace superrad
