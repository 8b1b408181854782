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

// Core library (Eigen only). config.hpp and io.hpp add yaml-cpp and JSON.

#pragma once

#include "superrad/common.hpp"
#include "superrad/couplings.hpp"
#include "superrad/cumulant.hpp"
#include "superrad/exact.hpp"
#include "superrad/functional.hpp"
#include "superrad/geometry.hpp"
#include "superrad/integrator.hpp"
#include "superrad/observables.hpp"
#include "superrad/run.hpp"
#include "superrad/scaling.hpp"
#include "superrad/spin_algebra.hpp"
