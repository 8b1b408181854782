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

// YAML run configurations and sweep plans. Requires yaml-cpp and nlohmann/json.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "superrad/run.hpp"
#include "superrad/scaling.hpp"

namespace superrad {

struct RunConfig {
  std::string name = "run";
  SystemParams system;
  RunOptions options;
  std::filesystem::path output_dir = "out";
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

class YamlReader {
 public:
  YamlReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Mark& mark, const std::string& msg) const {
    if (mark.is_null()) throw ConfigError(source_ + ": " + msg);
    throw ConfigError(source_ + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1) + ": " + msg);
  }

  YAML::Node load(std::istream& in) const {
    try {
      YAML::Node root = YAML::Load(in);
      if (root.IsNull()) fail(YAML::Mark::null_mark(), "empty configuration");
      if (!root.IsMap()) fail(root.Mark(), "top level must be a mapping of sections");
      return root;
    } catch (const YAML::ParserException& e) {
      fail(e.mark, e.msg);
    }
  }

  /// Throws on keys outside `allowed`.
  void check_keys(const YAML::Node& section, const std::string& name, const std::set<std::string>& allowed) const {
    if (!section.IsMap()) fail(section.Mark(), "section '" + name + "' must be a mapping");
    for (const auto& kv : section) {
      const std::string key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first.Mark(), "unknown key '" + key + "' in section '" + name + "'");
    }
  }

  template <class T>
  T scalar(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node.Mark(), "'" + key + "' must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node.Mark(), "cannot parse '" + key + "' value '" + node.Scalar() + "'");
    }
  }

  template <class T>
  std::vector<T> list(const YAML::Node& node, const std::string& key) const {
    std::vector<T> out;
    if (node.IsSequence()) {
      for (const auto& item : node) out.push_back(scalar<T>(item, key));
    } else {
      out.push_back(scalar<T>(node, key));
    }
    if (out.empty()) fail(node.Mark(), "'" + key + "' must not be empty");
    return out;
  }

  template <class E, class Parse>
  E enumeration(const YAML::Node& node, const std::string& key, Parse parse, const std::string& choices) const {
    const auto s = scalar<std::string>(node, key);
    const auto v = parse(s);
    if (!v) fail(node.Mark(), "invalid " + key + " '" + s + "' (expected " + choices + ")");
    return *v;
  }

  Method method(const YAML::Node& node) const {
    return enumeration<Method>(node, "order", parse_method, "2, 3 or exact");
  }

  void integrator(const YAML::Node& sec, IntegratorConfig& c) const {
    check_keys(sec, "integrator", {"rel_tol", "abs_tol", "t_end", "max_step", "dense_samples"});
    if (sec["rel_tol"]) c.rel_tol = scalar<double>(sec["rel_tol"], "rel_tol");
    if (sec["abs_tol"]) c.abs_tol = scalar<double>(sec["abs_tol"], "abs_tol");
    if (sec["t_end"]) c.t_end = scalar<double>(sec["t_end"], "t_end");
    if (sec["max_step"]) c.max_step = scalar<double>(sec["max_step"], "max_step");
    if (sec["dense_samples"]) c.dense_samples = scalar<int>(sec["dense_samples"], "dense_samples");
    try {
      c.validate();
    } catch (const ConfigError& e) {
      fail(sec.Mark(), e.what());
    }
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

inline std::optional<LatticeKind> parse_geometry(std::string_view s) {
  auto k = parse_lattice_kind(s);
  if (k == LatticeKind::custom) return std::nullopt;
  return k;
}

/// Spacing key required by the reservoir: a for free space, theta/pi for the waveguide.
inline double read_spacing(const YamlReader& rd, const YAML::Node& sec, ReservoirKind reservoir, bool required) {
  const bool wg = reservoir == ReservoirKind::waveguide;
  const char* want = wg ? "theta_over_pi" : "spacing";
  const char* other = wg ? "spacing" : "theta_over_pi";
  if (sec[other]) {
    rd.fail(sec[other].Mark(), std::string("'") + other + "' does not apply to reservoir '" +
                                   std::string(to_string(reservoir)) + "'; use '" + want + "'");
  }
  if (!sec[want]) {
    if (required) rd.fail(sec.Mark(), std::string("reservoir '") + std::string(to_string(reservoir)) + "' requires '" + want + "'");
    return 1.0;
  }
  const double v = rd.scalar<double>(sec[want], want);
  if (!(v > 0.0)) rd.fail(sec[want].Mark(), std::string("'") + want + "' must be positive");
  return v;
}

inline void check_lattice_size(const YamlReader& rd, const YAML::Node& node, LatticeKind geometry, int n) {
  if (geometry != LatticeKind::square && geometry != LatticeKind::cubic) return;
  const int side = per_side_for_total(geometry, n);
  const int dim = lattice_dimension(geometry);
  if ((dim == 2 ? side * side : side * side * side) != n) {
    rd.fail(node.Mark(), "N=" + std::to_string(n) + " is not a perfect " + (dim == 2 ? "square" : "cube") +
                             " for geometry '" + std::string(to_string(geometry)) + "'");
  }
}

}  // namespace detail

/// Parses a run configuration:
///
///   run:
///     geometry: chain          # chain | square | cubic
///     N: 4
///     spacing: 0.1             # a / lambda0 (free space); theta_over_pi for the waveguide
///     polarization: circular_plus
///     reservoir: free_space    # free_space | waveguide | dicke | independent
///     order: exact             # 2 | 3 | exact
///     hamiltonian: off
///   integrator: {rel_tol: 1e-8, t_end: 10}
///   output: {dir: out}
inline RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>") {
  const detail::YamlReader rd(source);
  const YAML::Node root = rd.load(in);
  rd.check_keys(root, "top level", {"run", "integrator", "output"});
  if (!root["run"]) rd.fail(root.Mark(), "missing section 'run'");
  const YAML::Node run = root["run"];
  rd.check_keys(run, "run",
                {"name", "geometry", "N", "spacing", "theta_over_pi", "polarization", "reservoir", "order",
                 "hamiltonian", "distance_classes", "max_exact_n", "stop_after_peak"});
  RunConfig cfg;
  if (run["name"]) cfg.name = rd.scalar<std::string>(run["name"], "name");
  if (run["reservoir"]) {
    cfg.system.reservoir = rd.enumeration<ReservoirKind>(run["reservoir"], "reservoir", parse_reservoir_kind,
                                                         "free_space, waveguide, dicke or independent");
  }
  if (run["geometry"]) {
    cfg.system.geometry =
        rd.enumeration<LatticeKind>(run["geometry"], "geometry", detail::parse_geometry, "chain, square or cubic");
  }
  if (!run["N"]) rd.fail(run.Mark(), "missing 'N'");
  cfg.system.n = rd.scalar<int>(run["N"], "N");
  if (cfg.system.n < 1) rd.fail(run["N"].Mark(), "'N' must be >= 1");
  detail::check_lattice_size(rd, run["N"], cfg.system.geometry, cfg.system.n);
  const bool needs_spacing =
      cfg.system.reservoir == ReservoirKind::free_space || cfg.system.reservoir == ReservoirKind::waveguide;
  cfg.system.spacing = detail::read_spacing(rd, run, cfg.system.reservoir, needs_spacing);
  if (run["polarization"]) {
    cfg.system.polarization = rd.enumeration<PolarizationKind>(run["polarization"], "polarization",
                                                               parse_polarization_kind,
                                                               "linear_z, circular_plus or circular_minus");
  }
  if (run["order"]) cfg.options.method = rd.method(run["order"]);
  cfg.options.integrator = default_integrator(cfg.options.method);
  if (run["hamiltonian"]) cfg.options.hamiltonian = rd.scalar<bool>(run["hamiltonian"], "hamiltonian");
  if (run["distance_classes"]) cfg.options.distance_classes = rd.scalar<bool>(run["distance_classes"], "distance_classes");
  if (run["stop_after_peak"]) cfg.options.stop_after_peak = rd.scalar<bool>(run["stop_after_peak"], "stop_after_peak");
  if (run["max_exact_n"]) cfg.options.max_exact_n = rd.scalar<int>(run["max_exact_n"], "max_exact_n");
  if (root["integrator"]) rd.integrator(root["integrator"], cfg.options.integrator);
  if (root["output"]) {
    rd.check_keys(root["output"], "output", {"dir"});
    if (root["output"]["dir"]) cfg.output_dir = rd.scalar<std::string>(root["output"]["dir"], "dir");
  }
  return cfg;
}

/// Parses a sweep plan:
///
///   sweep:
///     name: fig2d_waveguide
///     geometry: chain
///     reservoir: waveguide
///     theta_over_pi: [0.1, 0.2, 0.3]
///     N: [8, 16, 32, 64]
///     order: [3]
///   beta: {alpha: 2, window: 3}
inline SweepPlan parse_sweep_plan(std::istream& in, const std::string& source = "<plan>") {
  const detail::YamlReader rd(source);
  const YAML::Node root = rd.load(in);
  rd.check_keys(root, "top level", {"sweep", "integrator", "beta"});
  if (!root["sweep"]) rd.fail(root.Mark(), "missing section 'sweep'");
  const YAML::Node sw = root["sweep"];
  rd.check_keys(sw, "sweep",
                {"name", "geometry", "reservoir", "spacing", "theta_over_pi", "N", "order", "polarization",
                 "hamiltonian", "distance_classes", "max_exact_n"});
  SweepPlan plan;
  if (sw["name"]) plan.name = rd.scalar<std::string>(sw["name"], "name");
  if (sw["reservoir"]) {
    plan.reservoir = rd.enumeration<ReservoirKind>(sw["reservoir"], "reservoir", parse_reservoir_kind,
                                                   "free_space, waveguide, dicke or independent");
  }
  if (sw["geometry"]) {
    plan.geometry = rd.enumeration<LatticeKind>(sw["geometry"], "geometry", detail::parse_geometry, "chain, square or cubic");
  }
  const bool wg = plan.reservoir == ReservoirKind::waveguide;
  const bool needs_spacing = plan.reservoir == ReservoirKind::free_space || wg;
  const char* skey = wg ? "theta_over_pi" : "spacing";
  const char* other = wg ? "spacing" : "theta_over_pi";
  if (sw[other]) rd.fail(sw[other].Mark(), std::string("'") + other + "' does not apply to this reservoir; use '" + skey + "'");
  if (sw[skey]) {
    plan.spacings = rd.list<double>(sw[skey], skey);
    for (double a : plan.spacings) {
      if (!(a > 0.0)) rd.fail(sw[skey].Mark(), std::string("'") + skey + "' values must be positive");
    }
  } else if (needs_spacing) {
    rd.fail(sw.Mark(), std::string("reservoir requires '") + skey + "'");
  } else {
    plan.spacings = {1.0};
  }
  if (!sw["N"]) rd.fail(sw.Mark(), "missing 'N'");
  plan.sizes = rd.list<int>(sw["N"], "N");
  for (std::size_t i = 0; i < plan.sizes.size(); ++i) {
    if (plan.sizes[i] < 1) rd.fail(sw["N"].Mark(), "'N' values must be >= 1");
    detail::check_lattice_size(rd, sw["N"], plan.geometry, plan.sizes[i]);
    for (std::size_t j = 0; j < i; ++j) {
      if (plan.sizes[i] == plan.sizes[j]) rd.fail(sw["N"].Mark(), "duplicate N=" + std::to_string(plan.sizes[i]));
    }
  }
  if (sw["order"]) {
    plan.methods.clear();
    const YAML::Node o = sw["order"];
    if (o.IsSequence()) {
      for (const auto& item : o) plan.methods.push_back(rd.method(item));
    } else {
      plan.methods.push_back(rd.method(o));
    }
  }
  if (sw["polarization"]) {
    plan.polarizations.clear();
    const YAML::Node p = sw["polarization"];
    auto one = [&](const YAML::Node& n) {
      plan.polarizations.push_back(rd.enumeration<PolarizationKind>(n, "polarization", parse_polarization_kind,
                                                                    "linear_z, circular_plus or circular_minus"));
    };
    if (p.IsSequence()) {
      for (const auto& item : p) one(item);
    } else {
      one(p);
    }
  }
  if (sw["hamiltonian"]) plan.hamiltonian = rd.scalar<bool>(sw["hamiltonian"], "hamiltonian");
  if (sw["distance_classes"]) plan.distance_classes = rd.scalar<bool>(sw["distance_classes"], "distance_classes");
  if (sw["max_exact_n"]) plan.max_exact_n = rd.scalar<int>(sw["max_exact_n"], "max_exact_n");
  if (root["integrator"]) {
    IntegratorConfig c = default_integrator(plan.methods.front());
    rd.integrator(root["integrator"], c);
    plan.integrator = c;
  }
  if (root["beta"]) {
    rd.check_keys(root["beta"], "beta", {"alpha", "window"});
    if (root["beta"]["alpha"]) plan.beta_alpha = rd.scalar<double>(root["beta"]["alpha"], "alpha");
    if (root["beta"]["window"]) plan.beta_window = rd.scalar<int>(root["beta"]["window"], "window");
  }
  return plan;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_run_config(in, path.string());
}

inline SweepPlan load_sweep_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan file '" + path.string() + "'");
  return parse_sweep_plan(in, path.string());
}

// ---------------------------------------------------------------------------
// Canonical forms for provenance and hashing

inline nlohmann::ordered_json to_json(const IntegratorConfig& c) {
  return {{"rel_tol", c.rel_tol},
          {"abs_tol", c.abs_tol},
          {"t_end", c.t_end},
          {"max_step", std::isfinite(c.max_step) ? nlohmann::ordered_json(c.max_step) : nlohmann::ordered_json("inf")},
          {"dense_samples", c.dense_samples}};
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  return {{"name", c.name},
          {"geometry", to_string(c.system.geometry)},
          {"reservoir", to_string(c.system.reservoir)},
          {"polarization", to_string(c.system.polarization)},
          {"N", c.system.n},
          {"a_or_theta", c.system.spacing},
          {"order", to_string(c.options.method)},
          {"hamiltonian", c.options.hamiltonian},
          {"distance_classes", c.options.distance_classes},
          {"stop_after_peak", c.options.stop_after_peak},
          {"max_exact_n", c.options.max_exact_n},
          {"integrator", to_json(c.options.integrator)}};
}

inline nlohmann::ordered_json to_json(const SweepPlan& p) {
  nlohmann::ordered_json j;
  j["name"] = p.name;
  j["geometry"] = to_string(p.geometry);
  j["reservoir"] = to_string(p.reservoir);
  for (auto k : p.polarizations) j["polarization"].push_back(to_string(k));
  j["a_or_theta"] = p.spacings;
  j["N"] = p.sizes;
  for (auto m : p.methods) j["order"].push_back(to_string(m));
  j["hamiltonian"] = p.hamiltonian;
  j["distance_classes"] = p.distance_classes;
  j["max_exact_n"] = p.max_exact_n;
  j["integrator"] = p.integrator ? to_json(*p.integrator) : nlohmann::ordered_json("per-order defaults");
  j["beta"] = {{"alpha", p.beta_alpha}, {"window", p.beta_window}};
  return j;
}

template <class T>
std::string config_hash(const T& cfg) {
  return hex64(fnv1a64(to_json(cfg).dump()));
}

}  // namespace superrad
