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

// Result files for runs and sweeps. Every file carries the config hash.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "superrad/config.hpp"
#include "superrad/scaling.hpp"

#ifndef SUPERRAD_VERSION
#define SUPERRAD_VERSION "0.1.0"
#endif

namespace superrad {

namespace detail {

inline std::string fmt_double(double v, int digits = 12) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

/// Writes to a sibling temporary and renames, so readers never see half a file.
template <class Fn>
void write_atomically(const std::filesystem::path& path, Fn&& fill) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    fill(out);
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string series_tag(const SeriesResult& s) {
  return "order" + s.order + "_" + s.polarization + "_" + fmt_double(s.a_or_theta, 6);
}

}  // namespace detail

inline void write_records_csv(std::ostream& out, const ScalingResult& r, const std::string& hash) {
  out << "# sweep=" << r.name << "\n# config_hash=" << hash << "\n";
  out << "geometry,reservoir,polarization,order,a_or_theta,N,R_peak,t_peak,alpha_if_interior,reliable,status\n";
  for (const auto& rec : r.records) {
    if (!rec.done) continue;
    std::string status = rec.status;
    for (char& c : status) {
      if (c == ',' || c == '\n') c = ';';
    }
    out << rec.geometry << ',' << rec.reservoir << ',' << rec.polarization << ',' << rec.order << ','
        << detail::fmt_double(rec.a_or_theta) << ',' << rec.n << ',' << detail::fmt_double(rec.R_peak) << ','
        << detail::fmt_double(rec.t_peak) << ',' << (rec.alpha ? detail::fmt_double(*rec.alpha) : "") << ','
        << (rec.reliable ? "true" : "false") << ',' << status << "\n";
  }
}

inline void write_alpha_csv(std::ostream& out, const ScalingResult& r, const std::string& hash) {
  out << "# sweep=" << r.name << "\n# config_hash=" << hash << "\n";
  out << "polarization,order,a_or_theta,N,alpha,stencil\n";
  for (const auto& s : r.series) {
    for (const auto& a : s.alphas) {
      out << s.polarization << ',' << s.order << ',' << detail::fmt_double(s.a_or_theta) << ',' << a.n << ','
          << detail::fmt_double(a.alpha) << ',' << to_string(a.stencil) << "\n";
    }
  }
}

inline nlohmann::ordered_json sweep_json(const ScalingResult& r, const SweepPlan& plan, const std::string& hash) {
  nlohmann::ordered_json j;
  j["sweep"] = r.name;
  j["config_hash"] = hash;
  j["code_version"] = SUPERRAD_VERSION;
  j["plan"] = to_json(plan);
  j["tolerances"] = {{"order2", to_json(run_options_for(plan, Method::order2).integrator)},
                     {"order3", to_json(run_options_for(plan, Method::order3).integrator)},
                     {"exact", to_json(run_options_for(plan, Method::exact).integrator)}};
  for (const auto& rec : r.records) {
    if (!rec.done) continue;
    nlohmann::ordered_json e{{"N", rec.n},
                             {"polarization", rec.polarization},
                             {"order", rec.order},
                             {"a_or_theta", rec.a_or_theta},
                             {"R_peak", std::isnan(rec.R_peak) ? nlohmann::ordered_json() : nlohmann::ordered_json(rec.R_peak)},
                             {"t_peak", std::isnan(rec.t_peak) ? nlohmann::ordered_json() : nlohmann::ordered_json(rec.t_peak)},
                             {"reliable", rec.reliable},
                             {"status", rec.status}};
    if (!rec.warnings.empty()) e["warnings"] = rec.warnings;
    j["records"].push_back(e);
  }
  for (const auto& s : r.series) {
    nlohmann::ordered_json e{{"polarization", s.polarization}, {"order", s.order}, {"a_or_theta", s.a_or_theta}};
    e["alpha"] = nlohmann::ordered_json::array();
    for (const auto& a : s.alphas) e["alpha"].push_back({{"N", a.n}, {"alpha", a.alpha}, {"stencil", to_string(a.stencil)}});
    if (s.beta) {
      e["beta"] = {{"value", s.beta->beta},
                   {"alpha_fixed", r.beta_alpha},
                   {"window", {s.beta->n_min, s.beta->n_max}},
                   {"residual", s.beta->residual}};
    }
    j["series"].push_back(e);
  }
  j["failures"] = r.failures();
  return j;
}

/// Records, alpha table, JSON provenance and plot-ready two-column files.
inline void write_sweep_outputs(const std::filesystem::path& dir, const ScalingResult& r, const SweepPlan& plan) {
  std::filesystem::create_directories(dir);
  const std::string hash = config_hash(plan);
  detail::write_atomically(dir / "records.csv", [&](std::ostream& o) { write_records_csv(o, r, hash); });
  detail::write_atomically(dir / "alpha.csv", [&](std::ostream& o) { write_alpha_csv(o, r, hash); });
  detail::write_atomically(dir / "result.json", [&](std::ostream& o) { o << sweep_json(r, plan, hash).dump(2) << "\n"; });
  // alpha versus spacing at each N, gathered across series with the same order and polarization.
  std::map<std::string, std::map<int, std::map<double, double>>> by_spacing;
  for (const auto& s : r.series) {
    const std::string tag = detail::series_tag(s);
    detail::write_atomically(dir / ("lnN_lnR_" + tag + ".dat"), [&](std::ostream& o) {
      o << "# config_hash=" << hash << "\n# ln(N) ln(R_peak)\n";
      for (std::size_t idx : s.records) {
        const auto& rec = r.records[idx];
        if (rec.done && rec.reliable && rec.status == "ok") {
          o << detail::fmt_double(std::log(static_cast<double>(rec.n))) << ' ' << detail::fmt_double(std::log(rec.R_peak)) << "\n";
        }
      }
    });
    detail::write_atomically(dir / ("N_alpha_" + tag + ".dat"), [&](std::ostream& o) {
      o << "# config_hash=" << hash << "\n# N alpha (centered)\n";
      for (const auto& a : s.alphas) {
        if (a.stencil == Stencil::centered) o << a.n << ' ' << detail::fmt_double(a.alpha) << "\n";
      }
    });
    for (const auto& a : s.alphas) {
      if (a.stencil == Stencil::centered) by_spacing["order" + s.order + "_" + s.polarization][a.n][s.a_or_theta] = a.alpha;
    }
  }
  for (const auto& [tag, per_n] : by_spacing) {
    for (const auto& [n, values] : per_n) {
      if (values.size() < 2) continue;
      detail::write_atomically(dir / ("a_alpha_" + tag + "_N" + std::to_string(n) + ".dat"), [&](std::ostream& o) {
        o << "# config_hash=" << hash << "\n# a_or_theta alpha at N=" << n << "\n";
        for (const auto& [a, alpha] : values) o << detail::fmt_double(a) << ' ' << detail::fmt_double(alpha) << "\n";
      });
    }
  }
}

inline void write_run_trace(const std::filesystem::path& path, const RunConfig& cfg, const RunResult& res) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::vector<std::pair<std::string, std::string>> meta{
      {"config_hash", config_hash(cfg)},
      {"N", std::to_string(cfg.system.n)},
      {"a_or_theta", detail::fmt_double(cfg.system.spacing)},
      {"geometry", std::string(to_string(cfg.system.geometry))},
      {"order", std::string(to_string(cfg.options.method))},
      {"reservoir", std::string(to_string(cfg.system.reservoir))},
      {"polarization", std::string(to_string(cfg.system.polarization))},
      {"hamiltonian", cfg.options.hamiltonian ? "on" : "off"}};
  detail::write_atomically(path, [&](std::ostream& o) { write_trace_csv(o, res.trace, meta); });
}

}  // namespace superrad
