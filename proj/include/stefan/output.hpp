#pragma once

// CSV and JSON writers for run artifacts. Numbers in CSV use 17 significant
// digits so identical runs give identical bytes.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stefan/linear_analyzer.hpp"
#include "stefan/simulation.hpp"

namespace stefan {

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Column order of the diagnostics CSV; f_k columns follow for k = 0..k_report.
inline const std::vector<std::string>& series_columns() {
  static const std::vector<std::string> cols = {
      "t",          "step",           "mass_physical",   "mass_fixed_residual", "energy_physical",
      "dissipation_physical", "dissipation_law_residual", "energy_identity_residual", "E_total",
      "D_total",    "Z_f",            "f_max",            "poincare_ratio",  "positivity_margin",   "a_x",
      "a_y",        "adot_norm",      "adot_gap",        "orth_defect",         "gmres_iterations"};
  return cols;
}

inline void write_series_csv(std::ostream& os, const std::vector<DiagnosticsRecord>& series) {
  size_t nk = 0;
  for (const auto& r : series) nk = std::max(nk, r.harmonic_amplitudes.size());
  const auto& cols = series_columns();
  for (size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  for (size_t k = 0; k < nk; ++k) os << ",f_" << k;
  os << "\n";
  for (const auto& r : series) {
    const double vals[] = {r.t,
                           double(r.step),
                           r.mass_physical,
                           r.mass_fixed_residual,
                           r.energy_physical,
                           r.dissipation_physical,
                           r.dissipation_law_residual,
                           r.energy_identity_residual,
                           r.E_total,
                           r.D_total,
                           r.Z_f,
                           r.f_max,
                           r.poincare_ratio,
                           r.positivity_margin,
                           r.center(0),
                           r.center(1),
                           r.adot_norm,
                           r.adot_gap,
                           r.orth_defect,
                           double(r.gmres_iterations)};
    bool first = true;
    for (double v : vals) {
      os << (first ? "" : ",") << fmt17(v);
      first = false;
    }
    for (size_t k = 0; k < nk; ++k)
      os << "," << (k < r.harmonic_amplitudes.size() ? fmt17(r.harmonic_amplitudes[k]) : std::string("nan"));
    os << "\n";
  }
}

// Temperature on the physical points of both phases and the interface radius.
inline void write_snapshot_csv(std::ostream& os, const SimState& st) {
  const MappedGeometry geom = st.geometry();
  const ReferenceGrid& g = *st.grid;
  os << "# t=" << fmt17(st.t) << " step=" << st.step_index << "\n";
  os << "phase,s,theta,x,y,w\n";
  for (int pass = 0; pass < 2; ++pass) {
    const bool inner = pass == 0;
    const PhaseGeometry& ph = inner ? geom.inner : geom.outer;
    const Mat& w = inner ? st.w.inner : st.w.outer;
    const Vec& s = inner ? g.s_in : g.s_out;
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j)
        os << (inner ? "inner," : "outer,") << fmt17(s(i)) << "," << fmt17(g.basis->theta()(j)) << ","
           << fmt17(ph.X1(i, j)) << "," << fmt17(ph.X2(i, j)) << "," << fmt17(w(i, j)) << "\n";
  }
  os << "interface,theta,r\n";
  for (int j = 0; j < g.M(); ++j)
    os << "interface," << fmt17(g.basis->theta()(j)) << "," << fmt17(1.0 + st.f.values(j)) << "\n";
}

inline nlohmann::json to_json(const DecayFit& f) {
  return {{"rate", f.rate}, {"amplitude", f.amplitude}, {"residual", f.residual}, {"samples", f.samples}};
}

// JSON cannot hold infinities; they become null.
inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json j;
  j["t_final"] = s.t_final;
  j["steps"] = s.steps;
  j["zeta"] = s.zeta;
  j["a_bar"] = {s.a_bar(0), s.a_bar(1)};
  j["a_tail_variation"] = s.a_tail_variation;
  j["adot_final"] = s.adot_final;
  j["final_f_max"] = s.final_f_norm;
  j["mass_drift"] = s.mass_drift;
  j["max_dissipation_law_residual"] = s.max_dissipation_residual;
  j["max_energy_identity_residual"] = s.max_identity_residual;
  j["min_E_total"] = finite_or_null(s.min_E_total);
  j["min_positivity_margin"] = finite_or_null(s.min_positivity_margin);
  j["poincare_sup"] = s.poincare_sup;
  j["max_orth_defect"] = s.max_orth_defect;
  nlohmann::json rates = nlohmann::json::object();
  for (const RateFit& r : s.rates) rates[r.quantity] = r.fit ? to_json(*r.fit) : nlohmann::json{{"error", r.error}};
  j["rates"] = rates;
  if (s.failure)
    j["failure"] = {{"kind", s.failure->kind}, {"message", s.failure->message}, {"t", s.failure->t},
                    {"step", s.failure->step}};
  else
    j["failure"] = nullptr;
  return j;
}

inline nlohmann::json to_json(const SpectrumResult& s) {
  return {{"k", s.k},
          {"leading", s.leading},
          {"has_null", s.has_null},
          {"residual", s.residual},
          {"max_imag", s.max_imag},
          {"eigenvalues_top", std::vector<double>(s.eigenvalues.begin(),
                                                  s.eigenvalues.begin() + std::min<size_t>(6, s.eigenvalues.size()))}};
}

}  // namespace stefan
