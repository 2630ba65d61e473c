#pragma once

// Time loop with diagnostics on a cadence, plus run summaries (fitted rates,
// final center, tail variation of the center).
//
// Diagnostics at step n need level n + 1 for the centered time derivatives,
// so they run one step behind the solver.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stefan/energy_diag.hpp"

namespace stefan {

struct RunFailure {
  std::string kind;  // error_name of the ErrorKind
  std::string message;
  double t = 0.0;
  long step = 0;
};

struct RunResult {
  std::vector<DiagnosticsRecord> series;
  std::vector<CenterSample> center;  // every step, including t = 0
  SimState final_state;
  std::optional<RunFailure> failure;
};

// Called with every level that gets a diagnostics record.
using SnapshotHook = std::function<void(const SimState&)>;

inline RunResult run_simulation(const SimState& initial, const SimConfig& cfg, const DiagnosticsOptions& diag,
                                const SnapshotHook& hook = nullptr) {
  cfg.validate();
  RunResult out;
  const long steps = std::lround(cfg.t_end / cfg.dt);
  std::optional<SimState> prev;
  SimState cur = initial;
  out.center.push_back({cur.t, cur.center.a, cur.center.adot});

  auto record = [&](const SimState* next) {
    if (cur.step_index % cfg.diag_every != 0 && next) return;
    out.series.push_back(diagnose(LevelWindow{prev ? &*prev : nullptr, &cur, next}, diag));
    if (hook) hook(cur);
  };

  for (long n = 0; n < steps; ++n) {
    SimState next;
    try {
      next = advance(cur, cfg);
    } catch (const Error& e) {
      out.failure = RunFailure{error_name(e.kind()), e.what(), cur.t, cur.step_index};
      break;
    }
    record(&next);
    out.center.push_back({next.t, next.center.a, next.center.adot});
    prev = std::move(cur);
    cur = std::move(next);
  }
  record(nullptr);
  out.final_state = std::move(cur);
  return out;
}

// ---------------------------------------------------------------------------
// Summary

struct RateFit {
  std::string quantity;
  std::optional<DecayFit> fit;
  std::string error;  // why the fit is missing
};

struct RunSummary {
  double t_final = 0.0;
  long steps = 0;
  double zeta = 0.0;
  Vec2 a_bar = Vec2::Zero();    // final center
  double a_tail_variation = 0.0;  // sup |a(t_i) - a(t_j)| over the final tenth of the steps
  double adot_final = 0.0;
  double mass_drift = 0.0;        // max |M(t) - M(0)| / |M(0)|
  double max_dissipation_residual = 0.0;
  double max_identity_residual = 0.0;
  double min_E_total = 0.0;
  double min_positivity_margin = 0.0;
  double poincare_sup = 0.0;      // over t >= 0.05
  double max_orth_defect = 0.0;
  double final_f_norm = 0.0;      // max |f| at the end
  std::vector<RateFit> rates;     // E_total, |adot|, |f_k| for k = 0..k_report
  std::optional<RunFailure> failure;
};

inline double tail_variation(const std::vector<CenterSample>& c, double fraction = 0.1) {
  if (c.empty()) return 0.0;
  const size_t n = c.size(), start = n - std::max<size_t>(1, size_t(std::ceil(fraction * double(n))));
  double worst = 0.0;
  for (size_t i = start; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) worst = std::max(worst, (c[i].a - c[j].a).norm());
  return worst;
}

// Fits over [t0, t1] (t1 <= 0 means the end of the series).
inline RunSummary summarize(const RunResult& run, double R_circle, double t0, double t1 = 0.0) {
  RunSummary s;
  const SimState& fin = run.final_state;
  s.t_final = fin.t;
  s.steps = fin.step_index;
  s.zeta = zeta(R_circle, fin.grid->R_omega);
  s.a_bar = fin.center.a;
  s.adot_final = fin.center.adot.norm();
  s.a_tail_variation = tail_variation(run.center);
  s.final_f_norm = fin.f.max_abs();
  s.failure = run.failure;
  if (run.series.empty()) return s;

  const double m0 = run.series.front().mass_physical;
  s.min_E_total = std::numeric_limits<double>::infinity();
  s.min_positivity_margin = std::numeric_limits<double>::infinity();
  std::vector<double> t, E, adot;
  std::vector<std::vector<double>> amp;
  for (const DiagnosticsRecord& r : run.series) {
    s.mass_drift = std::max(s.mass_drift, std::abs(r.mass_physical - m0) / std::abs(m0));
    s.max_dissipation_residual = std::max(s.max_dissipation_residual, std::abs(r.dissipation_law_residual));
    s.max_identity_residual = std::max(s.max_identity_residual, std::abs(r.energy_identity_residual));
    s.min_E_total = std::min(s.min_E_total, r.E_total);
    s.min_positivity_margin = std::min(s.min_positivity_margin, r.positivity_margin);
    if (r.t >= 0.05 && std::isfinite(r.poincare_ratio)) s.poincare_sup = std::max(s.poincare_sup, r.poincare_ratio);
    s.max_orth_defect = std::max(s.max_orth_defect, r.orth_defect);
    t.push_back(r.t);
    E.push_back(r.E_total);
    adot.push_back(r.adot_norm);
    if (amp.size() < r.harmonic_amplitudes.size()) amp.resize(r.harmonic_amplitudes.size());
    for (size_t k = 0; k < r.harmonic_amplitudes.size(); ++k) amp[k].push_back(r.harmonic_amplitudes[k]);
  }
  if (!(t1 > 0.0)) t1 = t.back();
  auto fit = [&](const std::string& name, const std::vector<double>& q) {
    RateFit rf{name, std::nullopt, ""};
    try {
      rf.fit = decay_fit(t, q, t0, t1);
    } catch (const Error& e) {
      rf.error = e.what();
    }
    s.rates.push_back(std::move(rf));
  };
  fit("E_total", E);
  fit("adot", adot);
  for (size_t k = 0; k < amp.size(); ++k) fit("f_" + std::to_string(k), amp[k]);
  return s;
}

inline const RateFit* find_rate(const RunSummary& s, const std::string& name) {
  for (const RateFit& r : s.rates)
    if (r.quantity == name) return &r;
  return nullptr;
}

}  // namespace stefan
