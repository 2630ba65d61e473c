#pragma once

// JSON run configuration for the batch front end, its validation, initial
// data construction, and the simulated-vs-linear rate comparison.
//
// Every invariant is checked in parse_run_config, so a bad file fails with a
// named ConfigError before any grid is built.

#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stefan/linear_analyzer.hpp"
#include "stefan/simulation.hpp"

namespace stefan {

struct Harmonic {
  int k = 0;
  double cos_amp = 0.0, sin_amp = 0.0;  // f0 += cos_amp cos kθ + sin_amp sin kθ
};

struct W0Description {
  std::string type = "constant";  // constant | gaussian-bump | file
  double value = 0.0;             // constant
  double amplitude = 0.0, width = 0.25;
  Vec2 center = Vec2::Zero();     // gaussian-bump
  std::string path;               // file: CSV with columns x,y,w
};

struct RandomHarmonics {
  bool enabled = false;
  unsigned long long seed = 0;
  double amplitude = 0.0;  // each coefficient uniform in [-amplitude, amplitude]
  int k_min = 2, k_max = 4;
};

struct RunConfig {
  std::string mode;  // simulate | analyze | zeta-table | verify
  SimConfig sim;
  double gamma = 4.0;
  int energy_order = 1;
  std::vector<Harmonic> harmonics;
  W0Description w0;
  RandomHarmonics random;
  Vec2 center = Vec2::Zero();
  bool blowup_is_result = false;  // StopOnBlowup ends the run normally
  double fit_t0 = 0.2, fit_t1 = 0.0;
  int k_report = 4;
  int snapshot_every = 0;  // in steps; 0 disables snapshots
  int analyzer_Nr = 100, analyzer_k_max = 8;
  std::vector<double> R_list;  // zeta-table and analyze sweeps
  double R_circle = 1.0;

  // Modes with nonzero initial amplitude.
  std::vector<int> excited_modes() const {
    std::set<int> ks;
    for (const Harmonic& h : harmonics)
      if (h.cos_amp != 0.0 || h.sin_amp != 0.0) ks.insert(h.k);
    if (random.enabled)
      for (int k = random.k_min; k <= random.k_max; ++k) ks.insert(k);
    return {ks.begin(), ks.end()};
  }
};

namespace config_detail {

[[noreturn]] inline void bad(const std::string& field, const std::string& what) {
  throw Error(ErrorKind::ConfigError, field + ": " + what);
}

template <class T>
T get(const nlohmann::json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad(key, "wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) bad(where + it.key(), "unknown key");
}

inline Vec2 get_vec2(const nlohmann::json& j, const std::string& key, const Vec2& fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = get<std::vector<double>>(j, key, {});
  if (v.size() != 2) bad(key, "expected two numbers");
  return Vec2(v[0], v[1]);
}

}  // namespace config_detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using namespace config_detail;
  if (!j.is_object()) bad("config", "top level must be an object");
  reject_unknown(j,
                 {"mode", "R_Omega", "K", "M", "Nr_in", "Nr_out", "dt", "t_end", "eps", "gamma", "energy_order", "d",
                  "initial", "diag_every", "blowup", "blowup_is_result", "fit_window", "k_report", "snapshot_every",
                  "analyzer", "R_list", "R_circle"},
                 "");
  RunConfig c;
  c.mode = get<std::string>(j, "mode", "");
  SimConfig& s = c.sim;
  s.R_omega = get(j, "R_Omega", s.R_omega);
  s.K = get(j, "K", s.K);
  s.M = get(j, "M", 4 * s.K);
  s.n_in = get(j, "Nr_in", s.n_in);
  s.n_out = get(j, "Nr_out", s.n_out);
  s.dt = get(j, "dt", s.dt);
  s.t_end = get(j, "t_end", s.t_end);
  s.eps = get(j, "eps", s.eps);
  s.blend_d = get(j, "d", 0.0);
  s.diag_every = get(j, "diag_every", s.diag_every);
  s.blowup = get(j, "blowup", s.blowup);
  c.gamma = get(j, "gamma", c.gamma);
  c.energy_order = get(j, "energy_order", c.energy_order);
  c.blowup_is_result = get(j, "blowup_is_result", false);
  c.k_report = get(j, "k_report", c.k_report);
  c.snapshot_every = get(j, "snapshot_every", 0);
  c.R_list = get<std::vector<double>>(j, "R_list", {});
  c.R_circle = get(j, "R_circle", 1.0);
  if (j.contains("fit_window")) {
    const auto w = get<std::vector<double>>(j, "fit_window", {});
    if (w.size() != 2) bad("fit_window", "expected [t0, t1]");
    c.fit_t0 = w[0];
    c.fit_t1 = w[1];
  }
  if (j.contains("analyzer")) {
    const auto& a = j.at("analyzer");
    reject_unknown(a, {"Nr", "k_max"}, "analyzer.");
    c.analyzer_Nr = get(a, "Nr", c.analyzer_Nr);
    c.analyzer_k_max = get(a, "k_max", c.analyzer_k_max);
  }
  if (j.contains("initial")) {
    const auto& in = j.at("initial");
    reject_unknown(in, {"harmonics", "w0", "random", "center"}, "initial.");
    c.center = get_vec2(in, "center", Vec2::Zero());
    if (in.contains("harmonics")) {
      if (!in.at("harmonics").is_array()) bad("initial.harmonics", "expected a list");
      for (const auto& h : in.at("harmonics")) {
        reject_unknown(h, {"k", "cos", "sin"}, "initial.harmonics.");
        if (!h.contains("k")) bad("initial.harmonics.k", "missing");
        c.harmonics.push_back({get(h, "k", 0), get(h, "cos", 0.0), get(h, "sin", 0.0)});
      }
    }
    if (in.contains("w0")) {
      const auto& w = in.at("w0");
      reject_unknown(w, {"type", "value", "amplitude", "width", "center", "path"}, "initial.w0.");
      c.w0.type = get<std::string>(w, "type", "constant");
      c.w0.value = get(w, "value", 0.0);
      c.w0.amplitude = get(w, "amplitude", 0.0);
      c.w0.width = get(w, "width", c.w0.width);
      c.w0.center = get_vec2(w, "center", Vec2::Zero());
      c.w0.path = get<std::string>(w, "path", "");
    }
    if (in.contains("random")) {
      const auto& r = in.at("random");
      reject_unknown(r, {"seed", "amplitude", "k_min", "k_max"}, "initial.random.");
      c.random.enabled = true;
      c.random.seed = get<unsigned long long>(r, "seed", 0);
      c.random.amplitude = get(r, "amplitude", 0.0);
      c.random.k_min = get(r, "k_min", c.random.k_min);
      c.random.k_max = get(r, "k_max", c.random.k_max);
    }
  }

  // Invariants.
  if (!c.mode.empty() && c.mode != "simulate" && c.mode != "analyze" && c.mode != "zeta-table" && c.mode != "verify")
    bad("mode", "must be simulate, analyze, zeta-table or verify");
  if (!(s.R_omega > 1.0)) bad("R_Omega", "must exceed 1");
  if (s.K < 2) bad("K", "must be at least 2");
  if (s.M < 4 * s.K) bad("M", "must be at least 4K");
  if (s.M % 2 != 0) bad("M", "must be even");
  if (s.n_in < 8) bad("Nr_in", "must be at least 8");
  if (s.n_out < 8) bad("Nr_out", "must be at least 8");
  if (!(s.dt > 0.0)) bad("dt", "must be positive");
  if (!(s.t_end >= s.dt)) bad("t_end", "must cover at least one step");
  if (!(s.eps >= 0.0)) bad("eps", "must be non-negative");
  if (s.blend_d < 0.0 || (s.blend_d > 0.0 && !(2.0 * s.blend_d < std::min(1.0, s.R_omega - 1.0))))
    bad("d", "band must satisfy 0 < 2d < min(1, R_Omega - 1)");
  if (s.diag_every < 1) bad("diag_every", "must be at least 1");
  if (!(s.blowup > 0.0)) bad("blowup", "must be positive");
  if (!(c.gamma > 0.0)) bad("gamma", "must be positive");
  if (c.energy_order != 0 && c.energy_order != 1) bad("energy_order", "must be 0 or 1");
  if (c.k_report < 0 || c.k_report > s.K) bad("k_report", "must lie in [0, K]");
  if (c.snapshot_every < 0) bad("snapshot_every", "must be non-negative");
  if (!(c.fit_t0 >= 0.0) || (c.fit_t1 > 0.0 && !(c.fit_t1 > c.fit_t0))) bad("fit_window", "need 0 <= t0 < t1");
  if (c.analyzer_Nr < 16) bad("analyzer.Nr", "must be at least 16");
  if (c.analyzer_k_max < 0) bad("analyzer.k_max", "must be non-negative");
  for (double R : c.R_list)
    if (!(R > c.R_circle)) bad("R_list", "every entry must exceed R_circle");
  if (!(c.R_circle > 0.0)) bad("R_circle", "must be positive");
  for (const Harmonic& h : c.harmonics)
    if (h.k < 0 || h.k > s.K) bad("initial.harmonics.k", "must lie in [0, K]");
  if (c.random.enabled && (c.random.k_min < 0 || c.random.k_max > s.K || c.random.k_min > c.random.k_max))
    bad("initial.random", "need 0 <= k_min <= k_max <= K");
  if (c.w0.type == "gaussian-bump") {
    if (!(c.w0.width > 0.0)) bad("initial.w0.width", "must be positive");
  } else if (c.w0.type == "file") {
    if (c.w0.path.empty()) bad("initial.w0.path", "missing");
  } else if (c.w0.type != "constant") {
    bad("initial.w0.type", "must be constant, gaussian-bump or file");
  }
  // Graph amplitude must keep r = 1 + f positive (checked on the bound).
  double bound = 0.0;
  for (const Harmonic& h : c.harmonics) bound += std::abs(h.cos_amp) + std::abs(h.sin_amp);
  if (c.random.enabled) bound += 2.0 * c.random.amplitude * (c.random.k_max - c.random.k_min + 1);
  if (!(bound < 1.0)) bad("initial", "harmonic amplitudes must keep 1 + f positive");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("config: not valid JSON (") + e.what() + ")");
  }
  return parse_run_config(j);
}

// Angular coefficients of f0: cos kθ has coefficient a sqrt(pi), the
// constant slot a sqrt(2 pi).
inline Vec initial_coefficients(const RunConfig& c, const AngularBasis& b) {
  Vec coef = Vec::Zero(b.ncoef());
  auto add = [&](int k, double ca, double sa) {
    if (k == 0) {
      coef(0) += ca * std::sqrt(2.0 * kPi);
      return;
    }
    coef(2 * k - 1) += ca * std::sqrt(kPi);
    coef(2 * k) += sa * std::sqrt(kPi);
  };
  for (const Harmonic& h : c.harmonics) add(h.k, h.cos_amp, h.sin_amp);
  if (c.random.enabled) {
    std::mt19937_64 rng(c.random.seed);
    // Drawn by hand from the raw engine so the values do not depend on the
    // standard library's distribution implementation.
    auto uniform = [&] { return c.random.amplitude * (2.0 * (double(rng() >> 11) * 0x1.0p-53) - 1.0); };
    for (int k = c.random.k_min; k <= c.random.k_max; ++k) {
      const double ca = uniform(), sa = uniform();
      add(k, ca, k == 0 ? 0.0 : sa);
    }
  }
  return coef;
}

// Nearest-neighbour lookup in a CSV with a header line and columns x,y,w.
inline std::function<double(const Vec2&)> load_w0_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "initial.w0.path: cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<Vec2> pts;
  std::vector<double> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, w;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, w, ','))
      throw Error(ErrorKind::ConfigError, "initial.w0.path: malformed row '" + line + "'");
    try {
      pts.emplace_back(std::stod(a), std::stod(b));
      vals.push_back(std::stod(w));
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigError, "initial.w0.path: malformed row '" + line + "'");
    }
  }
  if (pts.empty()) throw Error(ErrorKind::ConfigError, "initial.w0.path: no samples");
  return [pts = std::move(pts), vals = std::move(vals)](const Vec2& x) {
    size_t best = 0;
    for (size_t i = 1; i < pts.size(); ++i)
      if ((pts[i] - x).squaredNorm() < (pts[best] - x).squaredNorm()) best = i;
    return vals[best];
  };
}

inline std::function<double(const Vec2&)> initial_temperature(const RunConfig& c) {
  const W0Description w = c.w0;
  if (w.type == "gaussian-bump")
    return [w](const Vec2& x) { return w.value + w.amplitude * std::exp(-(x - w.center).squaredNorm() / (w.width * w.width)); };
  if (w.type == "file") return load_w0_file(w.path);
  return [v = w.value](const Vec2&) { return v; };
}

inline SimState initial_state(const RunConfig& c) {
  const GridPtr g = c.sim.grid();
  return prepare_initial_data(initial_temperature(c),
                              RadialGraph::from_coeffs(g->basis, initial_coefficients(c, *g->basis)), c.center, c.sim);
}

inline DiagnosticsOptions diagnostics_options(const RunConfig& c) {
  DiagnosticsOptions d;
  d.gamma = c.gamma;
  d.order = c.energy_order;
  d.k_report = c.k_report;
  d.blend_d = c.sim.blend_d;
  return d;
}

// ---------------------------------------------------------------------------
// Rate comparison: fitted decay of |f_k| against the linear eigenvalue.

struct RateRow {
  int k = 0;
  double simulated = 0.0;  // fitted decay rate, or for k = 1 the final amplitude
  double linear = 0.0;     // -lambda(k), or for k = 1 the null eigenvalue
  double gap = 0.0;        // relative, or absolute for k = 1
  bool pass = false;
};

struct RateReport {
  double R_omega = 0.0;
  std::vector<RateRow> rows;
  bool all_pass() const {
    for (const RateRow& r : rows)
      if (!r.pass) return false;
    return !rows.empty();
  }
};

// `summary` is the simulate output, `analysis` the analyze output; both must
// come from the same R_Omega. Rows cover the excited modes and k = 1.
inline RateReport compare_rates(const nlohmann::json& summary, const nlohmann::json& analysis,
                                double rel_gate = 0.15, double null_tol = 1e-6) {
  auto need = [](const nlohmann::json& j, const char* key, const char* which) -> const nlohmann::json& {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null())
      throw Error(ErrorKind::MissingData, std::string(which) + " lacks '" + key + "'");
    return j.at(key);
  };
  const double Rs = need(summary, "R_Omega", "summary").get<double>();
  const double Ra = need(analysis, "R_Omega", "analysis").get<double>();
  if (std::abs(Rs - Ra) > 1e-12 * std::max(1.0, Ra))
    throw Error(ErrorKind::MissingData, "summary and analysis are for different R_Omega", Rs - Ra);
  const auto& modes = need(analysis, "modes", "analysis");
  auto mode = [&](int k) -> const nlohmann::json& {
    for (const auto& m : modes)
      if (m.at("k").get<int>() == k) return m;
    throw Error(ErrorKind::MissingData, "analysis has no mode " + std::to_string(k));
  };

  RateReport rep;
  rep.R_omega = Rs;
  std::set<int> ks;
  for (int k : need(summary, "excited_modes", "summary").get<std::vector<int>>()) ks.insert(k);
  ks.insert(1);
  for (int k : ks) {
    RateRow row;
    row.k = k;
    if (k == 1) {
      const auto& amps = need(summary, "final_harmonics", "summary");
      if (amps.size() < 2) throw Error(ErrorKind::MissingData, "summary has no final f_1 amplitude");
      row.simulated = amps.at(1).get<double>();
      row.linear = mode(1).at("eigenvalues_top").at(0).get<double>();
      row.gap = std::max(std::abs(row.simulated), std::abs(row.linear));
      row.pass = row.gap <= null_tol;
    } else {
      const auto& rates = need(summary, "rates", "summary");
      const std::string name = "f_" + std::to_string(k);
      if (!rates.contains(name) || !rates.at(name).contains("rate"))
        throw Error(ErrorKind::MissingData, "summary has no fitted rate for " + name);
      row.simulated = rates.at(name).at("rate").get<double>();
      row.linear = -mode(k).at("leading").get<double>();
      row.gap = std::abs(row.simulated - row.linear) / std::abs(row.linear);
      row.pass = row.gap <= rel_gate;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace stefan
