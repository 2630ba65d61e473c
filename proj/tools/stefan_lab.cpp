// Batch front end: simulate | analyze | zeta-table | verify | compare-rates.
//
// Exit codes: 0 ok, 2 config error, 3 runtime failure, 4 verification
// failure. Errors are also written as JSON to stderr and <out>/error.json.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "stefan/output.hpp"
#include "stefan/run_config.hpp"
#include "stefan/verification.hpp"

namespace fs = std::filesystem;
using namespace stefan;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2, kExitRuntime = 3, kExitVerify = 4;

int thread_cap() {
  int n = int(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("STEFAN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(ErrorKind::ConfigError, "out: cannot write " + p.string());
  os << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::ConfigError, "out: cannot create " + out);
  return out;
}

json summary_json(const RunConfig& cfg, const RunResult& run, const RunSummary& s) {
  json j = to_json(s);
  j["R_Omega"] = cfg.sim.R_omega;
  j["K"] = cfg.sim.K;
  j["dt"] = cfg.sim.dt;
  j["excited_modes"] = cfg.excited_modes();
  std::vector<double> amps;
  for (int k = 0; k <= cfg.k_report; ++k) amps.push_back(harmonic_amplitude(run.final_state.f, k));
  j["final_harmonics"] = amps;
  bool nonneg = true, finite = true;
  for (const auto& r : run.series) {
    nonneg = nonneg && r.E_total >= 0.0;
    finite = finite && std::isfinite(r.mass_physical) && std::isfinite(r.E_total);
  }
  j["invariants"] = {{"mass_drift_le_1e-6", s.mass_drift <= 1e-6},
                     {"orthogonality_le_1e-7", s.max_orth_defect <= 1e-7},
                     {"E_total_nonnegative", nonneg},
                     {"finite", finite}};
  return j;
}

int simulate(const RunConfig& cfg, const fs::path& out) {
  const SimState init = initial_state(cfg);
  if (cfg.snapshot_every > 0) fs::create_directories(out / "snapshots");
  SnapshotHook hook;
  if (cfg.snapshot_every > 0)
    hook = [&](const SimState& st) {
      if (st.step_index % cfg.snapshot_every != 0) return;
      char name[48];
      std::snprintf(name, sizeof name, "step_%07ld.csv", st.step_index);
      std::ofstream os(out / "snapshots" / name, std::ios::binary);
      write_snapshot_csv(os, st);
    };
  const RunResult run = run_simulation(init, cfg.sim, diagnostics_options(cfg), hook);
  {
    std::ofstream os(out / "series.csv", std::ios::binary);
    write_series_csv(os, run.series);
  }
  const RunSummary s = summarize(run, cfg.R_circle, cfg.fit_t0, cfg.fit_t1);
  write_json(out / "summary.json", summary_json(cfg, run, s));
  if (run.failure && !(cfg.blowup_is_result && run.failure->kind == "StopOnBlowup"))
    throw Error(ErrorKind::SolverFailed, "run stopped at t = " + fmt17(run.failure->t) + ": " + run.failure->message);
  return 0;
}

int analyze(const RunConfig& cfg, const fs::path& out) {
  std::vector<double> Rs = cfg.R_list;
  if (Rs.empty()) Rs.push_back(cfg.sim.R_omega);
  std::ostringstream csv;
  csv << "R_Omega,k,top,leading,has_null,residual\n";
  json sweeps = json::array();
  for (double R : Rs) {
    const auto modes = analyze_modes(R, cfg.analyzer_Nr, cfg.analyzer_k_max, thread_cap());
    json mj = json::array();
    for (const auto& m : modes) {
      mj.push_back(to_json(m));
      csv << fmt17(R) << "," << m.k << "," << fmt17(m.eigenvalues.front()) << "," << fmt17(m.leading) << ","
          << (m.has_null ? 1 : 0) << "," << fmt17(m.residual) << "\n";
    }
    sweeps.push_back({{"R_Omega", R},
                      {"Nr", cfg.analyzer_Nr},
                      {"zeta", zeta(cfg.R_circle, R)},
                      {"largest_nonnull", largest_nonnull(modes)},
                      {"modes", mj}});
  }
  write_text(out / "spectrum.csv", csv.str());
  write_json(out / "analysis.json", Rs.size() == 1 ? sweeps[0] : json{{"sweeps", sweeps}});
  return 0;
}

int zeta_table(const RunConfig& cfg, const fs::path& out) {
  std::vector<double> Rs = cfg.R_list;
  if (Rs.empty())
    for (int i = 1; i <= 8; ++i) Rs.push_back(1.0 + 0.1 * i);
  std::ostringstream csv;
  csv << "R_Omega,zeta\n";
  json rows = json::array(), bracket = nullptr;
  for (size_t i = 0; i < Rs.size(); ++i) {
    const double z = zeta(cfg.R_circle, Rs[i]);
    csv << fmt17(Rs[i]) << "," << fmt17(z) << "\n";
    rows.push_back({{"R_Omega", Rs[i]}, {"zeta", z}});
    if (i > 0 && bracket.is_null() && (zeta(cfg.R_circle, Rs[i - 1]) > 0.0) != (z > 0.0))
      bracket = {Rs[i - 1], Rs[i]};
  }
  write_text(out / "zeta.csv", csv.str());
  write_json(out / "zeta.json", {{"R_circle", cfg.R_circle}, {"rows", rows}, {"sign_change", bracket}});
  return 0;
}

int verify(const fs::path& out) {
  VerifyOptions opt;
  opt.threads = thread_cap();
  Verifier v(opt);
  std::ostringstream csv;
  csv << "criterion,name,pass,seconds,detail\n";
  json rows = json::array();
  bool all = true;
  v.run_all([&](const CriterionResult& r) {
    std::printf("%-4s %2d  %-30s %s\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.detail.c_str());
    std::fflush(stdout);
    std::string detail = r.detail;
    for (char& ch : detail)
      if (ch == '"') ch = '\'';
    csv << r.id << "," << r.name << "," << (r.pass ? 1 : 0) << "," << fmt17(r.seconds) << ",\"" << detail << "\"\n";
    rows.push_back({{"criterion", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    all = all && r.pass;
  });
  write_text(out / "verify.csv", csv.str());
  write_json(out / "verify.json", {{"all_pass", all}, {"criteria", rows}});
  return all ? 0 : kExitVerify;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingData, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MissingData, path + " is not valid JSON (" + e.what() + ")");
  }
}

int compare(const std::string& summary, const std::string& analysis, const fs::path& out) {
  const RateReport rep = compare_rates(read_json(summary), read_json(analysis));
  std::ostringstream csv;
  csv << "k,simulated,linear,gap,pass\n";
  json rows = json::array();
  for (const RateRow& r : rep.rows) {
    csv << r.k << "," << fmt17(r.simulated) << "," << fmt17(r.linear) << "," << fmt17(r.gap) << ","
        << (r.pass ? 1 : 0) << "\n";
    rows.push_back({{"k", r.k}, {"simulated", r.simulated}, {"linear", r.linear}, {"gap", r.gap}, {"pass", r.pass}});
    std::printf("k=%d simulated %.6g linear %.6g gap %.3g %s\n", r.k, r.simulated, r.linear, r.gap,
                r.pass ? "PASS" : "FAIL");
  }
  write_text(out / "compare.csv", csv.str());
  write_json(out / "compare.json", {{"R_Omega", rep.R_omega}, {"all_pass", rep.all_pass()}, {"rows", rows}});
  return rep.all_pass() ? 0 : kExitVerify;
}

int report_error(const Error& e, const std::string& out) {
  const json j = {{"error", error_name(e.kind())}, {"message", e.what()}, {"magnitude", e.magnitude()}};
  std::cerr << j.dump() << "\n";
  if (!out.empty()) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (!ec) std::ofstream(fs::path(out) / "error.json") << j.dump(2) << "\n";
  }
  return e.kind() == ErrorKind::ConfigError ? kExitConfig : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-phase Stefan problem near a steady circle"};
  app.require_subcommand(1);
  std::string config, out, summary, analysis;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", config, "JSON run configuration");
    if (need_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
  };
  auto* sim = app.add_subcommand("simulate", "time-dependent run with diagnostics");
  auto* ana = app.add_subcommand("analyze", "linear spectrum per Fourier mode");
  auto* zt = app.add_subcommand("zeta-table", "stability parameter over a list of domain radii");
  auto* ver = app.add_subcommand("verify", "invariant suite with a pass/fail table");
  auto* cmp = app.add_subcommand("compare-rates", "fitted rates of a run against the linear spectrum");
  add_common(sim, true);
  add_common(ana, true);
  add_common(zt, true);
  add_common(ver, false);
  cmp->add_option("--summary", summary, "summary.json from simulate")->required();
  cmp->add_option("--analysis", analysis, "analysis.json from analyze")->required();
  cmp->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (cmp->parsed()) return compare(summary, analysis, prepare_out(out));
    RunConfig cfg;
    if (!config.empty()) cfg = load_run_config(config);
    const std::string mode = app.get_subcommands().front()->get_name();
    if (!cfg.mode.empty() && cfg.mode != mode)
      throw Error(ErrorKind::ConfigError, "mode: config is for '" + cfg.mode + "', invoked as '" + mode + "'");
    const fs::path dir = prepare_out(out);
    if (sim->parsed()) return simulate(cfg, dir);
    if (ana->parsed()) return analyze(cfg, dir);
    if (zt->parsed()) return zeta_table(cfg, dir);
    if (ver->parsed()) return verify(dir);
  } catch (const Error& e) {
    return report_error(e, out);
  } catch (const std::exception& e) {
    return report_error(Error(ErrorKind::SolverFailed, e.what()), out);
  }
  return 0;
}
