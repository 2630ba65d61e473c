#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stefan/output.hpp"
#include "stefan/run_config.hpp"

using namespace stefan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Field named in the message of the ConfigError thrown for `j`.
std::string rejected_field(const json& j) {
  try {
    parse_run_config(j);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ConfigError) return "wrong kind";
    const std::string msg = e.what();
    const std::string body = msg.substr(msg.find(": ") + 2);
    return body.substr(0, body.find(':'));
  }
  return "accepted";
}

json coarse() {
  return {{"R_Omega", 1.2}, {"K", 8}, {"Nr_in", 24}, {"Nr_out", 24}, {"dt", 4e-3}, {"t_end", 0.1},
          {"initial", {{"harmonics", {{{"k", 2}, {"cos", 0.05}}, {{"k", 3}, {"cos", 0.03}}}}}}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stefan_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

int run_lab(const std::string& args) {
  const int status = std::system((std::string(STEFAN_LAB) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST(RunConfig, DefaultsAndDerivedResolution) {
  const RunConfig c = parse_run_config(json::object());
  EXPECT_EQ(c.sim.K, 16);
  EXPECT_EQ(c.sim.M, 64);
  EXPECT_EQ(c.sim.n_in, 48);
  EXPECT_DOUBLE_EQ(c.sim.R_omega, 1.2);
  EXPECT_EQ(parse_run_config({{"K", 6}}).sim.M, 24);
}

TEST(RunConfig, EveryInvariantIsANamedError) {
  EXPECT_EQ(rejected_field({{"K", 8}, {"M", 30}}), "M");
  EXPECT_EQ(rejected_field({{"K", 8}, {"M", 33}}), "M");
  EXPECT_EQ(rejected_field({{"dt", 0.0}}), "dt");
  EXPECT_EQ(rejected_field({{"R_Omega", 1.0}}), "R_Omega");
  EXPECT_EQ(rejected_field({{"R_Omega", 1.2}, {"d", 0.1}}), "d");
  EXPECT_EQ(rejected_field({{"R_Omega", 3.0}, {"d", 0.5}}), "d");
  EXPECT_EQ(rejected_field({{"energy_order", 2}}), "energy_order");
  EXPECT_EQ(rejected_field({{"gamma", -1.0}}), "gamma");
  EXPECT_EQ(rejected_field({{"diag_every", 0}}), "diag_every");
  EXPECT_EQ(rejected_field({{"Nr_out", 4}}), "Nr_out");
  EXPECT_EQ(rejected_field({{"mode", "plot"}}), "mode");
  EXPECT_EQ(rejected_field({{"dtt", 1e-3}}), "dtt");
  EXPECT_EQ(rejected_field({{"K", "sixteen"}}), "K");
  EXPECT_EQ(rejected_field({{"fit_window", {0.5, 0.2}}}), "fit_window");
  EXPECT_EQ(rejected_field({{"R_list", {1.3, 0.9}}}), "R_list");
  EXPECT_EQ(rejected_field({{"initial", {{"harmonics", {{{"k", 40}, {"cos", 0.01}}}}}}}), "initial.harmonics.k");
  EXPECT_EQ(rejected_field({{"initial", {{"w0", {{"type", "spiral"}}}}}}), "initial.w0.type");
  EXPECT_EQ(rejected_field({{"initial", {{"harmonics", {{{"k", 2}, {"cos", 1.5}}}}}}}), "initial");
  EXPECT_EQ(rejected_field({{"analyzer", {{"Nr", 8}}}}), "analyzer.Nr");
  EXPECT_EQ(rejected_field(coarse()), "accepted");
}

TEST(RunConfig, HarmonicsMapToBasisCoefficients) {
  const RunConfig c = parse_run_config(coarse());
  const SimState st = initial_state(c);
  EXPECT_NEAR(harmonic_amplitude(st.f, 2), 0.05, 1e-3);
  EXPECT_NEAR(harmonic_amplitude(st.f, 3), 0.03, 1e-3);
  const Vec coef = initial_coefficients(c, *make_basis(8));
  EXPECT_DOUBLE_EQ(coef(3), 0.05 * std::sqrt(kPi));
  EXPECT_DOUBLE_EQ(coef(5), 0.03 * std::sqrt(kPi));
  EXPECT_EQ(c.excited_modes(), (std::vector<int>{2, 3}));
}

TEST(RunConfig, RandomDataFollowsSeed) {
  json j = coarse();
  j["initial"]["random"] = {{"seed", 7}, {"amplitude", 0.005}, {"k_min", 2}, {"k_max", 5}};
  const auto b = make_basis(8);
  const Vec a1 = initial_coefficients(parse_run_config(j), *b), a2 = initial_coefficients(parse_run_config(j), *b);
  j["initial"]["random"]["seed"] = 8;
  const Vec a3 = initial_coefficients(parse_run_config(j), *b);
  EXPECT_EQ(a1, a2);
  EXPECT_GT((a1 - a3).norm(), 1e-4);
  for (int m = 2 * 5 + 1; m < a1.size(); ++m) EXPECT_EQ(a1(m), 0.0);
}

TEST(RunConfig, TemperatureDescriptions) {
  json j = coarse();
  j["initial"]["w0"] = {{"type", "gaussian-bump"}, {"value", 0.1}, {"amplitude", 0.5}, {"width", 0.2},
                        {"center", {0.3, 0.0}}};
  const auto bump = initial_temperature(parse_run_config(j));
  EXPECT_DOUBLE_EQ(bump(Vec2(0.3, 0.0)), 0.6);
  EXPECT_NEAR(bump(Vec2(0.5, 0.0)), 0.1 + 0.5 * std::exp(-1.0), 1e-15);

  const fs::path dir = scratch("w0");
  fs::create_directories(dir);
  std::ofstream(dir / "w0.csv") << "x,y,w\n0,0,1.5\n1,0,-2\n";
  j["initial"]["w0"] = {{"type", "file"}, {"path", (dir / "w0.csv").string()}};
  const auto file = initial_temperature(parse_run_config(j));
  EXPECT_EQ(file(Vec2(0.2, 0.1)), 1.5);
  EXPECT_EQ(file(Vec2(0.8, -0.1)), -2.0);
  j["initial"]["w0"]["path"] = (dir / "missing.csv").string();
  EXPECT_THROW(initial_temperature(parse_run_config(j)), Error);
}

TEST(CompareRates, GatesAndNullMode) {
  const json analysis = {{"R_Omega", 1.2},
                         {"modes",
                          {{{"k", 1}, {"leading", -14.7}, {"eigenvalues_top", {3e-16, -14.7}}},
                           {{"k", 2}, {"leading", -3.7}, {"eigenvalues_top", {-3.7}}},
                           {{"k", 3}, {"leading", -9.46}, {"eigenvalues_top", {-9.46}}}}}};
  json summary = {{"R_Omega", 1.2},
                  {"excited_modes", {2, 3}},
                  {"final_harmonics", {1e-4, 0.0, 1e-3}},
                  {"rates", {{"f_2", {{"rate", 3.6}}}, {"f_3", {{"rate", 9.0}}}}}};
  const RateReport ok = compare_rates(summary, analysis);
  ASSERT_EQ(ok.rows.size(), 3u);
  EXPECT_EQ(ok.rows[0].k, 1);
  EXPECT_TRUE(ok.rows[0].pass);
  EXPECT_NEAR(ok.rows[1].gap, 0.1 / 3.7, 1e-12);
  EXPECT_TRUE(ok.all_pass());

  summary["rates"]["f_3"]["rate"] = 7.0;  // 26% off
  EXPECT_FALSE(compare_rates(summary, analysis).all_pass());
  summary["final_harmonics"][1] = 1e-5;  // null mode gated absolutely
  EXPECT_FALSE(compare_rates(summary, analysis).rows[0].pass);

  summary["R_Omega"] = 1.6;
  try {
    compare_rates(summary, analysis);
    FAIL() << "mismatched R accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingData);
  }
  summary["R_Omega"] = 1.2;
  summary["excited_modes"] = {4};
  EXPECT_THROW(compare_rates(summary, analysis), Error);
}

TEST(Output, SeriesColumnOrderIsStable) {
  const auto& cols = series_columns();
  ASSERT_EQ(cols.size(), 20u);
  EXPECT_EQ(cols.front(), "t");
  EXPECT_EQ(cols[6], "dissipation_law_residual");
  EXPECT_EQ(cols.back(), "gmres_iterations");
  std::ostringstream os;
  DiagnosticsRecord r;
  r.harmonic_amplitudes = {0.1, 0.2};
  write_series_csv(os, {r});
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')).substr(os.str().find(",f_0")), ",f_0,f_1");
}

TEST(Output, SeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23}) EXPECT_EQ(std::stod(fmt17(v)), v);
  EXPECT_EQ(fmt17(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(fmt17(std::nan("")), "nan");
}

TEST(Simulation, RepeatedRunsAreByteIdentical) {
  const RunConfig c = parse_run_config(coarse());
  auto once = [&] {
    const RunResult r = run_simulation(initial_state(c), c.sim, diagnostics_options(c));
    std::ostringstream os;
    write_series_csv(os, r.series);
    os << to_json(summarize(r, 1.0, 0.02)).dump();
    return os.str();
  };
  EXPECT_EQ(once(), once());
}

TEST(Simulation, BlowupIsCapturedNotThrown) {
  json j = coarse();
  j["R_Omega"] = 1.6;
  j["blowup"] = 0.051;
  j["t_end"] = 2.0;
  j["initial"] = {{"harmonics", {{{"k", 0}, {"cos", 0.05}}}}};
  const RunConfig c = parse_run_config(j);
  const RunResult r = run_simulation(initial_state(c), c.sim, diagnostics_options(c));
  ASSERT_TRUE(r.failure.has_value());
  EXPECT_EQ(r.failure->kind, "StopOnBlowup");
  EXPECT_FALSE(r.series.empty());
  EXPECT_LT(r.final_state.t, 2.0);
}

TEST(Simulation, CadenceAndTailVariation) {
  json j = coarse();
  j["diag_every"] = 5;
  const RunConfig c = parse_run_config(j);
  const RunResult r = run_simulation(initial_state(c), c.sim, diagnostics_options(c));
  EXPECT_EQ(r.series.size(), 6u);  // steps 0, 5, ..., 25
  EXPECT_EQ(r.series.back().step, 25);
  EXPECT_EQ(r.center.size(), 26u);

  // The final tenth of 20 samples is the last two.
  std::vector<CenterSample> c2(20);
  for (int i = 0; i < 20; ++i) c2[i].a = Vec2(i == 19 ? 1e-3 : 0.0, 0.0);
  EXPECT_DOUBLE_EQ(tail_variation(c2), 1e-3);
  EXPECT_DOUBLE_EQ(tail_variation(c2, 0.05), 0.0);
}

TEST(Lab, ExitCodes) {
  const fs::path dir = scratch("lab");
  fs::create_directories(dir);
  std::ofstream(dir / "zeta.json") << R"({"mode": "zeta-table", "R_list": [1.1, 1.3, 1.5, 1.7]})";
  std::ofstream(dir / "bad.json") << R"({"K": 8, "M": 16})";
  std::ofstream(dir / "sim.json") << coarse().dump();
  std::ofstream(dir / "an16.json") << R"({"R_Omega": 1.6, "analyzer": {"Nr": 32, "k_max": 3}})";

  EXPECT_EQ(run_lab("zeta-table --config " + (dir / "zeta.json").string() + " --out " + (dir / "z").string()), 0);
  const json z = json::parse(slurp(dir / "z" / "zeta.json"));
  EXPECT_EQ(z["sign_change"], json({1.3, 1.5}));

  EXPECT_EQ(run_lab("simulate --config " + (dir / "bad.json").string() + " --out " + (dir / "b").string()), 2);
  EXPECT_EQ(json::parse(slurp(dir / "b" / "error.json"))["error"], "ConfigError");
  EXPECT_FALSE(fs::exists(dir / "b" / "series.csv"));

  EXPECT_EQ(run_lab("analyze --config " + (dir / "zeta.json").string() + " --out " + (dir / "m").string()), 2);
  EXPECT_EQ(run_lab("simulate"), 2);

  EXPECT_EQ(run_lab("simulate --config " + (dir / "sim.json").string() + " --out " + (dir / "s1").string()), 0);
  EXPECT_EQ(run_lab("simulate --config " + (dir / "sim.json").string() + " --out " + (dir / "s2").string()), 0);
  EXPECT_EQ(slurp(dir / "s1" / "series.csv"), slurp(dir / "s2" / "series.csv"));
  EXPECT_EQ(slurp(dir / "s1" / "summary.json"), slurp(dir / "s2" / "summary.json"));

  EXPECT_EQ(run_lab("analyze --config " + (dir / "an16.json").string() + " --out " + (dir / "a").string()), 0);
  EXPECT_EQ(run_lab("compare-rates --summary " + (dir / "s1" / "summary.json").string() + " --analysis " +
                    (dir / "a" / "analysis.json").string() + " --out " + (dir / "c").string()),
            3);
}
