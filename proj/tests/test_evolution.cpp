#include <gtest/gtest.h>

#include "stefan/evolution.hpp"

using namespace stefan;

namespace {

const double kSqrtPi = std::sqrt(kPi);

SimConfig coarse_config(double R = 1.2) {
  SimConfig cfg;
  cfg.R_omega = R;
  cfg.K = 8;
  cfg.n_in = 24;
  cfg.n_out = 24;
  cfg.dt = 4e-3;
  return cfg;
}

// Interface with cos 2 theta and cos 3 theta amplitudes (not coefficients).
RadialGraph cosines(BasisPtr b, double a2, double a3, double a1 = 0.0) {
  Vec c = Vec::Zero(b->ncoef());
  c(1) = a1 * kSqrtPi;
  c(3) = a2 * kSqrtPi;
  c(5) = a3 * kSqrtPi;
  return RadialGraph::from_coeffs(b, c);
}

SimState start(const SimConfig& cfg, double a2, double a3, double a1 = 0.0) {
  const GridPtr g = cfg.grid();
  return prepare_initial_data([](const Vec2&) { return 0.0; }, cosines(g->basis, a2, a3, a1), Vec2::Zero(), cfg);
}

SimState run_to(SimState st, const SimConfig& cfg, double T) {
  const int steps = int(std::lround(T / cfg.dt));
  for (int n = 0; n < steps; ++n) st = advance(st, cfg);
  return st;
}

}  // namespace

TEST(StefanVelocity, ConstantJumpMovesInterfaceOutward) {
  auto b = make_basis(8);
  const InterfaceGeometry ig = interface_geometry(RadialGraph::zero(b));
  const Vec ft = stefan_velocity(*b, Vec::Constant(b->M(), 0.3), ig, Vec2::Zero());
  EXPECT_LT((ft.array() - 0.3).abs().maxCoeff(), 1e-14);
}

TEST(StefanVelocity, CenterVelocityIsTranslationMode) {
  auto b = make_basis(8);
  const InterfaceGeometry ig = interface_geometry(RadialGraph::zero(b));
  const Vec ft = stefan_velocity(*b, Vec::Zero(b->M()), ig, Vec2(0.4, 0.0));
  EXPECT_LT((ft.array() + 0.4 * b->theta().array().cos()).abs().maxCoeff(), 1e-14);
}

TEST(StefanVelocity, MatchesPointwiseOracle) {
  auto b = make_basis(8);
  const RadialGraph f = cosines(b, 0.1, 0.0);
  const InterfaceGeometry ig = interface_geometry(f);
  const Vec jump = b->theta().array().cos();
  const Vec2 adot(0.2, -0.1);
  Vec oracle(b->M());
  for (int j = 0; j < b->M(); ++j) {
    const double th = b->theta()(j);
    const double r = 1.0 + 0.1 * std::cos(2 * th), dr = -0.2 * std::sin(2 * th);
    const double gm = std::hypot(r, dr);
    const Vec2 n((r * std::cos(th) + dr * std::sin(th)) / gm, (r * std::sin(th) - dr * std::cos(th)) / gm);
    oracle(j) = gm * gm / (r * r * r) * jump(j) - gm / r * adot.dot(n);
  }
  const VelocityOperator vel(b, ig, 0.0);
  EXPECT_LT((vel.values(jump, adot) - oracle).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((stefan_velocity(*b, jump, ig, adot) - b->truncate(oracle)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RegularizedVelocity, ZeroEpsIsStefanLaw) {
  auto b = make_basis(8);
  const InterfaceGeometry ig = interface_geometry(cosines(b, 0.08, 0.03));
  const Vec jump = (b->theta().array() * 2.0).sin() + 0.3;
  const Vec2 adot(0.1, 0.05);
  EXPECT_EQ((regularized_velocity(b, jump, ig, adot, 0.0) - stefan_velocity(*b, jump, ig, adot)).norm(), 0.0);
}

TEST(RegularizedVelocity, ModeWiseDampingOnCircle) {
  auto b = make_basis(8);
  const InterfaceGeometry ig = interface_geometry(RadialGraph::zero(b));
  const double eps = 0.05;
  for (int slot : {0, 3, 6, 9}) {
    const int k = b->wavenumber(slot);
    const Vec sk = harmonic(*b, slot);
    const Vec ft = regularized_velocity(b, sk, ig, Vec2::Zero(), eps);
    EXPECT_LT((ft - sk / (1.0 + eps * k * k)).cwiseAbs().maxCoeff(), 1e-12) << "k = " << k;
  }
}

TEST(RegularizedVelocity, LargeEpsKillsHigherModesButNotMean) {
  auto b = make_basis(8);
  const InterfaceGeometry ig = interface_geometry(RadialGraph::zero(b));
  const Vec jump = 0.5 + (b->theta().array() * 3.0).cos();
  const Projection p_small = harmonic_project(*b, regularized_velocity(b, jump, ig, Vec2::Zero(), 1e-2));
  const Projection p_large = harmonic_project(*b, regularized_velocity(b, jump, ig, Vec2::Zero(), 1e4));
  EXPECT_LT(p_large.P2plus.cwiseAbs().maxCoeff(), 1e-4 * p_small.P2plus.cwiseAbs().maxCoeff());
  EXPECT_NEAR(p_large.P0, 0.5, 1e-9);  // round-off of a matrix with norm ~ eps M^2
  EXPECT_NEAR(p_small.P0, 0.5, 1e-12);
}

TEST(Modulation, ConstantJumpGivesNoDrift) {
  auto b = make_basis(8);
  const VelocityOperator vel(b, interface_geometry(RadialGraph::zero(b)), 0.0);
  const ModulationResult m = solve_modulation_constraint(vel, Vec::Constant(b->M(), 0.7));
  EXPECT_LT(m.adot.norm(), 1e-14);
  EXPECT_NEAR(m.condition, 1.0, 1e-12);
}

TEST(Modulation, CosineJumpGivesUnitDrift) {
  auto b = make_basis(8);
  const VelocityOperator vel(b, interface_geometry(RadialGraph::zero(b)), 0.0);
  const ModulationResult m = solve_modulation_constraint(vel, Vec(b->theta().array().cos()));
  EXPECT_NEAR(m.adot(0), 1.0, 1e-13);
  EXPECT_NEAR(m.adot(1), 0.0, 1e-13);
  // Resulting velocity has no translation component.
  const Vec ft = vel.coeffs(Vec(b->theta().array().cos()), m.adot);
  EXPECT_LT(std::abs(ft(1)) + std::abs(ft(2)), 1e-13);
}

TEST(Modulation, FormulaRouteApproachesConstraintRouteUnderRefinement) {
  double gaps[2];
  int idx = 0;
  for (int n : {16, 32}) {
    SimConfig cfg = coarse_config();
    cfg.n_in = cfg.n_out = n;
    cfg.dt = 2e-3;
    const SimState st = run_to(start(cfg, 0.05, 0.03), cfg, 0.1);
    gaps[idx++] = (st.center.adot - st.info.adot_formula).norm();
  }
  EXPECT_LT(gaps[1], 0.5 * gaps[0]) << gaps[0] << " " << gaps[1];
}

TEST(InitialData, OffsetCircleIsRecenteredExactly) {
  auto b = make_basis(16);
  const double e = 0.05;
  Vec v(b->M());
  for (int j = 0; j < b->M(); ++j) {
    const double th = b->theta()(j);
    v(j) = e * std::cos(th) + std::sqrt(1.0 - e * e * std::sin(th) * std::sin(th)) - 1.0;
  }
  const Recentering rc = recenter(RadialGraph::from_values(b, v), 1e-8);
  EXPECT_NEAR(rc.shift(0), e, 1e-10);
  EXPECT_NEAR(rc.shift(1), 0.0, 1e-12);
  EXPECT_LT(rc.f.max_abs(), 1e-10);
}

TEST(InitialData, TranslationModeLeavesSecondOrderResidual) {
  auto b = make_basis(16);
  const double e = 0.02;
  const Recentering rc = recenter(cosines(b, 0.0, 0.0, e), 1e-8);
  EXPECT_LE(Vec2(rc.f.coeffs(1), rc.f.coeffs(2)).norm(), 1e-8);
  EXPECT_LT(rc.f.max_abs(), 2.0 * e * e);
  EXPECT_GT(rc.f.max_abs(), 0.1 * e * e);
}

TEST(InitialData, OrthogonalDataUnchanged) {
  auto b = make_basis(8);
  const RadialGraph f = cosines(b, 0.05, 0.03);
  const Recentering rc = recenter(f, 1e-8);
  EXPECT_EQ(rc.iterations, 0);
  EXPECT_EQ((rc.f.coeffs - f.coeffs).norm(), 0.0);
}

TEST(InitialData, RecenterReportsDivergence) {
  auto b = make_basis(8);
  try {
    recenter(cosines(b, 0.0, 0.0, 0.3), 1e-8, 1);
    FAIL() << "expected RecenterDiverged";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RecenterDiverged);
  }
}

TEST(InitialData, ConstantTemperatureIsRemovedByMassShift) {
  const SimConfig cfg = coarse_config();
  const GridPtr g = cfg.grid();
  const SimState st =
      prepare_initial_data([](const Vec2&) { return 0.37; }, RadialGraph::zero(g->basis), Vec2::Zero(), cfg);
  EXPECT_LT(st.w.inner.cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT(st.w.outer.cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(st.mass_shift, -0.37, 1e-14);
}

TEST(Advance, SteadyStateIsFixedPoint) {
  const SimConfig cfg = coarse_config();
  SimState st = start(cfg, 0.0, 0.0);
  for (int n = 0; n < 1000; ++n) st = advance(st, cfg);
  EXPECT_LE(st.f.max_abs(), 1e-10);
  EXPECT_LE(std::max(st.w.inner.cwiseAbs().maxCoeff(), st.w.outer.cwiseAbs().maxCoeff()), 1e-10);
  EXPECT_EQ(st.step_index, 1000);
}

TEST(Advance, StableModeTwoDecaysMonotonically) {
  const SimConfig cfg = coarse_config();
  SimState st = start(cfg, 0.05, 0.0);
  double prev = std::abs(st.f.coeffs(3));
  int increases = 0;
  for (int n = 0; n < 125; ++n) {
    st = advance(st, cfg);
    const double now = std::abs(st.f.coeffs(3));
    if (st.t > 0.02 && now > prev) ++increases;
    prev = now;
  }
  EXPECT_EQ(increases, 0);
  EXPECT_LT(prev, 0.5 * 0.05 * kSqrtPi);
}

TEST(Advance, SecondOrderInTimeFromSmoothState) {
  // Fine reference run to t0 supplies a smooth state and its history at every
  // coarse step size, away from the initial layer of incompatible data.
  SimConfig fine = coarse_config();
  fine.dt = 1e-4;
  SimState st = start(fine, 0.05, 0.03);
  std::vector<SimState> keep;
  for (int n = 1; n <= 1000; ++n) {
    st = advance(st, fine);
    if (n >= 920) keep.push_back(st);
  }
  Vec f[3];
  for (int i = 0; i < 3; ++i) {
    SimConfig cfg = fine;
    cfg.dt = 8e-3 / (1 << i);
    const int back = int(std::lround(cfg.dt / fine.dt));
    f[i] = run_to(attach_history(keep.back(), keep[keep.size() - 1 - back]), cfg, 0.08).f.coeffs;
  }
  const double ratio = (f[0] - f[1]).norm() / (f[1] - f[2]).norm();
  EXPECT_NEAR(ratio, 4.0, 0.5) << ratio;
}

TEST(Advance, OrthogonalityHeldWithoutProjection) {
  const SimConfig cfg = coarse_config();
  SimState st = start(cfg, 0.05, 0.03);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    st = advance(st, cfg);
    worst = std::max(worst, Vec2(st.f.coeffs(1), st.f.coeffs(2)).norm());
  }
  EXPECT_LE(worst, 10.0 * cfg.orth_tol);
  EXPECT_EQ(st.projections, 0);
}

TEST(Advance, RepresentationOfInitialCurveDoesNotMatter) {
  // The same physical curve written about two different raw centers.
  const SimConfig cfg = coarse_config();
  const GridPtr g = cfg.grid();
  const RadialGraph f0 = cosines(g->basis, 0.05, 0.03, 0.01);
  const Vec2 shift(0.015, -0.01);
  const RadialGraph f1 = reexpand_graph(f0, shift);
  auto zero = [](const Vec2&) { return 0.0; };
  SimState a = prepare_initial_data(zero, f0, Vec2::Zero(), cfg);
  SimState b = prepare_initial_data(zero, f1, shift, cfg);
  a = run_to(a, cfg, 0.1);
  b = run_to(b, cfg, 0.1);
  EXPECT_LT((a.f.coeffs - b.f.coeffs).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LT((a.center.a - b.center.a).norm(), 1e-4);
}

TEST(Advance, SmallRegularizationIsConsistent) {
  SimConfig c0 = coarse_config(), c1 = coarse_config();
  c1.eps = 1e-6;
  SimState a = start(c0, 0.05, 0.03), b = start(c1, 0.05, 0.03);
  double worst = 0.0;
  for (int n = 0; n < 125; ++n) {
    a = advance(a, c0);
    b = advance(b, c1);
    worst = std::max(worst, (a.f.values - b.f.values).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-4);
  EXPECT_GT(worst, 0.0);
}

TEST(Advance, BlowupGuardStopsUnstableRun) {
  SimConfig cfg = coarse_config(1.6);
  cfg.blowup = 0.03;
  Vec c = Vec::Zero(cfg.grid()->basis->ncoef());
  c(0) = 0.01;
  const GridPtr g = cfg.grid();
  SimState st = prepare_initial_data([](const Vec2&) { return 0.0; }, RadialGraph::from_coeffs(g->basis, c),
                                     Vec2::Zero(), cfg);
  try {
    run_to(st, cfg, 3.0);
    FAIL() << "expected StopOnBlowup";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StopOnBlowup);
    EXPECT_GT(e.magnitude(), 0.03);
  }
}

TEST(Advance, Deterministic) {
  const SimConfig cfg = coarse_config();
  const SimState a = run_to(start(cfg, 0.05, 0.03), cfg, 0.04);
  const SimState b = run_to(start(cfg, 0.05, 0.03), cfg, 0.04);
  EXPECT_EQ((a.f.coeffs - b.f.coeffs).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.w.inner - b.w.inner).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((a.center.a - b.center.a).norm(), 0.0);
}

TEST(SimConfig, RejectsInvalidValues) {
  SimConfig cfg;
  cfg.dt = -1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = SimConfig{};
  cfg.M = 10;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = SimConfig{};
  cfg.R_omega = 0.9;
  EXPECT_THROW(cfg.validate(), Error);
}
