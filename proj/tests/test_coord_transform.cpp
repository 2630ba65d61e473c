#include <gtest/gtest.h>

#include <random>

#include "stefan/coord_transform.hpp"

using namespace stefan;

namespace {

GraphSample mode2(double theta, double amp = 0.05, double ft_amp = 0.0) {
  GraphSample g;
  g.f = amp * std::cos(2.0 * theta);
  g.f1 = -2.0 * amp * std::sin(2.0 * theta);
  g.f2 = -4.0 * amp * std::cos(2.0 * theta);
  g.ft = ft_amp * std::cos(3.0 * theta);
  return g;
}

// Mixed interface used by the cross-form checks: modes 2 and 3.
GraphSample mixed(double theta) {
  GraphSample g;
  g.f = 0.05 * std::cos(2.0 * theta) + 0.03 * std::sin(3.0 * theta);
  g.f1 = -0.1 * std::sin(2.0 * theta) + 0.09 * std::cos(3.0 * theta);
  g.f2 = -0.2 * std::cos(2.0 * theta) - 0.27 * std::sin(3.0 * theta);
  g.ft = 0.4 * std::cos(3.0 * theta) - 0.2;
  return g;
}

// Smooth test field in reference Cartesian coordinates with exact derivatives.
struct TestField {
  double v;
  Vec2 grad;
  Mat2 hess;
};

TestField test_field(const Vec2& x) {
  const double e = std::exp(0.3 * x(0) - 0.2 * x(1));
  const double sx = std::sin(1.1 * x(0) + 0.4 * x(1));
  const double cx = std::cos(1.1 * x(0) + 0.4 * x(1));
  TestField t;
  t.v = e * sx;
  t.grad = Vec2(e * (0.3 * sx + 1.1 * cx), e * (-0.2 * sx + 0.4 * cx));
  const double axx = 0.09 * sx + 2.0 * 0.3 * 1.1 * cx - 1.21 * sx;
  const double axy = -0.06 * sx + 0.3 * 0.4 * cx - 0.2 * 1.1 * cx - 0.44 * sx;
  const double ayy = 0.04 * sx - 2.0 * 0.2 * 0.4 * cx - 0.16 * sx;
  t.hess << e * axx, e * axy, e * axy, e * ayy;
  return t;
}

Vec2 map_point(const BlendConfig& cfg, const Vec2& xb, double amp, const Vec2& a) {
  const double s = xb.norm(), th = std::atan2(xb(1), xb(0));
  return evaluate_point(cfg, s, th, mode2(th, amp), a, Vec2::Zero()).X;
}

}  // namespace

TEST(Blend, ProfilesHaveDeclaredPlateaus) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  EXPECT_EQ(blend_chi(cfg, 1.0).v, 1.0);
  EXPECT_EQ(blend_chi(cfg, 1.0 - cfg.d).v, 1.0);
  EXPECT_EQ(blend_chi(cfg, 1.0 + cfg.d).v, 1.0);
  EXPECT_EQ(blend_chi(cfg, 0.2).v, 0.0);
  EXPECT_NEAR(blend_chi(cfg, 1.2).v, 0.0, 1e-15);
  EXPECT_EQ(blend_eta(cfg, 1.0 + cfg.d).v, 1.0);
  EXPECT_NEAR(blend_eta(cfg, 1.2).v, 0.0, 1e-15);
  EXPECT_NEAR(blend_eta(cfg, 1.2).d1, 0.0, 1e-12);
}

TEST(Blend, DerivativesMatchFiniteDifferences) {
  const BlendConfig cfg = BlendConfig::for_domain(1.5);
  const double h = 1e-6;
  for (double s : {0.5, 0.7, 0.93, 1.07, 1.2, 1.3, 1.45}) {
    for (auto fn : {blend_chi, blend_eta}) {
      const Smooth c = fn(cfg, s), p = fn(cfg, s + h), m = fn(cfg, s - h);
      EXPECT_NEAR(c.d1, (p.v - m.v) / (2 * h), 1e-6) << s;
      EXPECT_NEAR(c.d2, (p.d1 - m.d1) / (2 * h), 1e-5) << s;
    }
  }
}

TEST(BuildMap, IdentityIsExact) {
  auto basis = make_basis(8);
  auto grid = make_grid(basis, 1.2, 12, 12);
  const MappedGeometry g =
      build_map(grid, RadialGraph::zero(basis), Vec2::Zero(), Vec2::Zero(), BlendConfig::for_domain(1.2));
  for (const PhaseGeometry* ph : {&g.inner, &g.outer}) {
    EXPECT_EQ((ph->det.array() - 1.0).abs().maxCoeff(), 0.0);
    EXPECT_EQ((ph->rho.array() - 1.0).abs().maxCoeff(), 0.0);
    EXPECT_LT((ph->a11.array() - 1.0).abs().maxCoeff(), 1e-15);
    EXPECT_LT((ph->a22.array() - 1.0).abs().maxCoeff(), 1e-15);
    EXPECT_LT(ph->a12.cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT(ph->b1.cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT(ph->b2.cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_EQ(ph->xt1.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(ph->xt2.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(BuildMap, TranslationMovesInterfaceAndCore) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  const Vec2 a(0.1, 0.0);
  for (double th : {0.0, 0.7, 2.0, 4.5}) {
    const Vec2 xi(std::cos(th), std::sin(th));
    const PointGeometry p = evaluate_point(cfg, 1.0, th, GraphSample{}, a, Vec2::Zero());
    EXPECT_NEAR((p.X - (a + xi)).norm(), 0.0, 1e-15);
    const PointGeometry q = evaluate_point(cfg, 0.2, th, GraphSample{}, a, Vec2::Zero());
    EXPECT_NEAR((q.X - (a + 0.2 * xi)).norm(), 0.0, 1e-15);
  }
}

TEST(BuildMap, JacobianMatchesFiniteDifferences) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  const Vec2 a(0.01, -0.02);
  for (double s : {0.6, 1.0, 1.1}) {
    for (double th : {0.0, 1.0}) {
      const PointGeometry p = evaluate_point(cfg, s, th, mode2(th), a, Vec2::Zero());
      const Vec2 xb(s * std::cos(th), s * std::sin(th));
      const double h = 1e-6;
      Mat2 fd;
      for (int m = 0; m < 2; ++m) {
        Vec2 e = Vec2::Zero();
        e(m) = h;
        fd.col(m) = (map_point(cfg, xb + e, 0.05, a) - map_point(cfg, xb - e, 0.05, a)) / (2 * h);
      }
      EXPECT_LT((fd - p.jac).cwiseAbs().maxCoeff(), 1e-8) << s << " " << th;
      EXPECT_NEAR(p.det, fd.determinant(), 1e-8);
    }
  }
  // On the circle at theta = 0 the determinant is 1 + O(f).
  const PointGeometry p = evaluate_point(cfg, 1.0, 0.0, mode2(0.0), Vec2::Zero(), Vec2::Zero());
  EXPECT_NEAR(p.det, 1.0, 3 * 0.05);
}

TEST(BuildMap, InterfaceTrackingOnRandomGraphs) {
  auto basis = make_basis(12);
  const BlendConfig cfg = BlendConfig::for_domain(1.3);
  std::mt19937 rng(17);
  std::normal_distribution<double> nd(0.0, 0.01);
  for (int trial = 0; trial < 5; ++trial) {
    Vec c(basis->ncoef());
    for (int m = 0; m < c.size(); ++m) c(m) = nd(rng);
    const Vec2 a(nd(rng), nd(rng));
    const RadialGraph f = RadialGraph::from_coeffs(basis, c);
    double worst = 0.0;
    for (int j = 0; j < basis->M(); ++j) {
      const double th = basis->theta()(j);
      const PointGeometry p = evaluate_point(cfg, 1.0, th, sample_graph(c, th), a, Vec2::Zero());
      worst = std::max(worst, (p.X - (a + (1.0 + f.values(j)) * Vec2(std::cos(th), std::sin(th)))).norm());
    }
    EXPECT_LE(worst, 1e-12);
  }
}

TEST(BuildMap, SphereInvariantsRhoAndPsi) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  for (double th : {0.3, 1.9, 3.3}) {
    const GraphSample gs = mixed(th);
    const PointGeometry p = evaluate_point(cfg, 1.0, th, gs, Vec2::Zero(), Vec2::Zero());
    EXPECT_NEAR(p.rho, 1.0 + gs.f, 1e-15);
    EXPECT_NEAR(p.psi, p.rho, 1e-15);
  }
}

TEST(BuildMap, DegenerateAndClearanceErrors) {
  auto basis = make_basis(8);
  auto grid = make_grid(basis, 3.0, 16, 16);
  BlendConfig cfg = BlendConfig::for_domain(3.0);
  const RadialGraph shrink = RadialGraph::from_values(basis, Vec::Constant(basis->M(), -0.6));
  try {
    build_map(grid, shrink, Vec2::Zero(), Vec2::Zero(), cfg);
    FAIL() << "expected MapDegenerate";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MapDegenerate);
    EXPECT_LE(e.magnitude(), 0.0);
  }
  auto grid2 = make_grid(basis, 1.2, 12, 12);
  try {
    build_map(grid2, RadialGraph::zero(basis), Vec2(0.16, 0.0), Vec2::Zero(), BlendConfig::for_domain(1.2));
    FAIL() << "expected ClearanceViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ClearanceViolation);
  }
}

TEST(ClosedFormCoefficients, IdentityReducesToFlat) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  const ClosedFormCoefficients pc = closed_form_coefficients(cfg, 0.9, 0.4, GraphSample{}, Vec2::Zero());
  EXPECT_EQ((pc.a_pi - Mat2::Identity()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((pc.a_rho - Mat2::Identity()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(pc.b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ClosedFormCoefficients, PiAndRhoFormsAgreeOnBand) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  for (double s : {0.5, 0.8, 0.99, 1.0, 1.01}) {
    for (double th = 0.0; th < 6.28; th += 0.37) {
      const ClosedFormCoefficients pc = closed_form_coefficients(cfg, s, th, mode2(th), Vec2::Zero());
      EXPECT_LT((pc.a_pi - pc.a_rho).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_EQ(pc.a_pi(0, 1), pc.a_pi(1, 0));
      EXPECT_EQ(pc.a_rho(0, 1), pc.a_rho(1, 0));
    }
  }
}

TEST(ClosedFormCoefficients, NormalContractionOnSphere) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  for (double th = 0.0; th < 6.28; th += 0.5) {
    const GraphSample gs = mode2(th);
    const ClosedFormCoefficients pc = closed_form_coefficients(cfg, 1.0, th, gs, Vec2::Zero());
    const Vec2 n(std::cos(th), std::sin(th));
    const double r = 1.0 + gs.f, g2 = r * r + gs.f1 * gs.f1;
    EXPECT_NEAR(n.dot(pc.a_rho * n), g2 / (r * r * r * r), 1e-13);
  }
}

TEST(ClosedFormCoefficients, OutsidePureRegionIsRejected) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  EXPECT_THROW(closed_form_coefficients(cfg, 1.15, 0.0, GraphSample{}, Vec2::Zero()), Error);
}

// The pi form, the rho form and the chain-rule (divergence) form must apply
// the same operator to a smooth field, including the time-dependent drift.
TEST(ChainRule, AgreesWithClosedFormsOnBand) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  const Vec2 adot(0.3, -0.2), a(0.01, 0.02);
  double worst = 0.0;
  for (double s : {0.45, 0.7, 0.95, 1.0, 1.01}) {
    for (double th = 0.1; th < 6.28; th += 0.41) {
      const GraphSample gs = mixed(th);
      const PointGeometry p = evaluate_point(cfg, s, th, gs, a, adot);
      const ClosedFormCoefficients pc = closed_form_coefficients(cfg, s, th, gs, adot);
      const TestField w = test_field(Vec2(s * std::cos(th), s * std::sin(th)));
      const double divergence_form =
          ((p.G.cwiseProduct(w.hess)).sum() + p.div_G.dot(w.grad)) / p.det - p.adv.dot(w.grad);
      const double pi_form = (pc.a_pi.cwiseProduct(w.hess)).sum() + pc.b.dot(w.grad);
      const double rho_form = (pc.a_rho.cwiseProduct(w.hess)).sum() + pc.b.dot(w.grad);
      const double expanded = (p.a.cwiseProduct(w.hess)).sum() + p.b.dot(w.grad);
      worst = std::max({worst, std::abs(divergence_form - pi_form), std::abs(divergence_form - rho_form),
                        std::abs(expanded - pi_form)});
    }
  }
  EXPECT_LE(worst, 1e-8);
}

// The polar metric form used by the solver applies the same operator.
TEST(ChainRule, PolarMetricFormAgrees) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  const Vec2 adot(0.3, -0.2), a(0.02, 0.01);
  for (double s : {0.3, 0.8, 1.0, 1.1, 1.19}) {
    for (double th = 0.2; th < 6.28; th += 0.73) {
      const PointGeometry p = evaluate_point(cfg, s, th, mixed(th), a, adot);
      const double c = std::cos(th), sn = std::sin(th);
      const TestField w = test_field(Vec2(s * c, s * sn));
      // Polar derivatives of w from the Cartesian ones.
      const Vec2 er(c, sn), et(-s * sn, s * c);
      const double ws = w.grad.dot(er), wt = w.grad.dot(et);
      const double wss = er.dot(w.hess * er);
      const double wst = er.dot(w.hess * et) + w.grad.dot(Vec2(-sn, c));
      const double wtt = et.dot(w.hess * et) - s * w.grad.dot(er);
      const double polar = p.gss * wss + 2.0 * p.gst * wst + p.gtt * wtt + p.Bs * ws + p.Bt * wt;
      const double cart = (p.a.cwiseProduct(w.hess)).sum() + p.b.dot(w.grad);
      EXPECT_NEAR(polar, cart, 1e-11) << s << " " << th;
    }
  }
}

TEST(ChainRule, PureTranslationRegion) {
  const BlendConfig cfg = BlendConfig::for_domain(1.2);
  const Vec2 adot(0.4, 0.1);
  const PointGeometry p = evaluate_point(cfg, 0.2, 1.3, mode2(1.3), Vec2(0.01, 0.0), adot);
  EXPECT_LT((p.adv + adot).norm(), 1e-15);
  EXPECT_LT((p.G - Mat2::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(p.det, 1.0, 1e-15);
}

TEST(ChainRule, CoefficientsSymmetricEverywhere) {
  auto basis = make_basis(8);
  auto grid = make_grid(basis, 1.2, 10, 10);
  Vec c = Vec::Zero(basis->ncoef());
  c(3) = 0.05;
  c(6) = 0.03;
  const MappedGeometry g = build_map(grid, RadialGraph::from_coeffs(basis, c), Vec2::Zero(), Vec2(0.1, 0.0),
                                     BlendConfig::for_domain(1.2));
  EXPECT_GT(g.min_det(), 0.0);
  const PointGeometry p = evaluate_point(g.blend, 1.1, 0.5, sample_graph(c, 0.5), Vec2::Zero(), Vec2(0.1, 0.0));
  EXPECT_NEAR(p.a(0, 1), p.a(1, 0), 1e-15);
}

TEST(JumpFactor, ReferenceCases) {
  auto basis = make_basis(16);
  EXPECT_LT((jump_factor(RadialGraph::zero(basis)).array() - 1.0).abs().maxCoeff(), 1e-15);
  const RadialGraph cst = RadialGraph::from_values(basis, Vec::Constant(basis->M(), 0.4));
  EXPECT_LT((jump_factor(cst).array() - 1.4).abs().maxCoeff(), 1e-14);
}

TEST(JumpFactor, MatchesDirectFormula) {
  auto basis = make_basis(16);
  Vec v(basis->M());
  for (int j = 0; j < basis->M(); ++j) v(j) = 0.1 * std::cos(2.0 * basis->theta()(j));
  const Vec jf = jump_factor(RadialGraph::from_values(basis, v));
  for (int j = 0; j < basis->M(); ++j) {
    const double t = basis->theta()(j);
    const double r = 1.0 + 0.1 * std::cos(2.0 * t), r1 = -0.2 * std::sin(2.0 * t);
    EXPECT_NEAR(jf(j), r * r / std::sqrt(r * r + r1 * r1), 1e-12);
  }
}
