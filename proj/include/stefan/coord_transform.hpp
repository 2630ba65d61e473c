#pragma once

// Change of variables between the moving two-phase configuration and the
// fixed reference domain (unit disk + annulus 1 <= s <= R_Omega). The inverse
// map is
//   X(s, theta) = eta(s) a + s (1 + chi(s) f(theta)) e_r(theta),
// so the reference circle s = 1 lands on {a + (1 + f) e_r} and the outer wall
// stays fixed.

#include <memory>

#include "stefan/sphere_geometry.hpp"

namespace stefan {

struct BlendConfig {
  double R_omega = 1.2;
  double d = 0.02;            // half width of the plateau chi = 1 around s = 1
  double inner_start = 0.35;  // chi = 0 for s <= inner_start
  double ramp = 0.2;          // fraction of the outer annulus used to switch chi' on

  static BlendConfig for_domain(double R_omega) {
    BlendConfig c;
    c.R_omega = R_omega;
    c.d = 0.1 * std::min(1.0, R_omega - 1.0);
    return c;
  }
  void validate() const {
    if (!(R_omega > 1.0)) throw Error(ErrorKind::ConfigError, "R_Omega must exceed 1");
    if (!(d > 0.0) || !(2.0 * d < std::min(1.0, R_omega - 1.0)))
      throw Error(ErrorKind::ConfigError, "band width d must satisfy 0 < 2d < min(1, R_Omega - 1)");
    if (!(inner_start > 0.0 && inner_start < 1.0 - d))
      throw Error(ErrorKind::ConfigError, "inner blend start must lie in (0, 1 - d)");
    if (!(ramp > 0.0 && ramp <= 1.0)) throw Error(ErrorKind::ConfigError, "ramp must lie in (0, 1]");
  }
};

// Radial weight of f in the map.
inline Smooth blend_chi(const BlendConfig& c, double s) {
  if (s <= c.inner_start) return {0.0, 0.0, 0.0};
  if (s < 1.0 - c.d) {
    const double L = 1.0 - c.d - c.inner_start;
    const Smooth q = smoothstep5((s - c.inner_start) / L);
    return {q.v, q.d1 / L, q.d2 / (L * L)};
  }
  if (s <= 1.0 + c.d) return {1.0, 0.0, 0.0};
  // Outer side: chi' ramps on smoothly and then stays constant up to the wall.
  const double L = c.R_omega - 1.0 - c.d;
  const double t = std::min((s - 1.0 - c.d) / L, 1.0);
  const double beta = c.ramp, Q1 = 1.0 - 0.5 * beta;
  const Smooth q = smoothstep5(t / beta);
  return {1.0 - beta * smoothstep5_integral(t / beta) / Q1, -q.v / (Q1 * L),
          -q.d1 / (beta * Q1 * L * L)};
}

// Translation weight: 1 inside s <= 1 + d, 0 at the wall with zero slope.
inline Smooth blend_eta(const BlendConfig& c, double s) {
  if (s <= 1.0 + c.d) return {1.0, 0.0, 0.0};
  const double L = c.R_omega - 1.0 - c.d;
  const Smooth q = smoothstep5((s - 1.0 - c.d) / L);
  return {1.0 - q.v, -q.d1 / L, -q.d2 / (L * L)};
}

// Polar reference grids. Inner nodes sit at (i + 1/2) h with the last one on
// s = 1; outer nodes are uniform from 1 to R_Omega.
struct ReferenceGrid {
  BasisPtr basis;
  double R_omega = 1.2;
  int n_in = 0, n_out = 0;
  double h_in = 0.0, h_out = 0.0;
  Vec s_in, s_out;

  int M() const { return basis->M(); }
};

using GridPtr = std::shared_ptr<const ReferenceGrid>;

inline GridPtr make_grid(BasisPtr basis, double R_omega, int n_in, int n_out) {
  if (n_in < 4 || n_out < 4) throw Error(ErrorKind::ConfigError, "radial grids need at least 4 nodes");
  auto g = std::make_shared<ReferenceGrid>();
  g->basis = std::move(basis);
  g->R_omega = R_omega;
  g->n_in = n_in;
  g->n_out = n_out;
  g->h_in = 1.0 / (n_in - 0.5);
  g->h_out = (R_omega - 1.0) / (n_out - 1);
  g->s_in.resize(n_in);
  g->s_out.resize(n_out);
  for (int i = 0; i < n_in; ++i) g->s_in(i) = (i + 0.5) * g->h_in;
  g->s_in(n_in - 1) = 1.0;
  for (int i = 0; i < n_out; ++i) g->s_out(i) = 1.0 + i * g->h_out;
  g->s_out(n_out - 1) = R_omega;
  return g;
}

// Radial finite-volume cells around the nodes, per unit angle. Interior
// faces sit midway between nodes; the cells next to s = 1 reach the
// interface and the wall cell is a half cell. Nodes on s = 1 own no cell.
struct RadialCells {
  Vec lo_in, hi_in, vol_in;     // n_in entries
  Vec lo_out, hi_out, vol_out;  // n_out entries
};

inline RadialCells radial_cells(const ReferenceGrid& g) {
  RadialCells c;
  const int ni = g.n_in, no = g.n_out;
  c.lo_in = c.hi_in = c.vol_in = Vec::Zero(ni);
  for (int i = 0; i < ni - 1; ++i) {
    c.lo_in(i) = i * g.h_in;
    c.hi_in(i) = i == ni - 2 ? 1.0 : (i + 1) * g.h_in;
  }
  c.lo_in(ni - 1) = c.hi_in(ni - 1) = 1.0;
  c.lo_out = c.hi_out = c.vol_out = Vec::Zero(no);
  c.lo_out(0) = c.hi_out(0) = 1.0;
  for (int i = 1; i < no; ++i) {
    c.lo_out(i) = i == 1 ? 1.0 : 1.0 + (i - 0.5) * g.h_out;
    c.hi_out(i) = i == no - 1 ? g.R_omega : 1.0 + (i + 0.5) * g.h_out;
  }
  c.vol_in = 0.5 * (c.hi_in.array().square() - c.lo_in.array().square()).matrix();
  c.vol_out = 0.5 * (c.hi_out.array().square() - c.lo_out.array().square()).matrix();
  return c;
}

// Grid whose rings are the interior faces: inner s = i h (i = 1..n_in-2),
// outer s = 1 + (i + 1/2) h (i = 1..n_out-2). Ring i of the inner face grid
// lies between nodes i and i+1, likewise ring i of the outer one between
// nodes i+1 and i+2.
inline GridPtr face_grid(const ReferenceGrid& g) {
  auto f = std::make_shared<ReferenceGrid>(g);
  f->n_in = g.n_in - 2;
  f->n_out = g.n_out - 2;
  f->s_in.resize(f->n_in);
  f->s_out.resize(f->n_out);
  for (int i = 0; i < f->n_in; ++i) f->s_in(i) = (i + 1) * g.h_in;
  for (int i = 0; i < f->n_out; ++i) f->s_out(i) = 1.0 + (i + 1.5) * g.h_out;
  return f;
}

// Interface data at one angle: f and its theta derivatives, plus the map's
// time derivative f_t.
struct GraphSample {
  double f = 0.0, f1 = 0.0, f2 = 0.0, ft = 0.0;
};

inline GraphSample sample_graph(const Vec& coeffs, double theta, const Vec* ft_coeffs = nullptr) {
  GraphSample g;
  auto add = [&](int m, double c, double& v, double& v1, double& v2) {
    if (m == 0) {
      v += c / std::sqrt(2.0 * kPi);
      return;
    }
    const int k = (m + 1) / 2;
    const double cs = std::cos(k * theta) / std::sqrt(kPi), sn = std::sin(k * theta) / std::sqrt(kPi);
    if (m % 2 == 1) {
      v += c * cs;
      v1 -= c * k * sn;
      v2 -= c * k * k * cs;
    } else {
      v += c * sn;
      v1 += c * k * cs;
      v2 -= c * k * k * sn;
    }
  };
  for (int m = 0; m < coeffs.size(); ++m) add(m, coeffs(m), g.f, g.f1, g.f2);
  if (ft_coeffs) {
    double d1 = 0.0, d2 = 0.0;
    for (int m = 0; m < ft_coeffs->size(); ++m) add(m, (*ft_coeffs)(m), g.ft, d1, d2);
  }
  return g;
}

// Cartesian second derivatives of a scalar from its polar derivatives at
// radius s and angle with cosine c, sine sn.
struct CartesianHessian {
  double xx, xy, yy;
};

inline CartesianHessian polar_to_cartesian_hessian(double s, double c, double sn, double gs, double gt,
                                                   double gss, double gst, double gtt) {
  const double s2 = s * s, cc = c * c, ss = sn * sn, cs = c * sn;
  return {cc * gss - 2.0 * cs * gst / s + ss * gtt / s2 + ss * gs / s + 2.0 * cs * gt / s2,
          cs * gss + (cc - ss) * gst / s - cs * gtt / s2 - cs * gs / s - (cc - ss) * gt / s2,
          ss * gss + 2.0 * cs * gst / s + cc * gtt / s2 + cc * gs / s - 2.0 * cs * gt / s2};
}

inline Vec2 polar_to_cartesian_gradient(double s, double c, double sn, double gs, double gt) {
  return {c * gs - sn * gt / s, sn * gs + c * gt / s};
}

// Everything the solver and diagnostics need at one reference point.
struct PointGeometry {
  double s = 0.0, theta = 0.0;
  Vec2 X = Vec2::Zero();
  Smooth chi{}, eta{};
  double rho = 1.0, psi = 1.0, rho_t = 0.0;
  Vec2 grad_rho = Vec2::Zero();
  Mat2 jac = Mat2::Identity();      // DX, jac(l, m) = dX^l / dxbar^m
  Mat2 jac_inv = Mat2::Identity();  // DX^{-1}
  double det = 1.0;
  Mat2 a = Mat2::Identity();        // DX^{-1} DX^{-T}
  Vec2 b = Vec2::Zero();            // chain-rule drift Delta Theta + DX^{-1} X_t
  Vec2 xt = Vec2::Zero();           // X_t
  Mat2 G = Mat2::Identity();        // det * a
  Vec2 div_G = Vec2::Zero();        // d_i G_ij
  Vec2 adv = Vec2::Zero();          // -DX^{-1} X_t
  Vec2 div_rho_a = Vec2::Zero();    // d_j (rho a_ij)
  // Polar form: w_t = g^{ss} w_ss + 2 g^{st} w_st + g^{tt} w_tt + B^s w_s + B^t w_t.
  double gss = 1.0, gst = 0.0, gtt = 1.0, Bs = 0.0, Bt = 0.0;
  // Contravariant polar components of DX^{-1} X_t (grid velocity in s, theta).
  double Cs = 0.0, Ct = 0.0;
};

inline PointGeometry evaluate_point(const BlendConfig& cfg, double s, double theta, const GraphSample& f,
                                    const Vec2& a, const Vec2& adot) {
  PointGeometry p;
  p.s = s;
  p.theta = theta;
  const double c = std::cos(theta), sn = std::sin(theta);
  const Vec2 er(c, sn), et(-sn, c);
  const Smooth chi = blend_chi(cfg, s), eta = blend_eta(cfg, s);
  p.chi = chi;
  p.eta = eta;

  const double R = s * (1.0 + chi.v * f.f);
  const double Rs = 1.0 + chi.v * f.f + s * chi.d1 * f.f;
  const double Rss = 2.0 * chi.d1 * f.f + s * chi.d2 * f.f;
  const double Rt = s * chi.v * f.f1;
  const double Rst = (chi.v + s * chi.d1) * f.f1;
  const double Rtt = s * chi.v * f.f2;

  p.X = eta.v * a + R * er;
  p.xt = eta.v * adot + s * chi.v * f.ft * er;
  p.rho_t = chi.v * f.ft;

  // Where the map is a rigid translation the metric is exactly flat; keep it
  // bit-exact so the identity map reproduces the flat operator.
  const bool radial_flat = (f.f == 0.0 && f.f1 == 0.0 && f.f2 == 0.0) ||
                           (chi.v == 0.0 && chi.d1 == 0.0 && chi.d2 == 0.0);
  const bool shift_flat = (a(0) == 0.0 && a(1) == 0.0) || (eta.d1 == 0.0 && eta.d2 == 0.0);
  if (radial_flat && shift_flat) {
    p.gtt = 1.0 / (s * s);
    p.Bs = 1.0 / s + er.dot(p.xt);
    p.Bt = et.dot(p.xt) / s;
    p.Cs = er.dot(p.xt);
    p.Ct = p.Bt;
    p.b = p.xt;
    p.adv = -p.xt;
    return p;
  }

  const Vec2 Xs = eta.d1 * a + Rs * er;
  const Vec2 Xt = Rt * er + R * et;
  const Vec2 Xss = eta.d2 * a + Rss * er;
  const Vec2 Xst = Rst * er + Rs * et;
  const Vec2 Xtt = (Rtt - R) * er + 2.0 * Rt * et;

  // Radial factor rho = 1 + chi f and its Cartesian derivatives.
  p.rho = 1.0 + chi.v * f.f;
  const double rs = chi.d1 * f.f, rt = chi.v * f.f1;
  p.grad_rho = polar_to_cartesian_gradient(s, c, sn, rs, rt);
  p.psi = p.rho + s * rs;

  // Polar metric form.
  const double g11 = Xs.dot(Xs), g12 = Xs.dot(Xt), g22 = Xt.dot(Xt);
  const double gdet = g11 * g22 - g12 * g12;
  p.gss = g22 / gdet;
  p.gst = -g12 / gdet;
  p.gtt = g11 / gdet;
  const Vec2 dual_s = p.gss * Xs + p.gst * Xt;
  const Vec2 dual_t = p.gst * Xs + p.gtt * Xt;
  auto contract = [&](const Vec2& dual) {
    return p.gss * Xss.dot(dual) + 2.0 * p.gst * Xst.dot(dual) + p.gtt * Xtt.dot(dual);
  };
  p.Bs = -contract(dual_s) + dual_s.dot(p.xt);
  p.Bt = -contract(dual_t) + dual_t.dot(p.xt);
  p.Cs = dual_s.dot(p.xt);
  p.Ct = dual_t.dot(p.xt);

  // Cartesian chain-rule form.
  const Vec2 Xx = c * Xs - sn / s * Xt;
  const Vec2 Xy = sn * Xs + c / s * Xt;
  p.jac.col(0) = Xx;
  p.jac.col(1) = Xy;
  // det DX = (X_s x X_theta) / s, expanded so the flat case is exact.
  p.det = (Rs * R + eta.d1 * (a(0) * Xt(1) - a(1) * Xt(0))) / s;
  const Mat2 inv = p.jac.inverse();
  p.jac_inv = inv;
  p.a = inv * inv.transpose();
  p.G = p.det * p.a;

  // Hessians of the two components of X: H[l](p, q) = d^2 X^l / dxbar^p dxbar^q.
  Mat2 H[2];
  for (int l = 0; l < 2; ++l) {
    const CartesianHessian h = polar_to_cartesian_hessian(s, c, sn, Xs(l), Xt(l), Xss(l), Xst(l), Xtt(l));
    H[l] << h.xx, h.xy, h.xy, h.yy;
  }
  Vec2 lap_theta = Vec2::Zero();
  for (int i = 0; i < 2; ++i) {
    for (int l = 0; l < 2; ++l) lap_theta(i) -= inv(i, l) * (H[l].cwiseProduct(p.a)).sum();
  }
  p.b = lap_theta + inv * p.xt;
  p.adv = -inv * p.xt;

  // d_q DX(l, m) = H[l](m, q); derivatives of det, a, G by Jacobi's formula.
  Mat2 dJ[2], da[2];
  for (int q = 0; q < 2; ++q) {
    for (int l = 0; l < 2; ++l) {
      for (int m = 0; m < 2; ++m) dJ[q](l, m) = H[l](m, q);
    }
    da[q] = -inv * dJ[q] * p.a - p.a * dJ[q].transpose() * inv.transpose();
  }
  for (int j = 0; j < 2; ++j) {
    double dg = 0.0, dra = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double ddet = p.det * (inv * dJ[i]).trace();
      dg += ddet * p.a(i, j) + p.det * da[i](i, j);
      dra += p.grad_rho(i) * p.a(i, j) + p.rho * da[i](i, j);
    }
    p.div_G(j) = dg;
    p.div_rho_a(j) = dra;
  }
  return p;
}

// Per-phase grid fields (rows = radii, columns = angles).
struct PhaseGeometry {
  Mat rho, psi, rho_t, rho_x, rho_y, det;
  Mat a11, a12, a22, b1, b2, xt1, xt2;
  Mat G11, G12, G22, divG1, divG2, adv1, adv2, dra1, dra2;
  Mat gss, gst, gtt, Bs, Bt, Cs, Ct;
  Mat X1, X2;
  Mat ji11, ji12, ji21, ji22;  // DX^{-1}

  void resize(int nr, int M) {
    for (Mat* m : {&rho, &psi, &rho_t, &rho_x, &rho_y, &det, &a11, &a12, &a22, &b1, &b2, &xt1, &xt2,
                   &G11, &G12, &G22, &divG1, &divG2, &adv1, &adv2, &dra1, &dra2, &gss, &gst, &gtt, &Bs,
                   &Bt, &Cs, &Ct, &X1, &X2, &ji11, &ji12, &ji21, &ji22})
      m->resize(nr, M);
  }
  void store(int i, int j, const PointGeometry& p) {
    rho(i, j) = p.rho;
    psi(i, j) = p.psi;
    rho_t(i, j) = p.rho_t;
    rho_x(i, j) = p.grad_rho(0);
    rho_y(i, j) = p.grad_rho(1);
    det(i, j) = p.det;
    a11(i, j) = p.a(0, 0);
    a12(i, j) = 0.5 * (p.a(0, 1) + p.a(1, 0));
    a22(i, j) = p.a(1, 1);
    b1(i, j) = p.b(0);
    b2(i, j) = p.b(1);
    xt1(i, j) = p.xt(0);
    xt2(i, j) = p.xt(1);
    G11(i, j) = p.G(0, 0);
    G12(i, j) = 0.5 * (p.G(0, 1) + p.G(1, 0));
    G22(i, j) = p.G(1, 1);
    divG1(i, j) = p.div_G(0);
    divG2(i, j) = p.div_G(1);
    adv1(i, j) = p.adv(0);
    adv2(i, j) = p.adv(1);
    dra1(i, j) = p.div_rho_a(0);
    dra2(i, j) = p.div_rho_a(1);
    gss(i, j) = p.gss;
    gst(i, j) = p.gst;
    gtt(i, j) = p.gtt;
    Bs(i, j) = p.Bs;
    Bt(i, j) = p.Bt;
    Cs(i, j) = p.Cs;
    Ct(i, j) = p.Ct;
    X1(i, j) = p.X(0);
    X2(i, j) = p.X(1);
    ji11(i, j) = p.jac_inv(0, 0);
    ji12(i, j) = p.jac_inv(0, 1);
    ji21(i, j) = p.jac_inv(1, 0);
    ji22(i, j) = p.jac_inv(1, 1);
  }
};

struct MappedGeometry {
  GridPtr grid;
  BlendConfig blend;
  Vec f_coeffs, ft_coeffs;  // interface used by the map and its time derivative
  Vec2 center = Vec2::Zero();
  Vec2 adot = Vec2::Zero();
  PhaseGeometry inner, outer;

  double band() const { return blend.d; }
  double min_det() const { return std::min(inner.det.minCoeff(), outer.det.minCoeff()); }
};

// Clearance margin required between the moved interface and the wall.
inline double clearance_margin(double R_omega) { return 0.25 * (R_omega - 1.0); }

inline MappedGeometry build_map(GridPtr grid, const RadialGraph& f, const Vec2& a, const Vec2& adot,
                                const BlendConfig& cfg, const Vec* ft_coeffs = nullptr) {
  cfg.validate();
  check_graph(f.values);
  const double reach = a.norm() + 1.0 + f.values.maxCoeff();
  if (reach >= cfg.R_omega - clearance_margin(cfg.R_omega))
    throw Error(ErrorKind::ClearanceViolation, "interface too close to the outer wall", reach);

  MappedGeometry g;
  g.grid = grid;
  g.blend = cfg;
  g.f_coeffs = f.coeffs;
  g.ft_coeffs = ft_coeffs ? *ft_coeffs : Vec::Zero(f.coeffs.size());
  g.center = a;
  g.adot = adot;

  const AngularBasis& b = *grid->basis;
  const int M = b.M();
  const Vec fv = f.values, f1 = f.d1(), f2 = f.d2();
  const Vec ftv = b.to_values(g.ft_coeffs);
  auto fill = [&](PhaseGeometry& ph, const Vec& radii) {
    ph.resize(int(radii.size()), M);
    for (int i = 0; i < radii.size(); ++i) {
      for (int j = 0; j < M; ++j) {
        const GraphSample gs{fv(j), f1(j), f2(j), ftv(j)};
        const PointGeometry p = evaluate_point(cfg, radii(i), b.theta()(j), gs, a, adot);
        if (!(p.det > 0.0)) {
          throw Error(ErrorKind::MapDegenerate,
                      "det DX <= 0 at s = " + std::to_string(radii(i)) +
                          ", theta = " + std::to_string(b.theta()(j)),
                      p.det);
        }
        ph.store(i, j, p);
      }
    }
  };
  fill(g.inner, grid->s_in);
  fill(g.outer, grid->s_out);
  return g;
}

// Closed-form coefficients of the pure map x = a + rho(xbar) xbar, in the
// variable pi = 1/rho (pi form) and directly in rho (rho form).
struct ClosedFormCoefficients {
  Mat2 a_pi = Mat2::Identity();
  Mat2 a_rho = Mat2::Identity();
  Vec2 b = Vec2::Zero();
  double pi = 1.0, lap_pi = 0.0, pi_t = 0.0;
  Vec2 grad_pi = Vec2::Zero();
};

inline ClosedFormCoefficients closed_form_coefficients(const BlendConfig& cfg, double s, double theta,
                                            const GraphSample& f, const Vec2& adot) {
  if (blend_eta(cfg, s).v != 1.0)
    throw Error(ErrorKind::OutsidePureRegion, "closed-form coefficients need eta = 1", s);
  const double c = std::cos(theta), sn = std::sin(theta);
  const Vec2 xb(s * c, s * sn);
  const Smooth chi = blend_chi(cfg, s);

  const double rho = 1.0 + chi.v * f.f;
  const double rho_t = chi.v * f.ft;
  const double rs = chi.d1 * f.f, rt = chi.v * f.f1;
  const double rss = chi.d2 * f.f, rst = chi.d1 * f.f1, rtt = chi.v * f.f2;
  const Vec2 g = polar_to_cartesian_gradient(s, c, sn, rs, rt);
  const CartesianHessian h = polar_to_cartesian_hessian(s, c, sn, rs, rt, rss, rst, rtt);
  Mat2 H;
  H << h.xx, h.xy, h.xy, h.yy;
  const double psi = rho + g.dot(xb);
  const Vec2 psi_grad = 2.0 * g + H * xb;

  ClosedFormCoefficients out;
  out.pi = 1.0 / rho;
  out.grad_pi = -g / (rho * rho * psi);
  const Vec2 p = rho * xb;  // x - a

  // pi form: a_ij = pi^2 delta_ij + pi (pi_i p_j + pi_j p_i) + p_i p_j |grad pi|^2.
  out.a_pi = out.pi * out.pi * Mat2::Identity() +
             out.pi * (out.grad_pi * p.transpose() + p * out.grad_pi.transpose()) +
             out.grad_pi.squaredNorm() * p * p.transpose();

  // rho form.
  const double r2 = rho * rho;
  out.a_rho = Mat2::Identity() / r2 - (g * xb.transpose() + xb * g.transpose()) / (r2 * psi) +
              g.squaredNorm() * xb * xb.transpose() / (r2 * psi * psi);
  for (Mat2* m : {&out.a_pi, &out.a_rho}) (*m)(0, 1) = (*m)(1, 0) = 0.5 * ((*m)(0, 1) + (*m)(1, 0));

  // Delta pi from the closed form in xbar (see F_i = pi_i as a function of xbar).
  Mat2 dF;  // dF(i, k) = d_k F_i
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) {
      dF(i, k) = -H(i, k) / (r2 * psi) + g(i) * (2.0 * g(k) * psi + rho * psi_grad(k)) / (r2 * rho * psi * psi);
    }
  }
  out.lap_pi = dF.trace() / rho + rho * out.grad_pi.dot(dF * xb);
  out.pi_t = (-rho * rho_t + g.dot(adot)) / (r2 * psi);
  out.b = 2.0 * out.grad_pi + (out.lap_pi - out.pi_t) * p + out.pi * adot;
  return out;
}

// r^2 / |g|: converts the reference jump [w_s] into the physical flux jump.
inline Vec jump_factor(const RadialGraph& f) {
  check_graph(f.values);
  const Vec r = f.values.array() + 1.0;
  const Vec dr = f.d1();
  return (r.array().square() / (r.array().square() + dr.array().square()).sqrt()).matrix();
}

}  // namespace stefan
