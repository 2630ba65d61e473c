#pragma once

// Scalar functionals and monitored identities: mass in both bookkeepings,
// the physical energy law, the auxiliary energy/dissipation with blended
// derivatives, the base energy identity, the Poincare ratio, zeta and decay
// fits.
//
// Quantities that need time derivatives are evaluated on a window of
// consecutive levels (prev, cur, next) with central differences; at the ends
// of a series the difference is one-sided and second derivatives are zero.

#include <limits>
#include <string>
#include <vector>

#include "stefan/evolution.hpp"

namespace stefan {

// ---------------------------------------------------------------------------
// Reference-domain calculus

// Integral over the reference disk with Lebesgue measure dxbar.
inline double reference_integral(const ReferenceGrid& g, const Mat& inner, const Mat& outer) {
  return reference_quadrature(g).integrate(inner, outer, g.basis->weight());
}

struct PhasePair {
  Mat in, out;
};

// Fourth-order radial derivative for the diagnostics. The energy needs up to four
// nested derivatives, and second-order one-sided rows at a phase boundary lose
// one order per level. Central rows reflect through the origin on the inner phase.
inline Mat radial_derivative4(const AngularBasis& b, const Mat& W, double h, bool inner) {
  const int n = int(W.rows());
  if (n < 6) throw Error(ErrorKind::ConfigError, "radial grid too coarse for diagnostics");
  Mat out(n, W.cols());
  auto row = [&](int i) -> Eigen::RowVectorXd {
    if (i < 0) return half_turn(W.row(-i - 1));
    return W.row(i);
  };
  const int lo = inner ? 0 : 2;
  for (int i = lo; i < n - 2; ++i)
    out.row(i) = (-row(i + 2) + 8.0 * row(i + 1) - 8.0 * row(i - 1) + row(i - 2)) / (12.0 * h);
  auto fwd0 = [&](int i, double sg) {
    return Eigen::RowVectorXd(sg * (-25.0 * W.row(i) + 48.0 * W.row(i + int(sg)) - 36.0 * W.row(i + 2 * int(sg)) +
                                    16.0 * W.row(i + 3 * int(sg)) - 3.0 * W.row(i + 4 * int(sg))) /
                              (12.0 * h));
  };
  auto fwd1 = [&](int i, double sg) {
    return Eigen::RowVectorXd(sg * (-3.0 * W.row(i - int(sg)) - 10.0 * W.row(i) + 18.0 * W.row(i + int(sg)) -
                                    6.0 * W.row(i + 2 * int(sg)) + W.row(i + 3 * int(sg))) /
                              (12.0 * h));
  };
  out.row(n - 1) = fwd0(n - 1, -1.0);
  out.row(n - 2) = fwd1(n - 2, -1.0);
  if (!inner) {
    out.row(0) = fwd0(0, 1.0);
    out.row(1) = fwd1(1, 1.0);
  }
  (void)b;
  return out;
}

// Reference Cartesian gradient (d/dxbar, d/dybar) of a field on one phase.
inline void reference_gradient(const ReferenceGrid& g, const Mat& W, bool inner, Mat& dx, Mat& dy) {
  const Vec& s = inner ? g.s_in : g.s_out;
  struct {
    Mat ws, wt;
  } d{radial_derivative4(*g.basis, W, inner ? g.h_in : g.h_out, inner), W * g.basis->grid_d1().transpose()};
  dx.resize(W.rows(), W.cols());
  dy.resize(W.rows(), W.cols());
  for (int j = 0; j < W.cols(); ++j) {
    const double th = g.basis->theta()(j), c = std::cos(th), sn = std::sin(th);
    for (int i = 0; i < W.rows(); ++i) {
      const Vec2 gr = polar_to_cartesian_gradient(s(i), c, sn, d.ws(i, j), d.wt(i, j));
      dx(i, j) = gr(0);
      dy(i, j) = gr(1);
    }
  }
}

// Cutoff mu for the blended derivative D^i = mu d_i + (1 - mu) d_{xi^i}:
// 1 for s <= 0.3 and s >= R - d, 0 on [1 - 2d, 1 + 2d], quintic ramps between.
struct BlendedDerivative {
  PhasePair mu;     // cutoff on the grid
  PhasePair mu_s;   // radial derivative; nu(mu)_i = xi^i mu_s
  double d = 0.0;

  static double profile(double s, double R, double d, double* ds = nullptr) {
    const double a0 = 0.3, a1 = 1.0 - 2.0 * d, b0 = 1.0 + 2.0 * d, b1 = R - d;
    double v = 0.0, dv = 0.0;
    if (s <= a0 || s >= b1) {
      v = 1.0;
    } else if (s < a1) {
      const Smooth q = smoothstep5((s - a0) / (a1 - a0));
      v = 1.0 - q.v;
      dv = -q.d1 / (a1 - a0);
    } else if (s > b0) {
      const Smooth q = smoothstep5((s - b0) / (b1 - b0));
      v = q.v;
      dv = q.d1 / (b1 - b0);
    }
    if (ds) *ds = dv;
    return v;
  }
};

inline BlendedDerivative make_blended_derivative(const ReferenceGrid& g, double d) {
  if (!(d > 0.0) || !(1.0 + 2.0 * d < g.R_omega - d) || !(0.3 < 1.0 - 2.0 * d))
    throw Error(ErrorKind::ConfigError, "blend band does not fit the domain");
  BlendedDerivative bd;
  bd.d = d;
  auto fill = [&](const Vec& s, Mat& mu, Mat& mus) {
    mu.resize(s.size(), g.M());
    mus.resize(s.size(), g.M());
    for (int i = 0; i < s.size(); ++i) {
      double ds = 0.0;
      const double v = BlendedDerivative::profile(s(i), g.R_omega, d, &ds);
      mu.row(i).setConstant(v);
      mus.row(i).setConstant(ds);
    }
  };
  fill(g.s_in, bd.mu.in, bd.mu_s.in);
  fill(g.s_out, bd.mu.out, bd.mu_s.out);
  return bd;
}

// D^i W for i = 0 (x) or 1 (y), on both phases.
inline PhasePair blended_derivative(const ReferenceGrid& g, const BlendedDerivative& bd, const PhasePair& W,
                                    int i) {
  PhasePair out;
  for (int pass = 0; pass < 2; ++pass) {
    const bool inner = pass == 0;
    const Mat& w = inner ? W.in : W.out;
    const Mat& mu = inner ? bd.mu.in : bd.mu.out;
    const Vec& s = inner ? g.s_in : g.s_out;
    Mat dx, dy;
    reference_gradient(g, w, inner, dx, dy);
    Mat& o = inner ? out.in : out.out;
    o.resize(w.rows(), w.cols());
    for (int j = 0; j < w.cols(); ++j) {
      const double th = g.basis->theta()(j);
      const Vec2 et(-std::sin(th), std::cos(th));
      for (int r = 0; r < w.rows(); ++r) {
        const Vec2 gr(dx(r, j), dy(r, j));
        const double full = gr(i), tangential = et(i) * et.dot(gr);
        o(r, j) = mu(r, j) * full + (1.0 - mu(r, j)) * tangential;
      }
    }
    (void)s;
  }
  return out;
}

// Tangential derivative d_{xi^i} of a function on the unit circle.
inline Vec tangential_derivative(const AngularBasis& b, const Vec& chi, int i) {
  const Vec dchi = b.grid_d1() * chi;
  Vec out(chi.size());
  for (int j = 0; j < chi.size(); ++j) {
    const double th = b.theta()(j);
    out(j) = (i == 0 ? -std::sin(th) : std::cos(th)) * dchi(j);
  }
  return out;
}

// Z and Z_2 forms of a grid function using all M Fourier modes.
inline double z_form_full(const AngularBasis& b, const Vec& h) {
  const Vec c = b.full_anal() * h;
  double z = 0.0;
  for (int m = 0; m < c.size(); ++m) {
    const double k = b.wavenumber(m);
    z += (k * k - 1.0) * c(m) * c(m);
  }
  return z;
}
inline double z2_form_full(const AngularBasis& b, const Vec& h) {
  const Vec c = b.full_anal() * h;
  double z = 0.0;
  for (int m = 0; m < c.size(); ++m) {
    const double k = b.wavenumber(m);
    z += k * k * (k * k - 1.0) * c(m) * c(m);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Levels and time derivatives

struct LevelWindow {
  const SimState* prev = nullptr;
  const SimState* cur = nullptr;
  const SimState* next = nullptr;

  double span() const {
    const double t0 = prev ? prev->t : cur->t, t1 = next ? next->t : cur->t;
    return t1 - t0;
  }
  bool has_derivative() const { return (prev || next) && span() > 0.0; }
  bool has_second() const { return prev && next; }
};

inline PhasePair temperature(const SimState& s) { return {s.w.inner, s.w.outer}; }

inline PhasePair time_derivative(const LevelWindow& lw) {
  const ReferenceGrid& g = *lw.cur->grid;
  if (!lw.has_derivative()) return {Mat::Zero(g.n_in, g.M()), Mat::Zero(g.n_out, g.M())};
  const SimState& a = lw.prev ? *lw.prev : *lw.cur;
  const SimState& b = lw.next ? *lw.next : *lw.cur;
  const double h = lw.span();
  return {(b.w.inner - a.w.inner) / h, (b.w.outer - a.w.outer) / h};
}

inline PhasePair second_time_derivative(const LevelWindow& lw) {
  const ReferenceGrid& g = *lw.cur->grid;
  if (!lw.has_second()) return {Mat::Zero(g.n_in, g.M()), Mat::Zero(g.n_out, g.M())};
  const double h = 0.5 * lw.span();
  return {(lw.next->w.inner - 2.0 * lw.cur->w.inner + lw.prev->w.inner) / (h * h),
          (lw.next->w.outer - 2.0 * lw.cur->w.outer + lw.prev->w.outer) / (h * h)};
}

inline Vec interface_time_derivative(const LevelWindow& lw) {
  if (!lw.has_derivative()) return Vec::Zero(lw.cur->f.values.size());
  const SimState& a = lw.prev ? *lw.prev : *lw.cur;
  const SimState& b = lw.next ? *lw.next : *lw.cur;
  return (b.f.values - a.f.values) / lw.span();
}

inline Vec interface_second_derivative(const LevelWindow& lw) {
  if (!lw.has_second()) return Vec::Zero(lw.cur->f.values.size());
  const double h = 0.5 * lw.span();
  return (lw.next->f.values - 2.0 * lw.cur->f.values + lw.prev->f.values) / (h * h);
}

// ---------------------------------------------------------------------------
// Mass

// M(v, Gamma) = int_Omega v + int r^n / n, with v = w + (n - 1). The
// constant part uses the exact area of Omega.
inline double mass_physical(const SimState& st, const MappedGeometry& geom) {
  const double area = kPi * st.grid->R_omega * st.grid->R_omega;
  return mapped_integral(geom, st.w.inner, st.w.outer) + (kDim - 1) * area + interface_geometry(st.f).inner_volume;
}

// Mass of the steady unit circle in the same domain.
inline double mass_steady(double R_omega) { return (kDim - 1) * kPi * R_omega * R_omega + kPi; }

// Fixed-domain bookkeeping of the same law:
//   int rho w + int_S f = - int_S f^2 / 2 + int w (rho - det DX),
// returned as left minus right. It equals M - M(steady).
inline double mass_fixed_residual(const SimState& st, const MappedGeometry& geom) {
  const ReferenceGrid& g = *st.grid;
  const AngularBasis& b = *g.basis;
  const double left = reference_integral(g, geom.inner.rho.cwiseProduct(st.w.inner),
                                         geom.outer.rho.cwiseProduct(st.w.outer)) +
                      b.integrate(st.f.values);
  const double correction =
      reference_integral(g, st.w.inner.cwiseProduct(geom.inner.rho - geom.inner.det),
                         st.w.outer.cwiseProduct(geom.outer.rho - geom.outer.det));
  const double right = -0.5 * b.integrate(st.f.values.cwiseAbs2()) + correction;
  return left - right;
}

// ---------------------------------------------------------------------------
// Physical energy law: d/dt [1/2 int v^2 + |Gamma|] + int |grad v|^2 = 0.

inline double energy_physical(const SimState& st, const MappedGeometry& geom) {
  const double area = kPi * st.grid->R_omega * st.grid->R_omega;
  const double w2 = mapped_integral(geom, st.w.inner.cwiseAbs2(), st.w.outer.cwiseAbs2());
  const double w1 = mapped_integral(geom, st.w.inner, st.w.outer);
  const InterfaceGeometry ig = interface_geometry(st.f);
  const double length = st.grid->basis->integrate(ig.area_element);
  return 0.5 * w2 + (kDim - 1) * w1 + 0.5 * (kDim - 1) * (kDim - 1) * area + length;
}

inline double dissipation_physical(const SimState& st, const MappedGeometry& geom) {
  const PhaseGradient gi = physical_gradient(geom, st.w.inner, true);
  const PhaseGradient go = physical_gradient(geom, st.w.outer, false);
  return mapped_integral(geom, gi.ux.cwiseAbs2() + gi.uy.cwiseAbs2(), go.ux.cwiseAbs2() + go.uy.cwiseAbs2());
}

// Central difference of the energy plus the dissipation at the middle level.
inline double dissipation_law_residual(const LevelWindow& lw) {
  if (!lw.has_derivative()) return 0.0;
  const SimState& a = lw.prev ? *lw.prev : *lw.cur;
  const SimState& b = lw.next ? *lw.next : *lw.cur;
  const double dE = (energy_physical(b, b.geometry()) - energy_physical(a, a.geometry())) / lw.span();
  return dE + dissipation_physical(*lw.cur, lw.cur->geometry());
}

// ---------------------------------------------------------------------------
// Auxiliary energy and dissipation

struct EnergyComponent {
  std::string label;  // derivative index, e.g. "x", "xy", "t"
  int m = 0, s = 0;   // spatial and time orders
  double E = 0.0, D = 0.0;
};

struct EnergyResult {
  double E_total = 0.0, D_total = 0.0;
  std::vector<EnergyComponent> components;
};

namespace detail {

// int rho grad U^T a grad U over the reference domain.
inline double weighted_dirichlet(const ReferenceGrid& g, const MappedGeometry& geom, const PhasePair& U) {
  double total = 0.0;
  PhasePair parts;
  for (int pass = 0; pass < 2; ++pass) {
    const bool inner = pass == 0;
    const PhaseGeometry& ph = inner ? geom.inner : geom.outer;
    Mat dx, dy;
    reference_gradient(g, inner ? U.in : U.out, inner, dx, dy);
    Mat q = ph.rho.array() * (ph.a11.array() * dx.array().square() + 2.0 * ph.a12.array() * dx.array() * dy.array() +
                              ph.a22.array() * dy.array().square());
    (inner ? parts.in : parts.out) = q;
  }
  total = reference_integral(g, parts.in, parts.out);
  return total;
}

inline double weighted_square(const ReferenceGrid& g, const MappedGeometry& geom, const PhasePair& U) {
  return reference_integral(g, geom.inner.rho.cwiseProduct(U.in.cwiseAbs2()),
                            geom.outer.rho.cwiseProduct(U.out.cwiseAbs2()));
}

inline PhasePair cartesian_component(const ReferenceGrid& g, const PhasePair& U, int i) {
  PhasePair out;
  Mat dx, dy;
  reference_gradient(g, U.in, true, dx, dy);
  out.in = i == 0 ? dx : dy;
  reference_gradient(g, U.out, false, dx, dy);
  out.out = i == 0 ? dx : dy;
  return out;
}

inline double component_energy(const ReferenceGrid& g, const MappedGeometry& geom, const BlendedDerivative& bd,
                               double gamma, const PhasePair& U, const Vec& chi) {
  const AngularBasis& b = *g.basis;
  double du2 = 0.0;
  for (int i = 0; i < 2; ++i) du2 += weighted_square(g, geom, blended_derivative(g, bd, U, i));
  return 0.5 * gamma * weighted_square(g, geom, U) + 0.5 * du2 + weighted_dirichlet(g, geom, U) +
         0.5 * gamma * z_form_full(b, chi) + 0.5 * z2_form_full(b, chi);
}

inline double component_dissipation(const ReferenceGrid& g, const MappedGeometry& geom,
                                    const BlendedDerivative& bd, double gamma, const PhasePair& U,
                                    const PhasePair& Ut, const Vec& chi_t) {
  const AngularBasis& b = *g.basis;
  // sum_k int rho (D_k grad U)^T a (D_k grad U)
  const PhasePair Ux = cartesian_component(g, U, 0), Uy = cartesian_component(g, U, 1);
  double hess = 0.0;
  for (int k = 0; k < 2; ++k) {
    const PhasePair px = blended_derivative(g, bd, Ux, k), py = blended_derivative(g, bd, Uy, k);
    auto quad = [](const PhaseGeometry& ph, const Mat& x, const Mat& y) {
      return Mat(ph.rho.array() * (ph.a11.array() * x.array().square() + 2.0 * ph.a12.array() * x.array() * y.array() +
                                   ph.a22.array() * y.array().square()));
    };
    hess += reference_integral(g, quad(geom.inner, px.in, py.in), quad(geom.outer, px.out, py.out));
  }
  return gamma * weighted_dirichlet(g, geom, U) + weighted_square(g, geom, Ut) + hess + z_form_full(b, chi_t);
}

}  // namespace detail

// E and D summed over derivative indices with |m| + 2 s <= 2 order.
inline EnergyResult energy_functionals(const LevelWindow& lw, const BlendedDerivative& bd, double gamma = 4.0,
                                       int order = 1) {
  if (order != 0 && order != 1) throw Error(ErrorKind::ConfigError, "energy order must be 0 or 1");
  const SimState& st = *lw.cur;
  const ReferenceGrid& g = *st.grid;
  const AngularBasis& b = *g.basis;
  const MappedGeometry geom = st.geometry();

  const PhasePair w = temperature(st), wt = time_derivative(lw);
  const Vec f = st.f.values, ft = interface_time_derivative(lw);

  EnergyResult out;
  auto add = [&](std::string label, int m, int s, const PhasePair& U, const PhasePair& Ut, const Vec& chi,
                 const Vec& chi_t) {
    EnergyComponent c{std::move(label), m, s, 0.0, 0.0};
    c.E = detail::component_energy(g, geom, bd, gamma, U, chi);
    c.D = detail::component_dissipation(g, geom, bd, gamma, U, Ut, chi_t);
    out.E_total += c.E;
    out.D_total += c.D;
    out.components.push_back(std::move(c));
  };

  add("0", 0, 0, w, wt, f, ft);
  if (order == 1) {
    const char* names[2] = {"x", "y"};
    PhasePair Dw[2], Dwt[2];
    Vec Df[2], Dft[2];
    for (int i = 0; i < 2; ++i) {
      Dw[i] = blended_derivative(g, bd, w, i);
      Dwt[i] = blended_derivative(g, bd, wt, i);
      Df[i] = tangential_derivative(b, f, i);
      Dft[i] = tangential_derivative(b, ft, i);
      add(names[i], 1, 0, Dw[i], Dwt[i], Df[i], Dft[i]);
    }
    for (int i = 0; i < 2; ++i) {
      for (int j = i; j < 2; ++j) {
        add(std::string(names[i]) + names[j], 2, 0, blended_derivative(g, bd, Dw[j], i),
            blended_derivative(g, bd, Dwt[j], i), tangential_derivative(b, Df[j], i),
            tangential_derivative(b, Dft[j], i));
      }
    }
    add("t", 0, 1, wt, second_time_derivative(lw), ft, interface_second_derivative(lw));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Base energy identity
//   d/dt [1/2 int rho U^2 + 1/2 Z(f)] + int rho grad U^T A grad U - int P - int_S Q = 0,
//   P = 1/2 rho_t U^2 - (rho a_ij)_j U_i U + rho b_i U_i U,
//   Q = -f_t N(f) - (|g|/r)(adot . n) U.
// The wall term int U U_n vanishes by the Neumann condition.

struct EnergyIdentityTerms {
  double energy = 0.0;     // 1/2 int rho U^2 + 1/2 Z(f)
  double dirichlet = 0.0;  // int rho grad U^T A grad U
  double P = 0.0;
  double Q = 0.0;
  double Q_center = 0.0;   // the adot part of Q
};

inline EnergyIdentityTerms energy_identity_terms(const SimState& st, const Vec& ft, const Vec2& adot) {
  const ReferenceGrid& g = *st.grid;
  const AngularBasis& b = *g.basis;
  const MappedGeometry geom = st.geometry();
  const PhasePair U = temperature(st);
  EnergyIdentityTerms t;
  t.energy = 0.5 * detail::weighted_square(g, geom, U) + 0.5 * z_form_full(b, st.f.values);
  t.dirichlet = detail::weighted_dirichlet(g, geom, U);
  PhasePair p;
  for (int pass = 0; pass < 2; ++pass) {
    const bool inner = pass == 0;
    const PhaseGeometry& ph = inner ? geom.inner : geom.outer;
    const Mat& w = inner ? U.in : U.out;
    Mat dx, dy;
    reference_gradient(g, w, inner, dx, dy);
    Mat val = 0.5 * ph.rho_t.array() * w.array().square() -
              (ph.dra1.array() * dx.array() + ph.dra2.array() * dy.array()) * w.array() +
              ph.rho.array() * (ph.b1.array() * dx.array() + ph.b2.array() * dy.array()) * w.array();
    (inner ? p.in : p.out) = val;
  }
  t.P = reference_integral(g, p.in, p.out);
  const InterfaceGeometry ig = interface_geometry(st.f);
  const Vec Us = U.out.row(0).transpose();
  const Vec center = ig.metric.cwiseQuotient(ig.r).cwiseProduct(ig.normal * adot).cwiseProduct(Us);
  t.Q_center = -b.integrate(center);
  t.Q = -b.integrate(ft.cwiseProduct(ig.curvature_remainder)) + t.Q_center;
  return t;
}

inline double energy_identity_residual(const LevelWindow& lw, bool include_center = true) {
  if (!lw.has_derivative()) return 0.0;
  const SimState& a = lw.prev ? *lw.prev : *lw.cur;
  const SimState& b = lw.next ? *lw.next : *lw.cur;
  const Vec ft = interface_time_derivative(lw);
  const Vec2 adot = include_center ? lw.cur->center.adot : Vec2::Zero();
  const EnergyIdentityTerms mid = energy_identity_terms(*lw.cur, ft, adot);
  const double Ea = a.step_index == lw.cur->step_index ? mid.energy
                                                       : energy_identity_terms(a, ft, adot).energy;
  const double Eb = b.step_index == lw.cur->step_index ? mid.energy
                                                       : energy_identity_terms(b, ft, adot).energy;
  return (Eb - Ea) / lw.span() + mid.dirichlet - mid.P - mid.Q;
}

// ---------------------------------------------------------------------------
// Poincare ratio, zeta, fits

// (||f||_{L2} + ||w||_{L2}) / ||grad w||_{L2}; infinity when the gradient vanishes.
inline double poincare_ratio(const SimState& st, const MappedGeometry& geom) {
  const double grad = std::sqrt(dissipation_physical(st, geom));
  const double fn = std::sqrt(st.grid->basis->integrate(st.f.values.cwiseAbs2()));
  const double wn = std::sqrt(mapped_integral(geom, st.w.inner.cwiseAbs2(), st.w.outer.cwiseAbs2()));
  if (!(grad > 0.0)) return std::numeric_limits<double>::infinity();
  return (fn + wn) / grad;
}

// zeta_R = 1/|Omega| - (n - 1)/(|S_R| R^2), n = 2.
inline double zeta(double R, double R_omega) {
  if (!(R > 0.0) || !(R < R_omega)) throw Error(ErrorKind::ConfigError, "zeta needs 0 < R < R_Omega");
  return 1.0 / (kPi * R_omega * R_omega) - 1.0 / (2.0 * kPi * R * R * R);
}

struct DecayFit {
  double rate = 0.0;        // alpha in q ~ A exp(-alpha t)
  double amplitude = 0.0;   // A
  double residual = 0.0;    // rms of the log fit
  int samples = 0;
};

// Least-squares fit of log q against t for t in [t0, t1].
inline DecayFit decay_fit(const std::vector<double>& t, const std::vector<double>& q, double t0, double t1) {
  std::vector<double> ts, ls;
  for (size_t i = 0; i < t.size() && i < q.size(); ++i) {
    if (t[i] < t0 || t[i] > t1) continue;
    if (!(q[i] > 0.0)) throw Error(ErrorKind::FitDegenerate, "non-positive value in the fit window", q[i]);
    ts.push_back(t[i]);
    ls.push_back(std::log(q[i]));
  }
  const int n = int(ts.size());
  if (n < 10) throw Error(ErrorKind::FitDegenerate, "fewer than 10 samples in the fit window", n);
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (int i = 0; i < n; ++i) {
    st += ts[i];
    sl += ls[i];
    stt += ts[i] * ts[i];
    stl += ts[i] * ls[i];
  }
  const double den = n * stt - st * st;
  if (!(den > 0.0)) throw Error(ErrorKind::FitDegenerate, "fit window has no time spread");
  const double slope = (n * stl - st * sl) / den, icpt = (sl - slope * st) / n;
  DecayFit fit;
  fit.rate = -slope;
  fit.amplitude = std::exp(icpt);
  fit.samples = n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) ss += std::pow(ls[i] - (icpt + slope * ts[i]), 2);
  fit.residual = std::sqrt(ss / n);
  return fit;
}

// Amplitude of the degree-k harmonic of f (physical amplitude, not coefficient).
inline double harmonic_amplitude(const RadialGraph& f, int k) {
  if (k == 0) return std::abs(f.coeffs(0)) / std::sqrt(2.0 * kPi);
  return std::hypot(f.coeffs(2 * k - 1), f.coeffs(2 * k)) / std::sqrt(kPi);
}

// ---------------------------------------------------------------------------
// Records

struct DiagnosticsRecord {
  double t = 0.0;
  long step = 0;
  double mass_physical = 0.0;
  double mass_fixed_residual = 0.0;
  double energy_physical = 0.0;
  double dissipation_physical = 0.0;
  double dissipation_law_residual = 0.0;
  double energy_identity_residual = 0.0;
  double E_total = 0.0;
  double D_total = 0.0;
  double Z_f = 0.0;
  double f_max = 0.0;  // max |f|
  double poincare_ratio = 0.0;
  double positivity_margin = 0.0;  // E_total / (||w||^2 + ||f||^2)
  std::vector<double> harmonic_amplitudes;
  Vec2 center = Vec2::Zero();
  double adot_norm = 0.0;
  double adot_gap = 0.0;  // |adot - adot_formula|
  double orth_defect = 0.0;
  int gmres_iterations = 0;
};

struct DiagnosticsOptions {
  double gamma = 4.0;
  int order = 1;
  int k_report = 4;
  double blend_d = 0.0;  // 0: the map's plateau half-width
  bool energy = true;    // false: skip E_total, D_total and the positivity margin (left NaN)
};

inline DiagnosticsRecord diagnose(const LevelWindow& lw, const DiagnosticsOptions& opt) {
  const SimState& st = *lw.cur;
  const MappedGeometry geom = st.geometry();
  DiagnosticsRecord r;
  r.t = st.t;
  r.step = st.step_index;
  r.mass_physical = mass_physical(st, geom);
  r.mass_fixed_residual = mass_fixed_residual(st, geom);
  r.energy_physical = energy_physical(st, geom);
  r.dissipation_physical = dissipation_physical(st, geom);
  r.dissipation_law_residual = dissipation_law_residual(lw);
  r.energy_identity_residual = energy_identity_residual(lw);
  r.Z_f = z_form_full(*st.grid->basis, st.f.values);
  r.f_max = st.f.max_abs();
  r.poincare_ratio = poincare_ratio(st, geom);
  r.E_total = r.D_total = r.positivity_margin = std::numeric_limits<double>::quiet_NaN();
  if (opt.energy) {
    const BlendedDerivative bd =
        make_blended_derivative(*st.grid, opt.blend_d > 0.0 ? opt.blend_d : st.blend.d);
    const EnergyResult en = energy_functionals(lw, bd, opt.gamma, opt.order);
    r.E_total = en.E_total;
    r.D_total = en.D_total;
    const double norm2 = st.grid->basis->integrate(st.f.values.cwiseAbs2()) +
                         mapped_integral(geom, st.w.inner.cwiseAbs2(), st.w.outer.cwiseAbs2());
    r.positivity_margin = norm2 > 0.0 ? en.E_total / norm2 : 0.0;
  }
  for (int k = 0; k <= std::min(opt.k_report, st.grid->basis->K()); ++k)
    r.harmonic_amplitudes.push_back(harmonic_amplitude(st.f, k));
  r.center = st.center.a;
  r.adot_norm = st.center.adot.norm();
  r.adot_gap = st.step_index > 0 ? (st.center.adot - st.info.adot_formula).norm() : 0.0;
  r.orth_defect = Vec2(st.f.coeffs(1), st.f.coeffs(2)).norm();
  r.gmres_iterations = st.info.gmres_iterations;
  return r;
}

}  // namespace stefan
