#pragma once

// Coupled interface/heat time stepping.
//
// Unknowns per step: the temperature W on interior reference nodes, the new
// interface coefficients F and the center velocity Adot. They are advanced
// jointly by BDF2 (backward Euler on the first step):
//   heat:       c0 W - dt L W = rhs_W, W = G(F) on s = 1,
//   interface:  c0 F - dt P_K V(J(W), Adot) = rhs_F,
//   constraint: P_1 V = 0, which keeps int f s_i = 0.
// The map and the Dirichlet data are linearised about the extrapolated
// interface f* = 2 f^n - f^{n-1}, so each step is one linear solve (GMRES with
// the flat problem, solved mode by mode, as preconditioner).

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/LU>

#include "stefan/heat_solver.hpp"
#include "stefan/sphere_geometry.hpp"

namespace stefan {

// ---------------------------------------------------------------------------
// Interface velocity

// Stefan law for the radial graph, V_n = [u_n] with the normal pointing out
// of the inner phase: f_t = (|g|^2/r^3) J - (|g|/r) adot.n, J = w_s^+ - w_s^-.
inline Vec stefan_velocity(const AngularBasis& b, const Vec& jump, const InterfaceGeometry& ig, const Vec2& adot) {
  const Vec q = ig.metric.cwiseQuotient(ig.r);
  const Vec adn = ig.normal * adot;
  const Vec ft = q.cwiseProduct(q).cwiseQuotient(ig.r).cwiseProduct(jump) - q.cwiseProduct(adn);
  return b.truncate(ft);
}

// Velocity law with elliptic regularisation:
//   (r/|g|) f_t - eps Lap_g f_t / |g| = (|g|/r^2) J - adot.n,
// Lap_g h = (1/|g|) d/dtheta (h_theta / |g|). Solved by dense collocation for
// eps > 0; eps = 0 is the pointwise law above.
class VelocityOperator {
 public:
  VelocityOperator(BasisPtr basis, InterfaceGeometry ig, double eps)
      : basis_(std::move(basis)), ig_(std::move(ig)), eps_(eps) {
    if (eps < 0.0) throw Error(ErrorKind::ConfigError, "eps must be non-negative");
    q_ = ig_.metric.cwiseQuotient(ig_.r);
    if (eps_ > 0.0) {
      const Mat& D1 = basis_->grid_d1();
      const Vec inv_g = ig_.metric.cwiseInverse();
      const Mat lap = inv_g.asDiagonal() * D1 * inv_g.asDiagonal() * D1;
      Mat A = -eps_ * (inv_g.asDiagonal() * lap);
      A.diagonal() += ig_.r.cwiseQuotient(ig_.metric);
      lu_.compute(A);
      const double rc = lu_.rcond();
      if (!(rc > 1e-14)) throw Error(ErrorKind::SingularRegularization, "regularisation matrix is singular", rc);
    }
  }

  double eps() const { return eps_; }
  const InterfaceGeometry& geometry() const { return ig_; }

  // Velocity coefficients (degree K) for jump values and center velocity.
  Vec coeffs(const Vec& jump, const Vec2& adot) const { return basis_->to_coeffs(values(jump, adot)); }

  // Untruncated collocation velocity.
  Vec values(const Vec& jump, const Vec2& adot) const {
    const Vec adn = ig_.normal * adot;
    if (eps_ == 0.0) return q_.cwiseProduct(q_).cwiseQuotient(ig_.r).cwiseProduct(jump) - q_.cwiseProduct(adn);
    const Vec rhs = q_.cwiseQuotient(ig_.r).cwiseProduct(jump) - adn;
    return lu_.solve(rhs);
  }

 private:
  BasisPtr basis_;
  InterfaceGeometry ig_;
  double eps_;
  Vec q_;
  Eigen::PartialPivLU<Mat> lu_;
};

inline Vec regularized_velocity(const BasisPtr& b, const Vec& jump, const InterfaceGeometry& ig, const Vec2& adot,
                                double eps) {
  if (eps == 0.0) return stefan_velocity(*b, jump, ig, adot);
  return b->to_values(VelocityOperator(b, ig, eps).coeffs(jump, adot));
}

// ---------------------------------------------------------------------------
// Center velocity

struct ModulationResult {
  Vec2 adot = Vec2::Zero();          // constraint route: P_1 f_t = 0
  Vec2 adot_formula = Vec2::Zero();  // integral formula route (diagnostic)
  double condition = 1.0;            // of the 2x2 constraint matrix
};

// Constraint route: adot solves P_1 V(J, adot) = 0 (V is affine in adot).
inline ModulationResult solve_modulation_constraint(const VelocityOperator& vel, const Vec& jump) {
  const Vec v0 = vel.coeffs(jump, Vec2::Zero());
  Mat2 A;
  for (int j = 0; j < 2; ++j) {
    const Vec vj = vel.coeffs(Vec::Zero(jump.size()), Vec2::Unit(j));
    A(0, j) = -vj(1);
    A(1, j) = -vj(2);
  }
  ModulationResult out;
  const Eigen::JacobiSVD<Mat2> svd(A);
  const double smax = svd.singularValues()(0), smin = svd.singularValues()(1);
  out.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(out.condition <= 1e8))
    throw Error(ErrorKind::ModulationSingular, "center velocity system is ill-conditioned", out.condition);
  out.adot = A.partialPivLu().solve(Vec2(v0(1), v0(2)));
  return out;
}

// Volume integral over the physical domain of a field given on both phases.
inline double mapped_integral(const MappedGeometry& geom, const Mat& inner, const Mat& outer) {
  const ReferenceQuadrature q = reference_quadrature(*geom.grid);
  return q.integrate(inner.cwiseProduct(geom.inner.det), outer.cwiseProduct(geom.outer.det),
                     geom.grid->basis->weight());
}

// Physical gradient of w on one phase: grad u = DX^{-T} grad_xbar w.
struct PhaseGradient {
  Mat ux, uy;
};

inline PhaseGradient physical_gradient(const MappedGeometry& geom, const Mat& W, bool inner) {
  const ReferenceGrid& g = *geom.grid;
  const PhaseGeometry& ph = inner ? geom.inner : geom.outer;
  const Vec& s = inner ? g.s_in : g.s_out;
  const PolarDerivatives d = polar_derivatives(*g.basis, W, inner ? g.h_in : g.h_out, inner);
  PhaseGradient out{Mat(W.rows(), W.cols()), Mat(W.rows(), W.cols())};
  for (int j = 0; j < W.cols(); ++j) {
    const double th = g.basis->theta()(j), c = std::cos(th), sn = std::sin(th);
    for (int i = 0; i < W.rows(); ++i) {
      const Vec2 gr = polar_to_cartesian_gradient(s(i), c, sn, d.ws(i, j), d.wt(i, j));
      out.ux(i, j) = ph.ji11(i, j) * gr(0) + ph.ji21(i, j) * gr(1);
      out.uy(i, j) = ph.ji12(i, j) * gr(0) + ph.ji22(i, j) * gr(1);
    }
  }
  return out;
}

// Integral formula for the center velocity,
//   |Omega^-| adot^i = - int r^2 r_t xi^i dtheta - int_Omega u_t p_i - int_Omega u_{x^i},
// p_i = x^i - a^i, with u_t = w_t - grad u . X_t at a fixed physical point.
inline Vec2 modulation_formula(const MappedGeometry& geom, const Mat& w_in, const Mat& w_out, const Mat& wt_in,
                               const Mat& wt_out, const InterfaceGeometry& ig, const Vec& ft, const Vec2& a) {
  const AngularBasis& b = *geom.grid->basis;
  Vec2 out = Vec2::Zero();
  const PhaseGradient gi = physical_gradient(geom, w_in, true), go = physical_gradient(geom, w_out, false);
  auto ut = [](const PhaseGeometry& ph, const PhaseGradient& gr, const Mat& wt) {
    return Mat(wt.array() - gr.ux.array() * ph.xt1.array() - gr.uy.array() * ph.xt2.array());
  };
  const Mat ut_in = ut(geom.inner, gi, wt_in), ut_out = ut(geom.outer, go, wt_out);
  for (int i = 0; i < 2; ++i) {
    const Vec xi = i == 0 ? Vec(b.theta().array().cos()) : Vec(b.theta().array().sin());
    const double surface = b.integrate(ig.r.array().square().matrix().cwiseProduct(ft).cwiseProduct(xi));
    const Mat& Xin = i == 0 ? geom.inner.X1 : geom.inner.X2;
    const Mat& Xout = i == 0 ? geom.outer.X1 : geom.outer.X2;
    const double moment = mapped_integral(geom, ut_in.cwiseProduct((Xin.array() - a(i)).matrix()),
                                          ut_out.cwiseProduct((Xout.array() - a(i)).matrix()));
    const double grad = i == 0 ? mapped_integral(geom, gi.ux, go.ux) : mapped_integral(geom, gi.uy, go.uy);
    out(i) = (-surface - moment - grad) / ig.inner_volume;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initial data

// Graph of the same curve about a shifted center: the curve (1 + f(phi)) xi(phi)
// is re-expanded as shift + (1 + g(theta)) xi(theta) and truncated to degree K.
inline RadialGraph reexpand_graph(const RadialGraph& f, const Vec2& shift) {
  const AngularBasis& b = *f.basis;
  Vec v(b.M());
  for (int j = 0; j < b.M(); ++j) {
    const double target = b.theta()(j);
    double phi = target, rho = 0.0;
    for (int it = 0; it < 60; ++it) {
      const GraphSample gs = sample_graph(f.coeffs, phi);
      const double r = 1.0 + gs.f;
      const Vec2 xi(std::cos(phi), std::sin(phi)), xp(-std::sin(phi), std::cos(phi));
      const Vec2 d = r * xi - shift;
      const Vec2 dd = gs.f1 * xi + r * xp;
      const double ang = std::remainder(std::atan2(d(1), d(0)) - target, 2.0 * kPi);
      const double dang = (d(0) * dd(1) - d(1) * dd(0)) / d.squaredNorm();
      rho = d.norm();
      const double step = ang / dang;
      phi -= step;
      if (std::abs(step) < 1e-15) break;
    }
    const GraphSample gs = sample_graph(f.coeffs, phi);
    rho = ((1.0 + gs.f) * Vec2(std::cos(phi), std::sin(phi)) - shift).norm();
    v(j) = rho - 1.0;
  }
  return RadialGraph::from_values(f.basis, v);
}

struct Recentering {
  RadialGraph f;
  Vec2 shift = Vec2::Zero();  // new center minus old center
  int iterations = 0;
};

// Fixed-point translation until |P_1 f| <= tol.
inline Recentering recenter(const RadialGraph& f0, double tol, int max_iter = 50) {
  Recentering out{f0, Vec2::Zero(), 0};
  for (int it = 0; it <= max_iter; ++it) {
    const Vec2 p1(out.f.coeffs(1), out.f.coeffs(2));
    if (p1.norm() <= tol) {
      out.iterations = it;
      return out;
    }
    if (it == max_iter) break;
    out.shift += p1 / std::sqrt(kPi);
    out.f = reexpand_graph(f0, out.shift);
  }
  const Vec2 p1(out.f.coeffs(1), out.f.coeffs(2));
  throw Error(ErrorKind::RecenterDiverged, "recentering did not converge", p1.norm());
}

// ---------------------------------------------------------------------------
// Simulation state

struct SimConfig {
  double R_omega = 1.2;
  int K = 16;
  int M = 0;  // 0: 4K
  int n_in = 48, n_out = 48;
  double dt = 2e-3;
  double t_end = 1.0;
  double eps = 0.0;
  double orth_tol = 1e-8;
  double blowup = 0.25;   // StopOnBlowup when max |f| exceeds this
  double blend_d = 0.0;   // 0: default plateau half-width
  double gmres_rtol = 1e-11;
  double gmres_atol = 1e-14;
  int gmres_restart = 40;
  int gmres_max_iter = 400;
  int diag_every = 1;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::ConfigError, what); };
    if (!(R_omega > 1.0)) bad("R_omega must exceed 1");
    if (K < 2) bad("K must be at least 2");
    if (M != 0 && (M % 2 != 0 || M < 2 * K + 2)) bad("M must be even and at least 2K+2");
    if (n_in < 8 || n_out < 8) bad("radial grids need at least 8 nodes");
    if (!(dt > 0.0)) bad("dt must be positive");
    if (!(t_end >= 0.0)) bad("t_end must be non-negative");
    if (!(eps >= 0.0)) bad("eps must be non-negative");
    if (!(orth_tol > 0.0)) bad("orth_tol must be positive");
    if (!(blowup > 0.0)) bad("blowup threshold must be positive");
    if (blend_d < 0.0) bad("blend_d must be non-negative");
    if (diag_every < 1) bad("diag_every must be at least 1");
  }
  BlendConfig blend() const {
    BlendConfig b = BlendConfig::for_domain(R_omega);
    if (blend_d > 0.0) b.d = blend_d;
    b.validate();
    return b;
  }
  GridPtr grid() const { return make_grid(make_basis(K, M), R_omega, n_in, n_out); }
};

struct CenterSample {
  double t;
  Vec2 a, adot;
};

struct CenterState {
  Vec2 a = Vec2::Zero();
  Vec2 adot = Vec2::Zero();
  std::vector<CenterSample> history;
};

// Per-step solver record.
struct StepInfo {
  int gmres_iterations = 0;
  double gmres_residual = 0.0;
  double orth_defect = 0.0;  // |P_1 f| before any projection
  bool projected = false;
  Vec2 adot_formula = Vec2::Zero();
  double modulation_condition = 1.0;
  int area_sweeps = 0;  // solves spent on the quadratic area remainder
};

// Map parameters of one time level.
struct MapLevel {
  Vec f;
  Vec2 a = Vec2::Zero();
  Vec ft;
  Vec2 adot = Vec2::Zero();
};

struct SimState {
  GridPtr grid;
  BlendConfig blend;
  TemperatureField w;
  RadialGraph f;
  CenterState center;
  double t = 0.0;
  long step_index = 0;

  // Previous level for the two-step scheme (empty before the first step).
  std::optional<Vec> f_prev;
  Vec2 a_prev = Vec2::Zero();
  // Maps on which w (and w.prev) live.
  MapLevel map, map_prev;

  Vec jump;      // flux jump of the last step (values)
  Vec velocity;  // f_t of the last step (values)
  Vec area_remainder;  // q = (F - f*)^2 / 2 of the last step, reused as first guess
  StepInfo info;
  int projections = 0;
  double mass_shift = 0.0;
  Recentering recentering;

  MappedGeometry geometry() const {
    return build_map(grid, RadialGraph::from_coeffs(grid->basis, map.f), map.a, map.adot, blend, &map.ft);
  }
};

// Recenters f0 (center a0), samples w0 at the mapped points and shifts it by
// a constant so int w + |Omega^-| - pi = 0, i.e. the mass equals that of the
// steady unit circle.
inline SimState prepare_initial_data(const std::function<double(const Vec2&)>& w0, const RadialGraph& f0,
                                     const Vec2& a0, const SimConfig& cfg) {
  cfg.validate();
  SimState st;
  st.grid = cfg.grid();
  st.blend = cfg.blend();
  if (f0.basis->K() != st.grid->basis->K() || f0.basis->M() != st.grid->basis->M())
    throw Error(ErrorKind::ConfigError, "initial interface does not match the configured basis");
  st.recentering = recenter(RadialGraph::from_coeffs(st.grid->basis, f0.coeffs), cfg.orth_tol);
  st.f = st.recentering.f;
  st.center.a = a0 + st.recentering.shift;
  st.map = {st.f.coeffs, st.center.a, Vec::Zero(st.f.coeffs.size()), Vec2::Zero()};
  st.map_prev = st.map;

  const MappedGeometry geom = st.geometry();
  const ReferenceGrid& g = *st.grid;
  st.w = TemperatureField::zeros(g);
  st.w.det_inner = geom.inner.det;
  st.w.det_outer = geom.outer.det;
  for (int j = 0; j < g.M(); ++j) {
    for (int i = 0; i < g.n_in; ++i) st.w.inner(i, j) = w0(Vec2(geom.inner.X1(i, j), geom.inner.X2(i, j)));
    for (int i = 0; i < g.n_out; ++i) st.w.outer(i, j) = w0(Vec2(geom.outer.X1(i, j), geom.outer.X2(i, j)));
  }
  const InterfaceGeometry ig = interface_geometry(st.f);
  const double volume = mapped_integral(geom, Mat::Ones(g.n_in, g.M()), Mat::Ones(g.n_out, g.M()));
  const double excess = mapped_integral(geom, st.w.inner, st.w.outer) + ig.inner_volume - kPi;
  st.mass_shift = -excess / volume;
  st.w.inner.array() += st.mass_shift;
  st.w.outer.array() += st.mass_shift;
  st.jump = extract_jump(g, st.w);
  st.velocity = Vec::Zero(g.M());
  st.center.history.push_back({0.0, st.center.a, st.center.adot});
  return st;
}

// Restarts the two-step scheme from `now` with `before` as the previous level
// (used to change the step size on a smooth solution).
inline SimState attach_history(const SimState& now, const SimState& before) {
  SimState s = now;
  s.f_prev = before.f.coeffs;
  s.a_prev = before.center.a;
  s.w.prev = before.w.snapshot();
  s.map_prev = before.map;
  return s;
}

// ---------------------------------------------------------------------------
// Coupled step

namespace detail {

// Slot layout of the packed unknown: [W interior | F (2K+1) | Adot (2)].
struct CoupledLayout {
  int nw = 0, nf = 0;
  int size() const { return nw + nf + 2; }
};

// (k^2 - 1) per coefficient slot: linearised curvature kappa(f + h) - kappa(f)
// about the unit circle is (k^2 - 1) h_k.
inline Vec curvature_weights(int ncoef) {
  Vec out(ncoef);
  for (int m = 0; m < ncoef; ++m) {
    const double k = (m + 1) / 2;
    out(m) = k * k - 1.0;
  }
  return out;
}

}  // namespace detail

inline SimState advance(const SimState& st, const SimConfig& cfg) {
  const ReferenceGrid& g = *st.grid;
  const BasisPtr& basis = g.basis;
  const AngularBasis& b = *basis;
  const int M = g.M(), nc = b.ncoef();
  const double dt = cfg.dt;
  const bool second = st.f_prev.has_value();
  const BdfWeights bw = second ? BdfWeights::bdf2() : BdfWeights::euler();

  // Extrapolated interface and center carry the map of this step.
  const Vec fstar = second ? Vec(2.0 * st.f.coeffs - *st.f_prev) : st.f.coeffs;
  const Vec2 astar = second ? Vec2(2.0 * st.center.a - st.a_prev) : st.center.a;
  MapLevel lvl;
  lvl.f = fstar;
  lvl.a = astar;
  lvl.ft = (bw.c0 * fstar - bw.c1 * st.map.f - bw.c2 * st.map_prev.f) / dt;
  lvl.adot = (bw.c0 * astar - bw.c1 * st.map.a - bw.c2 * st.map_prev.a) / dt;
  const RadialGraph fs = RadialGraph::from_coeffs(basis, fstar);
  const MappedGeometry geom = build_map(st.grid, fs, astar, lvl.adot, st.blend, &lvl.ft);
  const InterfaceGeometry ig = interface_geometry(fs);
  const VelocityOperator vel(basis, ig, cfg.eps);
  // The 2x2 constraint system must be well posed on this geometry.
  const double cond = solve_modulation_constraint(vel, Vec::Zero(M)).condition;

  // Dirichlet data G(F) = kappa(f*) - 1 + sum (k^2 - 1) (F - f*)_k.
  const Vec kw = detail::curvature_weights(nc);
  const Vec g_const = b.truncate((ig.curvature.array() - double(kDim - 1)).matrix()) -
                      b.to_values(kw.cwiseProduct(fstar));

  // Heat rows are the cell balances of det DX * w divided by det DX of the
  // new level, so the history enters as a density.
  HeatDiscretization disc(st.grid, &geom, bw.c0, dt);
  const detail::CoupledLayout lay{disc.n_interior(), nc};
  Mat hist_in = bw.c1 * st.w.density_inner(), hist_out = bw.c1 * st.w.density_outer();
  if (second) {
    hist_in += bw.c2 * st.w.prev->density_inner();
    hist_out += bw.c2 * st.w.prev->density_outer();
  }
  const Vec rhs_w = disc.pack(hist_in.cwiseQuotient(geom.inner.det), hist_out.cwiseQuotient(geom.outer.det));

  // Interface law in area form, d/dt (r^2 / 2) = r f_t, so the discrete
  // enclosed area changes by exactly the flux the heat rows lose. With
  // A(F) = A(f*) + r* (F - f*) + q the rows are
  //   P_K[r* (c0 F - dt V)] = P_K[c1 A_n + c2 A_{n-1} - c0 (A(f*) - r* f*) - c0 q],
  // and the quadratic remainder q is iterated to consistency.
  const Vec& rstar = ig.r;
  const Vec fstar_v = b.to_values(fstar);
  auto area = [](const Vec& fv) { return Vec(0.5 * (1.0 + fv.array()).square()); };
  Vec area_hist = bw.c1 * area(st.f.values) - bw.c0 * (area(fstar_v) - rstar.cwiseProduct(fstar_v));
  if (second) area_hist += bw.c2 * area(b.to_values(*st.f_prev));
  Vec q = st.area_remainder.size() == M ? st.area_remainder : Vec::Zero(M);

  struct Eval {
    Mat inner, outer;
    Vec jump, v;
  };
  auto evaluate = [&](const Vec& x, bool affine, Eval& e) {
    const Vec F = x.segment(lay.nw, nc);
    const Vec2 A = x.tail(2);
    Vec gb = b.to_values(kw.cwiseProduct(F));
    if (affine) gb += g_const;
    disc.unpack(x.head(lay.nw), gb.transpose(), e.inner, e.outer);
    e.jump = raw_jump(g, e.inner, e.outer);
    e.v = vel.values(e.jump, A);
  };
  auto residual = [&](const Vec& x, bool affine) {
    Eval e;
    evaluate(x, affine, e);
    Vec r(lay.size());
    const Vec zero = Vec::Zero(lay.nw);
    const Vec F = x.segment(lay.nw, nc);
    r.head(lay.nw) = disc.heat_residual(e.inner, e.outer, affine ? rhs_w : zero);
    Vec law = rstar.cwiseProduct(bw.c0 * b.to_values(F) - dt * e.v);
    if (affine) law -= area_hist - bw.c0 * q;
    r.segment(lay.nw, nc) = b.to_coeffs(law);
    r.tail(2) = F.segment(1, 2);
    return r;
  };
  auto A = [&](const Vec& x) { return residual(x, false); };

  // Exact inverse of the flat problem, mode by mode.
  const double sq = std::sqrt(kPi);
  auto P = [&](const Vec& y) {
    auto sol = disc.flat_particular(y.head(lay.nw));
    Vec x(lay.size());
    Vec gb = Vec::Zero(M);
    for (int m = 0; m < nc; ++m) {
      const int k = b.wavenumber(m);
      const double reg = 1.0 + cfg.eps * k * k;
      const double rf = y(lay.nw + m);
      if (k == 1) {
        const double ra = y(lay.nw + nc + (m - 1));
        x(lay.nw + m) = ra;
        x(lay.nw + nc + (m - 1)) = (reg * (rf - bw.c0 * ra) + dt * sol.j_p(m)) / (dt * sq);
      } else {
        const double kk = double(k) * k - 1.0;
        x(lay.nw + m) = (rf + dt * sol.j_p(m) / reg) / (bw.c0 - dt * kk * disc.homogeneous_jump(m) / reg);
        gb(m) = kk * x(lay.nw + m);
      }
    }
    x.head(lay.nw) = disc.flat_combine(sol, gb);
    return x;
  };

  Vec x;
  GmresResult res;
  int sweeps = 0;
  for (;;) {
    const Vec bvec = -residual(Vec::Zero(lay.size()), true);
    if (sweeps == 0) x = P(bvec);
    res = gmres(A, P, bvec, x, cfg.gmres_rtol, cfg.gmres_atol, cfg.gmres_restart, cfg.gmres_max_iter);
    if (!res.converged) throw Error(ErrorKind::SolverFailed, "coupled step GMRES did not converge", res.residual);
    ++sweeps;
    const Vec d = b.to_values(x.segment(lay.nw, nc)) - fstar_v;
    const Vec q_new = 0.5 * d.cwiseAbs2();
    const double change = b.integrate((q_new - q).cwiseAbs());
    q = q_new;
    if (change <= 1e-15 || sweeps >= 20) break;
  }

  Eval e;
  evaluate(x, true, e);
  SimState next = st;
  next.w.inner = e.inner;
  next.w.outer = e.outer;
  next.w.time = st.t + dt;
  next.w.prev = st.w.snapshot();
  next.w.det_inner = geom.inner.det;
  next.w.det_outer = geom.outer.det;
  next.area_remainder = q;
  next.f_prev = st.f.coeffs;
  next.a_prev = st.center.a;
  next.map_prev = st.map;
  next.map = lvl;

  Vec F = x.segment(lay.nw, nc);
  const Vec2 adot = x.tail(2);
  next.info = StepInfo{};
  next.info.gmres_iterations = res.iterations;
  next.info.area_sweeps = sweeps;
  next.info.gmres_residual = res.residual;
  next.info.modulation_condition = cond;
  next.info.orth_defect = Vec2(F(1), F(2)).norm();
  if (next.info.orth_defect > cfg.orth_tol) {
    F(1) = F(2) = 0.0;
    next.info.projected = true;
    ++next.projections;
  }
  next.f = RadialGraph::from_coeffs(basis, F);
  next.center.a = (bw.c1 * st.center.a + bw.c2 * st.a_prev + dt * adot) / bw.c0;
  next.center.adot = adot;
  next.t = st.t + dt;
  next.step_index = st.step_index + 1;
  next.center.history.push_back({next.t, next.center.a, adot});
  next.jump = e.jump;
  next.velocity = b.truncate(e.v);

  // Integral-formula center velocity on the new level, for comparison.
  const Mat wt_in = (bw.c0 * e.inner - bw.c1 * st.w.inner - (second ? Mat(bw.c2 * st.w.prev->inner)
                                                                     : Mat::Zero(g.n_in, M))) / dt;
  const Mat wt_out = (bw.c0 * e.outer - bw.c1 * st.w.outer - (second ? Mat(bw.c2 * st.w.prev->outer)
                                                                      : Mat::Zero(g.n_out, M))) / dt;
  next.info.adot_formula =
      modulation_formula(geom, e.inner, e.outer, wt_in, wt_out, interface_geometry(next.f), next.velocity,
                         next.center.a);

  if (!next.w.finite() || !F.allFinite()) throw Error(ErrorKind::SolverFailed, "non-finite state after step");
  const double fmax = next.f.max_abs();
  if (fmax > cfg.blowup) throw Error(ErrorKind::StopOnBlowup, "max |f| exceeded the blowup threshold", fmax);
  check_graph(next.f.values);
  return next;
}

}  // namespace stefan
