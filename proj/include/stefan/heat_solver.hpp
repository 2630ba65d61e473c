#pragma once

// Transformed heat equation on the fixed reference domain. The operator is
// applied in polar metric form,
//   L w = g^{ss} w_ss + 2 g^{st} w_st + g^{tt} w_tt + B^s w_s + B^t w_t,
// with second-order radial differences and pseudo-spectral angular ones.
// Linear systems are solved by GMRES preconditioned with the exact flat
// (identity map) operator, which decouples into tridiagonal solves per
// Fourier mode.

#include <memory>
#include <optional>

#include "stefan/coord_transform.hpp"
#include "stefan/linalg.hpp"

namespace stefan {

struct TemperatureField {
  Mat inner;  // n_in x M, last row on s = 1
  Mat outer;  // n_out x M, first row on s = 1
  double time = 0.0;
  std::shared_ptr<const TemperatureField> prev;
  // det DX of the map this level lives on; empty means the identity.
  Mat det_inner, det_outer;

  static TemperatureField zeros(const ReferenceGrid& g) {
    return {Mat::Zero(g.n_in, g.M()), Mat::Zero(g.n_out, g.M()), 0.0, nullptr, {}, {}};
  }
  bool finite() const { return inner.allFinite() && outer.allFinite(); }
  // Copy without history, for storing as somebody's prev.
  std::shared_ptr<const TemperatureField> snapshot() const {
    return std::make_shared<const TemperatureField>(
        TemperatureField{inner, outer, time, nullptr, det_inner, det_outer});
  }
  // Conserved density det DX * w.
  Mat density_inner() const { return det_inner.size() ? Mat(det_inner.cwiseProduct(inner)) : inner; }
  Mat density_outer() const { return det_outer.size() ? Mat(det_outer.cwiseProduct(outer)) : outer; }
};

// Flux-form coefficients of one phase. With J = det DX, the contravariant
// polar metric g^{ab} and grid velocity C = DX^{-1} X_t,
//   Phi^s = J (g^{ss} w_s + g^{st} w_t + C^s w),
//   Phi^t = J (g^{st} w_s + g^{tt} w_t + C^t w),
//   (J w)_t = (1/s) [(s Phi^s)_s + (s Phi^t)_t].
// Face rows follow the cells: inner face k is the upper face of node k,
// outer face k the lower face of node k + 1; the face on s = 1 is included.
struct FluxCoeffs {
  Mat fss, fst, fc;  // s J g^{ss}, s J g^{st}, s J C^s on faces
  Mat nst, ntt, nc;  // J g^{st}, J g^{tt}, J C^t on nodes
  Mat det;           // J on nodes
};

inline FluxCoeffs flat_flux_coeffs(const ReferenceGrid& g, bool inner) {
  const RadialCells c = radial_cells(g);
  const int n = inner ? g.n_in : g.n_out, M = g.M();
  const Vec& s = inner ? g.s_in : g.s_out;
  FluxCoeffs f;
  f.fss.resize(n - 1, M);
  for (int k = 0; k < n - 1; ++k) f.fss.row(k).setConstant(inner ? c.hi_in(k) : c.lo_out(k + 1));
  f.fst = f.fc = Mat::Zero(n - 1, M);
  f.nst = f.nc = Mat::Zero(n, M);
  f.ntt.resize(n, M);
  for (int i = 0; i < n; ++i) f.ntt.row(i).setConstant(1.0 / (s(i) * s(i)));
  f.det = Mat::Ones(n, M);
  return f;
}

// faces: the phase of the face-grid map; nodes: the phase of the node map.
inline FluxCoeffs mapped_flux_coeffs(const ReferenceGrid& g, bool inner, const PhaseGeometry& nodes,
                                     const PhaseGeometry& faces) {
  const RadialCells c = radial_cells(g);
  const int n = inner ? g.n_in : g.n_out, M = g.M();
  FluxCoeffs f;
  f.fss.resize(n - 1, M);
  f.fst.resize(n - 1, M);
  f.fc.resize(n - 1, M);
  auto face = [&](int k, const PhaseGeometry& ph, int row, double s) {
    f.fss.row(k) = s * ph.det.row(row).cwiseProduct(ph.gss.row(row));
    f.fst.row(k) = s * ph.det.row(row).cwiseProduct(ph.gst.row(row));
    f.fc.row(k) = s * ph.det.row(row).cwiseProduct(ph.Cs.row(row));
  };
  for (int k = 0; k < n - 1; ++k) {
    if (inner) {
      if (k == n - 2) face(k, nodes, n - 1, 1.0);
      else face(k, faces, k, c.hi_in(k));
    } else {
      if (k == 0) face(k, nodes, 0, 1.0);
      else face(k, faces, k - 1, c.lo_out(k + 1));
    }
  }
  f.nst = nodes.det.cwiseProduct(nodes.gst);
  f.ntt = nodes.det.cwiseProduct(nodes.gtt);
  f.nc = nodes.det.cwiseProduct(nodes.Ct);
  f.det = nodes.det;
  return f;
}

// Rotate a ring by half a turn: the value at theta + pi.
inline Eigen::RowVectorXd half_turn(const Eigen::RowVectorXd& row) {
  const int M = int(row.size()), h = M / 2;
  Eigen::RowVectorXd out(M);
  out.head(M - h) = row.tail(M - h);
  out.tail(h) = row.head(h);
  return out;
}

// Quadrature weights: finite-volume cell areas per unit angle times the
// angular weight. Nodes on s = 1 carry no weight, so this is also the
// conserved discrete mass of the flux-form heat operator.
struct ReferenceQuadrature {
  Vec w_in, w_out;  // per ring

  double integrate(const Mat& in, const Mat& out, double angular_weight) const {
    return angular_weight * (w_in.dot(in.rowwise().sum()) + w_out.dot(out.rowwise().sum()));
  }
};

inline ReferenceQuadrature reference_quadrature(const ReferenceGrid& g) {
  const RadialCells c = radial_cells(g);
  return {c.vol_in, c.vol_out};
}

// Radial/angle derivatives of a full phase field at all nodes, using the
// origin reflection (inner) and the Neumann mirror (outer). Rows on s = 1 use
// one-sided second-order stencils.
struct PolarDerivatives {
  Mat ws, wt, wss, wst, wtt;
};

inline PolarDerivatives polar_derivatives(const AngularBasis& b, const Mat& W, double h, bool inner) {
  const int n = int(W.rows()), M = int(W.cols());
  PolarDerivatives d;
  d.wt = W * b.grid_d1().transpose();
  d.wtt = W * b.grid_d2().transpose();
  d.ws.resize(n, M);
  d.wss.resize(n, M);
  d.wst.resize(n, M);
  auto row = [&](const Mat& A, int i) -> Eigen::RowVectorXd {
    if (i < 0) return half_turn(A.row(-i - 1));      // inner reflection through the origin
    if (i >= n) return A.row(2 * (n - 1) - i);       // outer Neumann mirror
    return A.row(i);
  };
  for (int i = 0; i < n; ++i) {
    const bool one_sided = inner ? (i == n - 1) : (i == 0);
    if (!one_sided) {
      d.ws.row(i) = (row(W, i + 1) - row(W, i - 1)) / (2.0 * h);
      d.wss.row(i) = (row(W, i + 1) - 2.0 * W.row(i) + row(W, i - 1)) / (h * h);
      d.wst.row(i) = (row(d.wt, i + 1) - row(d.wt, i - 1)) / (2.0 * h);
    } else if (inner) {
      d.ws.row(i) = (3.0 * W.row(i) - 4.0 * W.row(i - 1) + W.row(i - 2)) / (2.0 * h);
      d.wss.row(i) = (2.0 * W.row(i) - 5.0 * W.row(i - 1) + 4.0 * W.row(i - 2) - W.row(i - 3)) / (h * h);
      d.wst.row(i) = (3.0 * d.wt.row(i) - 4.0 * d.wt.row(i - 1) + d.wt.row(i - 2)) / (2.0 * h);
    } else {
      d.ws.row(i) = (-3.0 * W.row(i) + 4.0 * W.row(i + 1) - W.row(i + 2)) / (2.0 * h);
      d.wss.row(i) = (2.0 * W.row(i) - 5.0 * W.row(i + 1) + 4.0 * W.row(i + 2) - W.row(i + 3)) / (h * h);
      d.wst.row(i) = (-3.0 * d.wt.row(i) + 4.0 * d.wt.row(i + 1) - d.wt.row(i + 2)) / (2.0 * h);
    }
  }
  return d;
}

// Reference jump [w_s] = w_s^+ - w_s^- on s = 1, per angle (not truncated).
inline Vec raw_jump(const ReferenceGrid& g, const Mat& inner, const Mat& outer) {
  const int n = g.n_in;
  const Eigen::RowVectorXd plus = (-3.0 * outer.row(0) + 4.0 * outer.row(1) - outer.row(2)) / (2.0 * g.h_out);
  const Eigen::RowVectorXd minus =
      (3.0 * inner.row(n - 1) - 4.0 * inner.row(n - 2) + inner.row(n - 3)) / (2.0 * g.h_in);
  return (plus - minus).transpose();
}

inline Vec extract_jump(const ReferenceGrid& g, const TemperatureField& w) {
  return g.basis->truncate(raw_jump(g, w.inner, w.outer));
}

// Backward differentiation weights: w_t(n+1) = (c0 x_{n+1} - rhs) / dt with
// rhs = sum hist. BDF2 when a previous level with the same step exists.
struct BdfWeights {
  double c0 = 1.0, c1 = 1.0, c2 = 0.0;  // rhs = c1 x_n + c2 x_{n-1}
  static BdfWeights euler() { return {1.0, 1.0, 0.0}; }
  static BdfWeights bdf2() { return {1.5, 2.0, -0.5}; }
};

// Discrete transformed heat operator on one map, plus the flat per-mode
// solver used as preconditioner. Interior unknowns are inner rings
// 0..n_in-2 and outer rings 1..n_out-1, packed ring-major. Rows are the
// finite-volume balances divided by J, so the identity map gives exactly
// the flat operator.
class HeatDiscretization {
 public:
  HeatDiscretization(GridPtr grid, const MappedGeometry* geom, double c0, double dt)
      : grid_(std::move(grid)), c0_(c0), dt_(dt), cells_(radial_cells(*grid_)) {
    const ReferenceGrid& g = *grid_;
    const int M = g.M();
    flat_in_ = flat_flux_coeffs(g, true);
    flat_out_ = flat_flux_coeffs(g, false);
    if (geom) {
      const MappedGeometry faces = build_map(face_grid(g), RadialGraph::from_coeffs(g.basis, geom->f_coeffs),
                                             geom->center, geom->adot, geom->blend, &geom->ft_coeffs);
      full_in_ = mapped_flux_coeffs(g, true, geom->inner, faces.inner);
      full_out_ = mapped_flux_coeffs(g, false, geom->outer, faces.outer);
      geom_in_ = &geom->inner;
      geom_out_ = &geom->outer;
      flat_ = false;
    }
    // Per-mode tridiagonal factors and homogeneous (unit boundary) responses.
    modes_.resize(M);
    for (int m = 0; m < M; ++m) {
      const int k = g.basis->wavenumber(m);
      ModeSolver& ms = modes_[m];
      ms.inner = tridiag(k, true);
      ms.outer = tridiag(k, false);
      Vec hin = Vec::Zero(g.n_in - 1), hout = Vec::Zero(g.n_out - 1);
      hin(g.n_in - 2) = dt_ * 1.5 / (g.h_in * cells_.vol_in(g.n_in - 2));
      hout(0) = dt_ * 1.5 / (g.h_out * cells_.vol_out(1));
      ms.inner.solve(hin);
      ms.outer.solve(hout);
      ms.h_in = hin;
      ms.h_out = hout;
      ms.j_h = modal_jump(hin, hout, 1.0);
    }
  }

  int n_interior() const { return (grid_->n_in - 1 + grid_->n_out - 1) * grid_->M(); }
  double c0() const { return c0_; }
  double dt() const { return dt_; }
  const ReferenceGrid& grid() const { return *grid_; }
  bool flat() const { return flat_; }
  // J on the nodes of a phase (ones for the identity map).
  const Mat& det(bool inner) const { return coeffs(inner, !flat_).det; }

  // Full phase fields from packed interior values and the ring on s = 1.
  void unpack(const Vec& x, const Eigen::RowVectorXd& boundary, Mat& inner, Mat& outer) const {
    const ReferenceGrid& g = *grid_;
    const int M = g.M();
    inner.resize(g.n_in, M);
    outer.resize(g.n_out, M);
    for (int i = 0; i < g.n_in - 1; ++i) inner.row(i) = x.segment(i * M, M).transpose();
    inner.row(g.n_in - 1) = boundary;
    outer.row(0) = boundary;
    const int off = (g.n_in - 1) * M;
    for (int i = 1; i < g.n_out; ++i) outer.row(i) = x.segment(off + (i - 1) * M, M).transpose();
  }
  Vec pack(const Mat& inner, const Mat& outer) const {
    const ReferenceGrid& g = *grid_;
    const int M = g.M();
    Vec x(n_interior());
    for (int i = 0; i < g.n_in - 1; ++i) x.segment(i * M, M) = inner.row(i).transpose();
    const int off = (g.n_in - 1) * M;
    for (int i = 1; i < g.n_out; ++i) x.segment(off + (i - 1) * M, M) = outer.row(i).transpose();
    return x;
  }

  // Cell balance sum of fluxes / cell area on every interior node of a phase
  // (rows on s = 1 are zero).
  Mat divergence(const Mat& W, bool inner, bool mapped) const {
    const ReferenceGrid& g = *grid_;
    const FluxCoeffs& c = coeffs(inner, mapped);
    const int n = int(W.rows()), M = int(W.cols());
    const double h = inner ? g.h_in : g.h_out;
    const PolarDerivatives d = polar_derivatives(*g.basis, W, h, inner);
    // Face fluxes s Phi^s.
    Mat flux(n - 1, M);
    for (int k = 0; k < n - 1; ++k) {
      Eigen::RowVectorXd ws, wt, w;
      if (inner && k == n - 2) {
        ws = d.ws.row(n - 1);
        wt = d.wt.row(n - 1);
        w = W.row(n - 1);
      } else if (!inner && k == 0) {
        ws = d.ws.row(0);
        wt = d.wt.row(0);
        w = W.row(0);
      } else {
        ws = (W.row(k + 1) - W.row(k)) / h;
        wt = 0.5 * (d.wt.row(k) + d.wt.row(k + 1));
        w = 0.5 * (W.row(k) + W.row(k + 1));
      }
      flux.row(k) = c.fss.row(k).cwiseProduct(ws) + c.fst.row(k).cwiseProduct(wt) + c.fc.row(k).cwiseProduct(w);
    }
    const Mat theta_flux = c.nst.cwiseProduct(d.ws) + c.ntt.cwiseProduct(d.wt) + c.nc.cwiseProduct(W);
    const Mat dtheta = theta_flux * g.basis->grid_d1().transpose();
    Mat div = Mat::Zero(n, M);
    const Vec& s = inner ? g.s_in : g.s_out;
    const Vec& lo = inner ? cells_.lo_in : cells_.lo_out;
    const Vec& hi = inner ? cells_.hi_in : cells_.hi_out;
    const Vec& vol = inner ? cells_.vol_in : cells_.vol_out;
    const int first = inner ? 0 : 1, last = inner ? n - 2 : n - 1;
    for (int i = first; i <= last; ++i) {
      // Inner node i has faces i-1 (below) and i (above); outer node i has i-1 and i.
      Eigen::RowVectorXd up, down;
      if (inner) {
        up = flux.row(i);
        down = i == 0 ? Eigen::RowVectorXd::Zero(M) : Eigen::RowVectorXd(flux.row(i - 1));
      } else {
        down = flux.row(i - 1);
        up = i == n - 1 ? Eigen::RowVectorXd::Zero(M) : Eigen::RowVectorXd(flux.row(i));
      }
      div.row(i) = (up - down + (hi(i) - lo(i)) * s(i) * dtheta.row(i)) / vol(i);
    }
    return div;
  }

  // L w = divergence / J on every node of a phase (rows on s = 1 are zero).
  Mat apply(const Mat& W, bool inner, bool include_flat = true, bool include_perturbation = true) const {
    Mat L = Mat::Zero(W.rows(), W.cols());
    if (flat_) {
      if (include_flat) L = divergence(W, inner, false);
      return L;
    }
    if (include_perturbation) L = divergence(W, inner, true).cwiseQuotient(det(inner));
    if (include_flat && !include_perturbation) L = divergence(W, inner, false);
    if (!include_flat && include_perturbation) L -= divergence(W, inner, false);
    return L;
  }

  // Heat residual c0 w - dt L w - rhs on interior nodes (packed).
  Vec heat_residual(const Mat& inner, const Mat& outer, const Vec& rhs, bool include_perturbation = true) const {
    const Mat Lin = apply(inner, true, true, include_perturbation);
    const Mat Lout = apply(outer, false, true, include_perturbation);
    return c0_ * pack(inner, outer) - dt_ * pack(Lin, Lout) - rhs;
  }

  // Flat operator on modal data: interior residual r (packed, collocation)
  // with boundary modal values gb (size M, zero where the boundary is free)
  // is mapped to the interior solution w_p + gb * w_h, returned packed in
  // collocation form. Also returns the modal jump j_p of the particular part.
  struct FlatSolution {
    Mat inner_modal, outer_modal;  // interior rings only
    Vec j_p;                       // modal jump of the particular solution
  };
  FlatSolution flat_particular(const Vec& r) const {
    const ReferenceGrid& g = *grid_;
    const int M = g.M();
    FlatSolution fs;
    Mat rin(g.n_in - 1, M), rout(g.n_out - 1, M);
    for (int i = 0; i < g.n_in - 1; ++i) rin.row(i) = r.segment(i * M, M).transpose();
    const int off = (g.n_in - 1) * M;
    for (int i = 0; i < g.n_out - 1; ++i) rout.row(i) = r.segment(off + i * M, M).transpose();
    fs.inner_modal = rin * g.basis->full_anal().transpose();
    fs.outer_modal = rout * g.basis->full_anal().transpose();
    fs.j_p.resize(M);
    for (int m = 0; m < M; ++m) {
      modes_[m].inner.solve(fs.inner_modal.col(m));
      modes_[m].outer.solve(fs.outer_modal.col(m));
      fs.j_p(m) = modal_jump(fs.inner_modal.col(m), fs.outer_modal.col(m), 0.0);
    }
    return fs;
  }
  // Adds gb(m) times the homogeneous response and returns packed collocation.
  Vec flat_combine(FlatSolution& fs, const Vec& gb) const {
    const ReferenceGrid& g = *grid_;
    for (int m = 0; m < g.M(); ++m) {
      if (gb(m) == 0.0) continue;
      fs.inner_modal.col(m) += gb(m) * modes_[m].h_in;
      fs.outer_modal.col(m) += gb(m) * modes_[m].h_out;
    }
    const Mat in = fs.inner_modal * g.basis->full_synth().transpose();
    const Mat out = fs.outer_modal * g.basis->full_synth().transpose();
    const int M = g.M();
    Vec x(n_interior());
    for (int i = 0; i < g.n_in - 1; ++i) x.segment(i * M, M) = in.row(i).transpose();
    const int off = (g.n_in - 1) * M;
    for (int i = 0; i < g.n_out - 1; ++i) x.segment(off + i * M, M) = out.row(i).transpose();
    return x;
  }
  // Modal jump response to a unit boundary value in mode m.
  double homogeneous_jump(int m) const { return modes_[m].j_h; }

  // Bound on dt times the explicit perturbation |L - L_flat| (used by IMEX),
  // from node values of the coefficient deviations.
  double explicit_perturbation_norm() const {
    if (flat_) return 0.0;
    const ReferenceGrid& g = *grid_;
    const double kmax = g.M() / 2.0;
    double worst = 0.0;
    auto scan = [&](const PhaseGeometry& ph, const Vec& s, double h) {
      for (int i = 0; i < ph.gss.rows(); ++i) {
        for (int j = 0; j < ph.gss.cols(); ++j) {
          const double v = std::abs(ph.gss(i, j) - 1.0) * 4.0 / (h * h) +
                           2.0 * std::abs(ph.gst(i, j)) * kmax / h +
                           std::abs(ph.gtt(i, j) - 1.0 / (s(i) * s(i))) * kmax * kmax +
                           std::abs(ph.Bs(i, j) - 1.0 / s(i)) / h + std::abs(ph.Bt(i, j)) * kmax;
          worst = std::max(worst, v);
        }
      }
    };
    scan(*geom_in_, g.s_in, g.h_in);
    scan(*geom_out_, g.s_out, g.h_out);
    return dt_ * worst;
  }

 private:
  struct ModeSolver {
    Tridiagonal inner, outer;
    Vec h_in, h_out;
    double j_h = 0.0;
  };

  const FluxCoeffs& coeffs(bool inner, bool mapped) const {
    if (mapped && !flat_) return inner ? full_in_ : full_out_;
    return inner ? flat_in_ : flat_out_;
  }

  // Flat balance rows c0 w - dt L_flat w for one Fourier mode of wavenumber k.
  Tridiagonal tridiag(int k, bool inner) const {
    const ReferenceGrid& g = *grid_;
    const double h = inner ? g.h_in : g.h_out;
    const Vec& s = inner ? g.s_in : g.s_out;
    const Vec& lo_s = inner ? cells_.lo_in : cells_.lo_out;
    const Vec& hi_s = inner ? cells_.hi_in : cells_.hi_out;
    const Vec& vol = inner ? cells_.vol_in : cells_.vol_out;
    const int n = inner ? g.n_in - 1 : g.n_out - 1;
    Vec lo = Vec::Zero(n), di = Vec::Zero(n), up = Vec::Zero(n);
    for (int r = 0; r < n; ++r) {
      const int i = inner ? r : r + 1;  // node index in the phase
      const double V = vol(i), ang = double(k) * k * (hi_s(i) - lo_s(i)) / s(i);
      double cu = 0.0, cd = 0.0, cself = ang;  // coefficients of the flux balance
      if (inner) {
        if (i == g.n_in - 2) {  // one-sided face on s = 1: (3 w_b - 4 w_i + w_{i-1}) / 2h
          cself += 2.0 / h;
          cd += 0.5 / h;
        } else {
          cu += hi_s(i) / h;
          cself += hi_s(i) / h;
        }
        if (i > 0) {
          cd += lo_s(i) / h;
          cself += lo_s(i) / h;
        }
      } else {
        if (i == 1) {  // -(-3 w_b + 4 w_1 - w_2) / 2h
          cself += 2.0 / h;
          cu += 0.5 / h;
        } else {
          cd += lo_s(i) / h;
          cself += lo_s(i) / h;
        }
        if (i < g.n_out - 1) {
          cu += hi_s(i) / h;
          cself += hi_s(i) / h;
        }
      }
      di(r) = c0_ + dt_ * cself / V;
      lo(r) = -dt_ * cd / V;
      up(r) = -dt_ * cu / V;
    }
    lo(0) = 0.0;
    up(n - 1) = 0.0;
    return Tridiagonal(lo, di, up);
  }

  template <class A, class B>
  double modal_jump(const A& in, const B& out, double boundary) const {
    const ReferenceGrid& g = *grid_;
    const int n = g.n_in - 1;  // interior inner count; ring n is the boundary
    const double plus = (-3.0 * boundary + 4.0 * out(0) - out(1)) / (2.0 * g.h_out);
    const double minus = (3.0 * boundary - 4.0 * in(n - 1) + in(n - 2)) / (2.0 * g.h_in);
    return plus - minus;
  }

  GridPtr grid_;
  double c0_, dt_;
  RadialCells cells_;
  bool flat_ = true;
  FluxCoeffs flat_in_, flat_out_, full_in_, full_out_;
  const PhaseGeometry* geom_in_ = nullptr;
  const PhaseGeometry* geom_out_ = nullptr;
  std::vector<ModeSolver> modes_;
};

struct HeatStepOptions {
  bool implicit = true;     // false: IMEX (flat implicit, perturbation explicit)
  double cfl = 1.0;         // IMEX stability bound on dt * |perturbation|
  double rtol = 1e-11;
  int restart = 30;
  int max_iter = 600;
  const Mat* source_inner = nullptr;  // optional forcing at the new time level
  const Mat* source_outer = nullptr;
};

// One heat step on a fixed map with given Dirichlet data on s = 1.
// BDF2 is used when w.prev is one step of the same size behind, else
// backward Euler.
inline TemperatureField step_heat(const TemperatureField& w, const MappedGeometry& geom, const Vec& dirichlet,
                                  double dt, const HeatStepOptions& opt = {}) {
  if (!(dt > 0.0)) throw Error(ErrorKind::ConfigError, "dt must be positive");
  const ReferenceGrid& g = *geom.grid;
  const bool second_order = w.prev && std::abs((w.time - w.prev->time) - dt) <= 1e-12 * std::max(1.0, dt);
  const BdfWeights bw = second_order ? BdfWeights::bdf2() : BdfWeights::euler();

  HeatDiscretization disc(geom.grid, &geom, bw.c0, dt);
  const Eigen::RowVectorXd boundary = dirichlet.transpose();

  Vec rhs = bw.c1 * disc.pack(w.inner, w.outer);
  if (second_order) rhs += bw.c2 * disc.pack(w.prev->inner, w.prev->outer);
  if (opt.source_inner && opt.source_outer) rhs += dt * disc.pack(*opt.source_inner, *opt.source_outer);

  Mat in, out;
  const Vec zero = Vec::Zero(disc.n_interior());
  disc.unpack(zero, boundary, in, out);
  Vec x;
  if (!opt.implicit) {
    const double norm = disc.explicit_perturbation_norm();
    if (norm > opt.cfl) throw Error(ErrorKind::StepUnstable, "explicit perturbation exceeds the bound", norm);
    const Mat Pin = disc.apply(w.inner, true, false, true), Pout = disc.apply(w.outer, false, false, true);
    const Vec b = -disc.heat_residual(in, out, rhs + dt * disc.pack(Pin, Pout), false);
    auto fs = disc.flat_particular(b);
    x = disc.flat_combine(fs, Vec::Zero(g.M()));
  } else {
    const Vec b = -disc.heat_residual(in, out, rhs);
    auto A = [&](const Vec& v) {
      Mat vi, vo;
      disc.unpack(v, Eigen::RowVectorXd::Zero(g.M()), vi, vo);
      return Vec(disc.heat_residual(vi, vo, zero));
    };
    auto P = [&](const Vec& v) {
      auto fs = disc.flat_particular(v);
      return disc.flat_combine(fs, Vec::Zero(g.M()));
    };
    x = P(b);
    const GmresResult res = gmres(A, P, b, x, opt.rtol, 1e-15, opt.restart, opt.max_iter);
    if (!res.converged) throw Error(ErrorKind::SolverFailed, "heat step GMRES did not converge", res.residual);
  }
  TemperatureField next;
  disc.unpack(x, boundary, next.inner, next.outer);
  next.time = w.time + dt;
  next.prev = w.snapshot();
  next.det_inner = geom.inner.det;
  next.det_outer = geom.outer.det;
  return next;
}

}  // namespace stefan
