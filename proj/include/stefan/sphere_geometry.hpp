#pragma once

// Radial-graph interfaces over the unit circle with Fourier (circular harmonic)
// calculus. Coefficients use the orthonormal basis
//   s_0 = 1/sqrt(2 pi),  cos(k t)/sqrt(pi),  sin(k t)/sqrt(pi)
// stored as [s_0, c_1, s_1, c_2, s_2, ...]. Grid fields carry M values at
// theta_j = 2 pi j / M.

#include <memory>
#include <vector>

#include "stefan/common.hpp"

namespace stefan {

// Discrete transforms and spectral derivative matrices for one (K, M) pair.
// The "full" transforms cover all M grid modes (including the Nyquist cosine)
// and are used by the polar heat grid; the truncated ones map to degree K.
class AngularBasis {
 public:
  AngularBasis(int K, int M) : K_(K), M_(M) {
    if (K < 1 || M % 2 != 0 || M < 2 * K + 2)
      throw Error(ErrorKind::ConfigError, "angular basis needs K >= 1, M even, M >= 2K+2");
    theta_.resize(M);
    for (int j = 0; j < M; ++j) theta_(j) = 2.0 * kPi * j / M;

    full_synth_.resize(M, M);
    for (int j = 0; j < M; ++j) {
      for (int m = 0; m < M; ++m) full_synth_(j, m) = mode_value(m, j);
    }
    // The discrete basis is orthonormal under the trapezoid rule.
    full_anal_ = (2.0 * kPi / M) * full_synth_.transpose();
    synth_ = full_synth_.leftCols(ncoef());
    anal_ = full_anal_.topRows(ncoef());

    // Closed-form Fourier differentiation matrices for an even grid. The
    // Nyquist cosine has zero first derivative and eigenvalue -(M/2)^2.
    const double h = 2.0 * kPi / M;
    grid_d1_.resize(M, M);
    grid_d2_.resize(M, M);
    for (int j = 0; j < M; ++j) {
      for (int l = 0; l < M; ++l) {
        if (j == l) {
          grid_d1_(j, l) = 0.0;
          grid_d2_(j, l) = -kPi * kPi / (3.0 * h * h) - 1.0 / 6.0;
          continue;
        }
        const double sign = ((j - l) % 2 == 0) ? 1.0 : -1.0;
        const double half = 0.5 * (j - l) * h;
        grid_d1_(j, l) = 0.5 * sign / std::tan(half);
        grid_d2_(j, l) = -0.5 * sign / (std::sin(half) * std::sin(half));
      }
    }
  }

  int K() const { return K_; }
  int M() const { return M_; }
  int ncoef() const { return 2 * K_ + 1; }
  const Vec& theta() const { return theta_; }
  double weight() const { return 2.0 * kPi / M_; }

  // Harmonic degree of storage slot m.
  int wavenumber(int m) const { return m == M_ - 1 ? M_ / 2 : (m + 1) / 2; }

  Vec to_values(const Vec& coeffs) const { return synth_ * coeffs; }
  Vec to_coeffs(const Vec& values) const { return anal_ * values; }
  const Mat& synth() const { return synth_; }
  const Mat& anal() const { return anal_; }
  const Mat& full_synth() const { return full_synth_; }
  const Mat& full_anal() const { return full_anal_; }
  // Pseudo-spectral first and second theta derivatives acting on grid values.
  const Mat& grid_d1() const { return grid_d1_; }
  const Mat& grid_d2() const { return grid_d2_; }

  // Truncate a grid field to degree K (pseudo-spectral re-truncation).
  Vec truncate(const Vec& values) const { return synth_ * (anal_ * values); }

  Vec coeff_d1(const Vec& c) const {
    Vec out = Vec::Zero(c.size());
    for (int k = 1; 2 * k < c.size(); ++k) {
      out(2 * k - 1) = k * c(2 * k);
      out(2 * k) = -k * c(2 * k - 1);
    }
    return out;
  }
  Vec coeff_laplacian(const Vec& c) const {
    Vec out = c;
    for (int m = 0; m < c.size(); ++m) {
      const int k = (m + 1) / 2;
      out(m) *= -double(k) * k;
    }
    return out;
  }

  double integrate(const Vec& values) const { return weight() * values.sum(); }

 private:
  // Basis slot m at node j; the phase k j is reduced mod M before the
  // trigonometric call so the table is accurate to one ulp.
  double mode_value(int m, int j) const {
    if (m == 0) return 1.0 / std::sqrt(2.0 * kPi);
    if (m == M_ - 1) return (j % 2 == 0 ? 1.0 : -1.0) / std::sqrt(2.0 * kPi);
    const int k = (m + 1) / 2;
    const double t = 2.0 * kPi * double((long(k) * j) % M_) / M_;
    return (m % 2 == 1 ? std::cos(t) : std::sin(t)) / std::sqrt(kPi);
  }

  int K_, M_;
  Vec theta_;
  Mat synth_, anal_, full_synth_, full_anal_, grid_d1_, grid_d2_;
};

using BasisPtr = std::shared_ptr<const AngularBasis>;

inline BasisPtr make_basis(int K, int M = 0) {
  return std::make_shared<const AngularBasis>(K, M > 0 ? M : 4 * K);
}

// Unit normalised harmonic s_m (storage slot m) sampled on the grid.
inline Vec harmonic(const AngularBasis& b, int slot) {
  Vec c = Vec::Zero(b.ncoef());
  c(slot) = 1.0;
  return b.to_values(c);
}

// Interface perturbation f on the unit circle: r = 1 + f.
struct RadialGraph {
  BasisPtr basis;
  Vec coeffs;
  Vec values;

  static RadialGraph from_coeffs(BasisPtr b, Vec c) {
    Vec v = b->to_values(c);
    return {std::move(b), std::move(c), std::move(v)};
  }
  // Values are truncated to degree K first so both views stay consistent.
  static RadialGraph from_values(BasisPtr b, const Vec& v) {
    return from_coeffs(b, b->to_coeffs(v));
  }
  static RadialGraph zero(BasisPtr b) { return from_coeffs(b, Vec::Zero(b->ncoef())); }

  int K() const { return basis->K(); }
  int M() const { return basis->M(); }
  Vec d1() const { return basis->to_values(basis->coeff_d1(coeffs)); }
  Vec d2() const { return basis->to_values(basis->coeff_d1(basis->coeff_d1(coeffs))); }
  double max_abs() const { return values.cwiseAbs().maxCoeff(); }
};

struct InterfaceGeometry {
  Vec r, dr, ddr;             // radius and its theta derivatives
  Vec metric;                 // |g| = sqrt(r^2 + r'^2)
  Vec curvature;              // kappa o phi
  Eigen::MatrixX2d normal;    // outward unit normal (x, y) per angle
  Vec area_element;           // r^{n-2} |g|
  double inner_volume = 0.0;  // |Omega^-| = int r^n / n
  Vec curvature_remainder;    // N(f)
};

struct Projection {
  double P0 = 0.0;
  Vec2 P1 = Vec2::Zero();
  Vec P2plus;
};

inline Projection harmonic_project(const AngularBasis& b, const Vec& h) {
  Projection p;
  p.P0 = b.integrate(h) / (2.0 * kPi);
  const Vec s1 = harmonic(b, 1), s2 = harmonic(b, 2);
  p.P1 = Vec2(b.integrate(h.cwiseProduct(s1)), b.integrate(h.cwiseProduct(s2)));
  p.P2plus = h - Vec::Constant(h.size(), p.P0) - p.P1(0) * s1 - p.P1(1) * s2;
  return p;
}

// Laplace-Beltrami on grid values of a degree-K field.
inline Vec laplace_beltrami(const AngularBasis& b, const Vec& h) {
  return b.to_values(b.coeff_laplacian(b.to_coeffs(h)));
}

// Z(h) = int |grad_g h|^2 - (n-1) h^2, evaluated spectrally.
inline double z_form_coeffs(const Vec& c) {
  double z = 0.0;
  for (int m = 0; m < c.size(); ++m) {
    const int k = (m + 1) / 2;
    z += (double(k) * (k + kDim - 2) - (kDim - 1)) * c(m) * c(m);
  }
  return z;
}

inline double z_form(const AngularBasis& b, const Vec& h) { return z_form_coeffs(b.to_coeffs(h)); }

// Z_2(h) = Z(Lap_g h) style weight k^2 (k^2 - 1): the surface part of the
// first-order energy term int |grad_g grad_g h|^2-type sums.
inline double z2_form_coeffs(const Vec& c) {
  double z = 0.0;
  for (int m = 0; m < c.size(); ++m) {
    const int k = (m + 1) / 2;
    z += double(k) * k * (double(k) * k - 1.0) * c(m) * c(m);
  }
  return z;
}

inline void check_graph(const Vec& f_values) {
  const double rmin = 1.0 + f_values.minCoeff();
  if (!(rmin > 0.0)) throw Error(ErrorKind::GraphViolation, "1 + f <= 0 on the interface", rmin);
}

inline InterfaceGeometry interface_geometry(const RadialGraph& f) {
  check_graph(f.values);
  const AngularBasis& b = *f.basis;
  const int M = b.M();
  InterfaceGeometry g;
  g.r = f.values.array() + 1.0;
  g.dr = f.d1();
  g.ddr = f.d2();
  g.metric = (g.r.array().square() + g.dr.array().square()).sqrt();

  // kappa = (n-1)/|g| - (1/r) d/dtheta (r'/|g|), the divergence taken
  // pseudo-spectrally on the full grid.
  const Vec q = g.dr.cwiseQuotient(g.metric);
  const Vec dq = b.grid_d1() * q;
  g.curvature = (double(kDim - 1) / g.metric.array() - dq.array() / g.r.array()).matrix();

  g.normal.resize(M, 2);
  const Vec& th = b.theta();
  for (int j = 0; j < M; ++j) {
    const double c = std::cos(th(j)), s = std::sin(th(j));
    g.normal(j, 0) = (g.r(j) * c + g.dr(j) * s) / g.metric(j);
    g.normal(j, 1) = (g.r(j) * s - g.dr(j) * c) / g.metric(j);
  }
  g.area_element = g.r.array().pow(kDim - 2) * g.metric.array();
  g.inner_volume = b.integrate((g.r.array().pow(kDim) / kDim).matrix());

  const Vec lap = b.to_values(b.coeff_laplacian(f.coeffs));
  g.curvature_remainder =
      (g.curvature.array() - (kDim - 1) + (kDim - 1) * f.values.array() + lap.array()).matrix();
  return g;
}

// Max over i of sup |(Lap_g + (n-1)) s_i| for the first-degree harmonics.
inline double nullspace_residual(const AngularBasis& b) {
  double worst = 0.0;
  for (int slot : {1, 2}) {
    Vec c = Vec::Zero(b.ncoef());
    c(slot) = 1.0;
    const Vec res = b.to_values(b.coeff_laplacian(c) + (kDim - 1) * c);
    worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  return worst;
}

// Same residual evaluated in collocation space: transform, apply, synthesise.
inline double nullspace_residual_collocation(const AngularBasis& b) {
  double worst = 0.0;
  for (int slot : {1, 2}) {
    const Vec s = harmonic(b, slot);
    const Vec res = b.grid_d2() * s + (kDim - 1) * s;
    worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace stefan
