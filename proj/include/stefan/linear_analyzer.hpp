#pragma once

// Linearization about the unit circle in the disk of radius R_Omega, one
// Fourier mode at a time:
//   lambda u = u'' + u'/r - k^2 u / r^2   on both phases,
//   u(1) = (k^2 - 1) f_k,   lambda f_k = [u']^+_-,   u'(R_Omega) = 0.
// The pencil (A, B) has 2 Nr + 1 unknowns (inner nodes, outer nodes, f_k) and
// B vanishes on the two Dirichlet rows, which carry infinite eigenvalues.

#include <algorithm>
#include <complex>
#include <exception>
#include <limits>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>

#include "stefan/sphere_geometry.hpp"

namespace stefan {

struct ModeOperator {
  int k = 0;
  double R_omega = 0.0;
  int Nr = 0;
  Vec r_in, r_out;  // inner nodes (i + 1/2) h ending at 1; outer nodes 1 + i h ending at R
  Mat A, B;

  int size() const { return 2 * Nr + 1; }
  int f_index() const { return 2 * Nr; }
};

struct SpectrumResult {
  int k = 0;
  std::vector<double> eigenvalues;  // finite eigenvalues, real parts, descending
  double leading = 0.0;             // largest eigenvalue outside the null space
  Vec leading_vector;               // (inner profile, outer profile, f_k)
  double residual = 0.0;            // |A v - lambda B v| / |v| for the leading pair
  double max_imag = 0.0;
  bool has_null = false;            // k <= 1: one exact kernel direction removed
};

inline ModeOperator assemble_mode_operator(int k, double R_omega, int Nr) {
  if (k < 0) throw Error(ErrorKind::ConfigError, "mode must be non-negative");
  if (Nr < 16) throw Error(ErrorKind::ConfigError, "Nr must be at least 16");
  if (!(R_omega > 1.0)) throw Error(ErrorKind::ConfigError, "R_Omega must exceed 1");
  ModeOperator op;
  op.k = k;
  op.R_omega = R_omega;
  op.Nr = Nr;
  const int n = op.size(), fi = op.f_index();
  const double hi = 1.0 / (Nr - 0.5), ho = (R_omega - 1.0) / (Nr - 1);
  op.r_in.resize(Nr);
  op.r_out.resize(Nr);
  for (int i = 0; i < Nr; ++i) {
    op.r_in(i) = (i + 0.5) * hi;
    op.r_out(i) = 1.0 + i * ho;
  }
  op.A = Mat::Zero(n, n);
  op.B = Mat::Zero(n, n);
  const double k2 = double(k) * k, parity = (k % 2 == 0) ? 1.0 : -1.0;

  // Radial operator row; lo and hi_col are the neighbour columns, lo_scale
  // folds in the parity of a reflected ghost.
  auto radial_row = [&](int row, int lo, int hi_col, double r, double h, double lo_scale) {
    const double a = 1.0 / (h * h), c = 1.0 / (2.0 * h * r);
    op.A(row, row) += -2.0 * a - k2 / (r * r);
    op.A(row, hi_col) += a + c;
    op.A(row, lo) += lo_scale * (a - c);
    op.B(row, row) = 1.0;
  };
  // Inner phase: the ghost at -h/2 is the node at h/2 rotated by pi.
  for (int i = 0; i < Nr - 1; ++i) {
    if (i == 0)
      radial_row(0, 0, 1, op.r_in(0), hi, parity);
    else
      radial_row(i, i - 1, i + 1, op.r_in(i), hi, 1.0);
  }
  // Outer phase: the ghost beyond the wall mirrors node Nr - 2.
  for (int i = 1; i < Nr; ++i) {
    const int row = Nr + i;
    if (i == Nr - 1)
      radial_row(row, row - 1, row - 1, op.r_out(i), ho, 1.0);
    else
      radial_row(row, row - 1, row + 1, op.r_out(i), ho, 1.0);
  }
  // Dirichlet coupling on both sides of S.
  for (int row : {Nr - 1, Nr}) {
    op.A(row, row) = 1.0;
    op.A(row, fi) = -(k2 - 1.0);
  }
  // lambda f = u'^+(1) - u'^-(1), one-sided second order.
  op.A(fi, Nr) += -3.0 / (2.0 * ho);
  op.A(fi, Nr + 1) += 4.0 / (2.0 * ho);
  op.A(fi, Nr + 2) += -1.0 / (2.0 * ho);
  op.A(fi, Nr - 1) += -3.0 / (2.0 * hi);
  op.A(fi, Nr - 2) += 4.0 / (2.0 * hi);
  op.A(fi, Nr - 3) += -1.0 / (2.0 * hi);
  op.B(fi, fi) = 1.0;
  return op;
}

inline SpectrumResult spectrum(const ModeOperator& op) {
  Eigen::GeneralizedEigenSolver<Mat> ges(op.A, op.B, true);
  if (ges.info() != Eigen::Success) throw Error(ErrorKind::EigenFailed, "generalized eigensolver did not converge");
  const auto alphas = ges.alphas();
  const Vec betas = ges.betas();
  const double scale = op.A.cwiseAbs().maxCoeff();
  struct Pair {
    double re, im;
    int idx;
  };
  std::vector<Pair> finite;
  for (int i = 0; i < betas.size(); ++i) {
    if (std::abs(betas(i)) <= 1e-12 * std::abs(alphas(i)) || std::abs(betas(i)) < 1e-300) continue;
    const std::complex<double> l = alphas(i) / betas(i);
    if (!std::isfinite(l.real()) || std::abs(l) > 1e6 * scale) continue;
    finite.push_back({l.real(), l.imag(), i});
  }
  if (finite.empty()) throw Error(ErrorKind::EigenFailed, "no finite eigenvalues");
  // Ties broken by index so the ordering is deterministic.
  std::sort(finite.begin(), finite.end(), [](const Pair& a, const Pair& b) {
    return a.re != b.re ? a.re > b.re : a.idx < b.idx;
  });

  SpectrumResult res;
  res.k = op.k;
  for (const Pair& p : finite) {
    res.eigenvalues.push_back(p.re);
    res.max_imag = std::max(res.max_imag, std::abs(p.im));
  }
  // The kernel directions (u, f) = (1, -1) for k = 0 and (0, 1) for k = 1 are
  // exact for the discrete operator; drop the eigenvalue nearest zero.
  size_t lead = 0;
  if (op.k <= 1) {
    res.has_null = true;
    size_t null_pos = 0;
    for (size_t i = 1; i < finite.size(); ++i)
      if (std::abs(finite[i].re) < std::abs(finite[null_pos].re)) null_pos = i;
    lead = null_pos == 0 ? 1 : 0;
    if (lead >= finite.size()) throw Error(ErrorKind::EigenFailed, "only the null eigenvalue is finite");
  }
  res.leading = finite[lead].re;

  const Eigen::VectorXcd vc = ges.eigenvectors().col(finite[lead].idx);
  // Rotate to a real vector: divide by the phase of the largest entry.
  Eigen::Index imax = 0;
  vc.cwiseAbs().maxCoeff(&imax);
  const std::complex<double> phase = vc(imax) / std::abs(vc(imax));
  res.leading_vector = (vc / phase).real();
  res.leading_vector /= res.leading_vector.norm();
  const Vec& v = res.leading_vector;
  res.residual = (op.A * v - res.leading * (op.B * v)).norm();
  if (res.max_imag > 1e-10 * std::max(1.0, std::abs(res.eigenvalues.back())))
    throw Error(ErrorKind::EigenFailed, "spectrum is not real", res.max_imag);
  if (!(res.residual <= 1e-8))
    throw Error(ErrorKind::EigenFailed, "leading pair residual too large", res.residual);
  return res;
}

// Residual of the kernel direction for k = 0 or k = 1: |A v| / |v| with
// v = (1, -1) or (0, 1).
inline double kernel_residual(const ModeOperator& op) {
  Vec v = Vec::Zero(op.size());
  if (op.k == 0) {
    v.head(2 * op.Nr).setOnes();
    v(op.f_index()) = -1.0;
  } else if (op.k == 1) {
    v(op.f_index()) = 1.0;
  } else {
    throw Error(ErrorKind::ConfigError, "kernel directions exist only for k = 0 and k = 1");
  }
  return (op.A * v).norm() / v.norm();
}

// Spectra for k = 0..k_max, computed on up to `threads` workers and returned
// ordered by k.
inline std::vector<SpectrumResult> analyze_modes(double R_omega, int Nr, int k_max, int threads = 1) {
  std::vector<SpectrumResult> out(k_max + 1);
  std::vector<std::exception_ptr> errors(k_max + 1);
  auto work = [&](int k) {
    try {
      out[k] = spectrum(assemble_mode_operator(k, R_omega, Nr));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  threads = std::max(1, std::min(threads, k_max + 1));
  if (threads == 1) {
    for (int k = 0; k <= k_max; ++k) work(k);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int k = t; k <= k_max; k += threads) work(k);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// Largest eigenvalue outside the null space over all analyzed modes.
inline double largest_nonnull(const std::vector<SpectrumResult>& modes) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& m : modes) best = std::max(best, m.leading);
  return best;
}

// max_i |(Lap_g + (n - 1)) s_i|_inf for the first harmonics at degree K.
inline double nullspace_residual(int K) {
  if (K < 1) throw Error(ErrorKind::ConfigError, "K must be at least 1");
  return nullspace_residual(*make_basis(K));
}

}  // namespace stefan
