#pragma once

// Small dense/iterative helpers: a factored tridiagonal solve and restarted
// right-preconditioned GMRES.

#include <functional>
#include <vector>

#include "stefan/common.hpp"

namespace stefan {

// Tridiagonal system lower(i) x(i-1) + diag(i) x(i) + upper(i) x(i+1) = r(i),
// factored once (Thomas) and solved many times.
class Tridiagonal {
 public:
  Tridiagonal() = default;
  Tridiagonal(Vec lower, Vec diag, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    const int n = int(diag.size());
    cprime_.resize(n);
    denom_.resize(n);
    double prev = 0.0;
    for (int i = 0; i < n; ++i) {
      const double den = diag(i) - (i > 0 ? lower_(i) * prev : 0.0);
      if (den == 0.0) throw Error(ErrorKind::SolverFailed, "singular tridiagonal system");
      denom_(i) = den;
      prev = (i + 1 < n) ? upper_(i) / den : 0.0;
      cprime_(i) = prev;
    }
  }

  int size() const { return int(denom_.size()); }

  // In-place solve on a strided view (one modal column of a ring-major block).
  template <class V>
  void solve(V&& x) const {
    const int n = size();
    x(0) /= denom_(0);
    for (int i = 1; i < n; ++i) x(i) = (x(i) - lower_(i) * x(i - 1)) / denom_(i);
    for (int i = n - 2; i >= 0; --i) x(i) -= cprime_(i) * x(i + 1);
  }

 private:
  Vec lower_, upper_, cprime_, denom_;
};

struct GmresResult {
  int iterations = 0;
  double residual = 0.0;  // final true residual norm
  bool converged = false;
};

// Solves A x = b with right preconditioner P (x = P^{-1} y). x holds the
// initial guess on entry.
inline GmresResult gmres(const std::function<Vec(const Vec&)>& A, const std::function<Vec(const Vec&)>& Pinv,
                         const Vec& b, Vec& x, double rtol, double atol, int restart, int max_iter) {
  GmresResult out;
  const double bnorm = b.norm();
  const double target = std::max(rtol * bnorm, atol);
  Vec r = b - A(x);
  double beta = r.norm();
  out.residual = beta;
  if (beta <= target) {
    out.converged = true;
    return out;
  }
  const int n = int(b.size());
  while (out.iterations < max_iter) {
    Mat V(n, restart + 1);
    Mat H = Mat::Zero(restart + 1, restart);
    Vec cs = Vec::Zero(restart), sn = Vec::Zero(restart), g = Vec::Zero(restart + 1);
    std::vector<Vec> Z;
    V.col(0) = r / beta;
    g(0) = beta;
    int j = 0;
    for (; j < restart && out.iterations < max_iter; ++j, ++out.iterations) {
      Z.push_back(Pinv(V.col(j)));
      Vec w = A(Z.back());
      // Modified Gram-Schmidt with one reorthogonalisation pass.
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= j; ++i) {
          const double hij = V.col(i).dot(w);
          H(i, j) += hij;
          w -= hij * V.col(i);
        }
      }
      H(j + 1, j) = w.norm();
      if (H(j + 1, j) > 0.0) V.col(j + 1) = w / H(j + 1, j);
      for (int i = 0; i < j; ++i) {
        const double t = cs(i) * H(i, j) + sn(i) * H(i + 1, j);
        H(i + 1, j) = -sn(i) * H(i, j) + cs(i) * H(i + 1, j);
        H(i, j) = t;
      }
      const double den = std::hypot(H(j, j), H(j + 1, j));
      cs(j) = den > 0.0 ? H(j, j) / den : 1.0;
      sn(j) = den > 0.0 ? H(j + 1, j) / den : 0.0;
      H(j, j) = den;
      H(j + 1, j) = 0.0;
      g(j + 1) = -sn(j) * g(j);
      g(j) = cs(j) * g(j);
      if (std::abs(g(j + 1)) <= target || H(j, j) == 0.0) {
        ++j;
        ++out.iterations;
        break;
      }
    }
    // Back substitution and update.
    Vec y = Vec::Zero(j);
    for (int i = j - 1; i >= 0; --i) {
      double acc = g(i);
      for (int k = i + 1; k < j; ++k) acc -= H(i, k) * y(k);
      y(i) = H(i, i) != 0.0 ? acc / H(i, i) : 0.0;
    }
    for (int i = 0; i < j; ++i) x += y(i) * Z[i];
    r = b - A(x);
    beta = r.norm();
    out.residual = beta;
    if (beta <= target) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

}  // namespace stefan
