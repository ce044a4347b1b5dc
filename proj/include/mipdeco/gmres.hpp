#pragma once

#include "mipdeco/linalg.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mipdeco::linalg {

struct GmresOptions {
  double rel_tol = 1e-6;
  int max_iters = 400;
};

struct GmresResult {
  Vector solution;
  int iterations = 0;
  /// Unpreconditioned relative residual ||b - A x|| / ||b|| of the returned x.
  double relative_residual = 0.0;
  bool converged = false;
  bool breakdown = false;
  /// Unpreconditioned relative residual after each iteration (index 0 = start).
  std::vector<double> residual_history;
};

/// Identity preconditioner.
struct NoPreconditioner {
  Vector operator()(const Vector& v) const { return v; }
};

/// Full (non-restarted) right-preconditioned GMRES.
///
/// Solves A P^{-1} w = b and returns x = P^{-1} w, so the Arnoldi residual
/// is the unpreconditioned residual and the stopping test is
/// ||b - A x|| <= rel_tol ||b||. `op(v)` returns A v, `prec(v)` returns P^{-1} v.
template <class Operator, class Preconditioner>
GmresResult gmres(const Operator& op, const Vector& rhs, const Preconditioner& prec,
                  const GmresOptions& options) {
  if (!(options.rel_tol > 0.0 && options.rel_tol < 1.0)) {
    throw std::invalid_argument("gmres: rel_tol must lie in (0, 1)");
  }
  const Eigen::Index n = rhs.size();
  GmresResult result;
  result.solution = Vector::Zero(n);

  const double beta = rhs.norm();
  if (beta == 0.0) {
    result.converged = true;
    result.residual_history.push_back(0.0);
    return result;
  }
  result.residual_history.push_back(1.0);

  const int max_iters = std::max(1, std::min<int>(options.max_iters, static_cast<int>(n)));
  Matrix basis(n, max_iters + 1);
  Matrix hessenberg = Matrix::Zero(max_iters + 1, max_iters);
  Vector cs = Vector::Zero(max_iters);
  Vector sn = Vector::Zero(max_iters);
  Vector g = Vector::Zero(max_iters + 1);
  g(0) = beta;
  basis.col(0) = rhs / beta;

  int k = 0;
  for (; k < max_iters; ++k) {
    Vector w = op(prec(Vector(basis.col(k))));
    // modified Gram-Schmidt, two passes for stability near convergence
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= k; ++i) {
        const double hik = basis.col(i).dot(w);
        hessenberg(i, k) += hik;
        w -= hik * basis.col(i);
      }
    }
    const double h_next = w.norm();
    hessenberg(k + 1, k) = h_next;

    for (int i = 0; i < k; ++i) {
      const double t = cs(i) * hessenberg(i, k) + sn(i) * hessenberg(i + 1, k);
      hessenberg(i + 1, k) = -sn(i) * hessenberg(i, k) + cs(i) * hessenberg(i + 1, k);
      hessenberg(i, k) = t;
    }
    const double denom = std::hypot(hessenberg(k, k), hessenberg(k + 1, k));
    if (denom == 0.0) {
      result.breakdown = true;
      break;
    }
    cs(k) = hessenberg(k, k) / denom;
    sn(k) = hessenberg(k + 1, k) / denom;
    hessenberg(k, k) = denom;
    hessenberg(k + 1, k) = 0.0;
    g(k + 1) = -sn(k) * g(k);
    g(k) = cs(k) * g(k);

    const double rel = std::abs(g(k + 1)) / beta;
    result.residual_history.push_back(rel);
    const bool happy = h_next <= 1e-14 * beta;
    if (rel <= options.rel_tol || happy) {
      ++k;
      break;
    }
    basis.col(k + 1) = w / h_next;
  }

  if (k > 0) {
    const Vector coeffs =
        hessenberg.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    result.solution = prec(Vector(basis.leftCols(k) * coeffs));
  }
  result.iterations = k;
  result.relative_residual = (rhs - op(result.solution)).norm() / beta;
  // The recomputed residual may sit marginally above the Arnoldi estimate
  // because of rounding; accept within a small factor of the target.
  result.converged = result.residual_history.back() <= options.rel_tol &&
                     result.relative_residual <= 10.0 * options.rel_tol;
  if (!result.converged && result.residual_history.back() > options.rel_tol && k < max_iters &&
      !result.breakdown) {
    result.breakdown = true;
  }
  return result;
}

template <class Operator>
GmresResult gmres(const Operator& op, const Vector& rhs, const GmresOptions& options) {
  return gmres(op, rhs, NoPreconditioner{}, options);
}

}  // namespace mipdeco::linalg
