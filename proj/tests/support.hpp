#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include "mipdeco/fem.hpp"
#include "mipdeco/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

namespace mipdeco::testing {

inline std::shared_ptr<const fem::FemSystem> grid_system(double h, int m,
                                                         fem::PdeKind kind = fem::PdeKind::Poisson) {
  return std::make_shared<const fem::FemSystem>(
      fem::assemble_poisson(fem::build_mesh(h), fem::make_source_grid(m), kind));
}

/// y_d from `count` Gaussians at uniform random centres in [0.1, 0.9]^2.
inline Vector random_desired_state(const fem::FemSystem& sys, int count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(0.1, 0.9);
  std::vector<fem::Point> centers;
  for (int i = 0; i < count; ++i) centers.push_back({c(rng), c(rng)});
  const fem::FemSystem shifted = fem::assemble_poisson(sys.mesh, centers, sys.source_height,
                                                       sys.source_width, sys.adjacency_radius, sys.kind);
  return fem::solve_state(shifted, Vector::Ones(count));
}

/// Binary control with the given support.
inline Vector indicator(int l, const std::vector<int>& support) {
  Vector u = Vector::Zero(l);
  for (int i : support) u(i) = 1.0;
  return u;
}

/// All binary controls with at most S ones (l <= 20).
inline std::vector<Vector> enumerate_w(int l, int S) {
  std::vector<Vector> out;
  for (unsigned mask = 0; mask < (1u << l); ++mask) {
    if (std::popcount(mask) > S) continue;
    Vector z = Vector::Zero(l);
    for (int i = 0; i < l; ++i)
      if (mask & (1u << i)) z(i) = 1.0;
    out.push_back(z);
  }
  return out;
}

/// Euclidean projection onto {0 <= u <= 1, 1^T u <= S}: u = clip(v - tau),
/// tau >= 0 found by bisection.
inline Vector project_box_knapsack(const Vector& v, double S) {
  const auto clip = [&](double tau) { return Vector((v.array() - tau).max(0.0).min(1.0)); };
  Vector u = clip(0.0);
  if (u.sum() <= S) return u;
  double lo = 0.0, hi = v.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (clip(mid).sum() > S ? lo : hi) = mid;
  }
  return clip(hi);
}

struct ReducedQp {
  Matrix hessian;  // G^T M G - (2/eps) I
  Vector linear;   // -G^T M y_d + (1/eps) 1
  double constant = 0.0;
  Matrix control_to_state;  // G = K^{-1} M Phi

  double value(const Vector& u) const { return 0.5 * u.dot(hessian * u) + linear.dot(u) + constant; }
};

/// Reduced form of the penalized relaxation for a linear PDE, built with
/// dense linear algebra independent of the library's factorizations.
inline ReducedQp reduce(const MipdecoProblem& p, double eps) {
  const auto& sys = *p.system;
  const Matrix m(*sys.mass);
  const Matrix k(*sys.stiffness);
  ReducedQp qp;
  qp.control_to_state = k.partialPivLu().solve(sys.mass_sources);
  const Matrix& g = qp.control_to_state;
  const double w = std::isinf(eps) ? 0.0 : 1.0 / eps;
  const int l = p.control_dim();
  qp.hessian = g.transpose() * m * g - 2.0 * w * Matrix::Identity(l, l);
  qp.linear = -g.transpose() * (m * p.desired_state) + Vector::Constant(l, w);
  qp.constant = 0.5 * p.desired_state.dot(m * p.desired_state);
  return qp;
}

/// Accelerated projected gradient (FISTA with restart) on the reduced QP.
inline Vector projected_gradient(const ReducedQp& qp, double S, int iterations = 20000) {
  const int l = static_cast<int>(qp.linear.size());
  const double L = Eigen::SelfAdjointEigenSolver<Matrix>(qp.hessian).eigenvalues().cwiseAbs().maxCoeff();
  Vector x = project_box_knapsack(Vector::Constant(l, 0.5), S);
  Vector yk = x;
  double t = 1.0;
  double fx = qp.value(x);
  for (int it = 0; it < iterations; ++it) {
    const Vector next = project_box_knapsack(yk - (qp.hessian * yk + qp.linear) / L, S);
    const double fn = qp.value(next);
    if (fn > fx) {  // restart momentum
      t = 1.0;
      yk = x;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    yk = next + ((t - 1.0) / tn) * (next - x);
    if ((next - x).norm() < 1e-15) {
      x = next;
      break;
    }
    x = next;
    fx = fn;
    t = tn;
  }
  return x;
}

}  // namespace mipdeco::testing
