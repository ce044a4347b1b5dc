#include "mipdeco/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace mipdeco {

MipdecoProblem::MipdecoProblem(std::shared_ptr<const fem::FemSystem> sys, Vector y_d, int S)
    : system(std::move(sys)), desired_state(std::move(y_d)), budget(S) {
  if (!system) throw ModelError("problem needs a FEM system");
  if (desired_state.size() != system->state_dim()) {
    throw ModelError("desired state has the wrong dimension");
  }
  if (!desired_state.allFinite()) throw ModelError("desired state is not finite");
  if (budget < 1 || budget > system->control_dim()) {
    throw ModelError("knapsack bound S must satisfy 1 <= S <= l");
  }
}

bool in_relaxed_set(const MipdecoProblem& problem, const IterateX& x, double bound_tol) {
  if (x.u.size() != problem.control_dim() || x.y.size() != problem.state_dim()) return false;
  if ((x.u.array() < -bound_tol).any() || (x.u.array() > 1.0 + bound_tol).any()) return false;
  if (x.u.sum() > problem.budget + bound_tol) return false;
  return fem::state_residual(*problem.system, x.y, x.u) <= kStateTolerance;
}

bool in_binary_set(const MipdecoProblem& problem, const IterateX& x) {
  for (Eigen::Index i = 0; i < x.u.size(); ++i) {
    if (x.u(i) != 0.0 && x.u(i) != 1.0) return false;
  }
  return in_relaxed_set(problem, x, 0.0);
}

double objective_raw(const MipdecoProblem& problem, const IterateX& x) {
  if (x.y.size() != problem.state_dim()) throw ModelError("state dimension mismatch");
  const Vector diff = x.y - problem.desired_state;
  return 0.5 * diff.dot((*problem.system->mass) * diff);
}

double objective_penalized(const MipdecoProblem& problem, double eps, const IterateX& x) {
  if (!(eps > 0.0)) throw ModelError("penalty parameter must be positive");
  const double penalty = (x.u.array() * (1.0 - x.u.array())).sum();
  return objective_raw(problem, x) + penalty / eps;
}

Vector smart_round(const Vector& u, int S) {
  const Eigen::Index l = u.size();
  std::vector<Eigen::Index> order(static_cast<size_t>(l));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return u(a) > u(b); });
  Vector out = Vector::Zero(l);
  const Eigen::Index keep = std::clamp<Eigen::Index>(S, 0, l);
  for (Eigen::Index k = 0; k < keep; ++k) {
    const Eigen::Index i = order[static_cast<size_t>(k)];
    out(i) = u(i) >= 0.5 ? 1.0 : 0.0;
  }
  return out;
}

double feasibility_gap(const Vector& u, int S) {
  if (u.size() == 0) return 0.0;
  return (u - smart_round(u, S)).cwiseAbs().maxCoeff();
}

IterateX lift_control(const MipdecoProblem& problem, const Vector& binary_u) {
  if (binary_u.size() != problem.control_dim()) throw ModelError("control dimension mismatch");
  return {fem::solve_state(*problem.system, binary_u), binary_u};
}

IterateX smart_round_lift(const MipdecoProblem& problem, const IterateX& x) {
  return lift_control(problem, smart_round(x.u, problem.budget));
}

ChebyshevBoxes make_chebyshev_boxes(const MipdecoProblem& problem, double rho) {
  const auto& sys = *problem.system;
  const Matrix singles = sys.stiffness_factor->solve(sys.mass_sources);
  double max_norm = 0.0;
  for (Eigen::Index i = 0; i < singles.cols(); ++i) {
    max_norm = std::max(max_norm, singles.col(i).cwiseAbs().maxCoeff());
  }
  return {rho, problem.budget * max_norm};
}

double chebyshev_box_distance(const IterateX& x, const Vector& z_u, const ChebyshevBoxes& boxes) {
  if (z_u.size() != x.u.size()) throw ModelError("control dimension mismatch");
  double dist = 0.0;
  if (x.y.size() > 0) {
    dist = std::max(dist, x.y.cwiseAbs().maxCoeff() - boxes.beta);
  }
  if (x.u.size() > 0) {
    dist = std::max(dist, (x.u - z_u).cwiseAbs().maxCoeff() - boxes.rho);
  }
  return dist;
}

}  // namespace mipdeco
