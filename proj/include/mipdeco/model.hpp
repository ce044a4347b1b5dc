#pragma once

#include "mipdeco/fem.hpp"

#include <memory>
#include <stdexcept>

namespace mipdeco {

using linalg::Matrix;
using linalg::Vector;

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// min 1/2 (y - y_d)^T M (y - y_d)  s.t.  y = f(u), u in {0,1}^l, 1^T u <= S.
struct MipdecoProblem {
  std::shared_ptr<const fem::FemSystem> system;
  Vector desired_state;
  int budget = 1;  // S

  MipdecoProblem() = default;
  MipdecoProblem(std::shared_ptr<const fem::FemSystem> sys, Vector y_d, int S);

  int state_dim() const { return system->state_dim(); }
  int control_dim() const { return system->control_dim(); }
};

/// Stacked state/control pair x = (y, u).
struct IterateX {
  Vector y;
  Vector u;
};

inline constexpr double kStateTolerance = 1e-8;

/// x in X: 0 <= u <= 1, 1^T u <= S and relative PDE residual <= 1e-8.
bool in_relaxed_set(const MipdecoProblem& problem, const IterateX& x, double bound_tol = 1e-12);
/// x in W: additionally u in {0,1}^l exactly.
bool in_binary_set(const MipdecoProblem& problem, const IterateX& x);

/// 1/2 (y - y_d)^T M (y - y_d).
double objective_raw(const MipdecoProblem& problem, const IterateX& x);

/// objective_raw(x) + (1/eps) sum u_i (1 - u_i).
double objective_penalized(const MipdecoProblem& problem, double eps, const IterateX& x);

/// Sets the S largest entries to their nearest integer (0.5 rounds up) and
/// the rest to zero. Ties among equal entries keep the lower index.
Vector smart_round(const Vector& u, int S);

/// ||u - smart_round(u, S)||_inf.
double feasibility_gap(const Vector& u, int S);

/// Pairs a binary control with its exact state, giving a point of W.
IterateX lift_control(const MipdecoProblem& problem, const Vector& binary_u);

/// [x]_SR = (f([u]_SR), [u]_SR).
IterateX smart_round_lift(const MipdecoProblem& problem, const IterateX& x);

/// Boxes B(z) = {||y||_inf <= beta, ||u - z_u||_inf <= rho} around points of W.
struct ChebyshevBoxes {
  double rho = 0.4;
  double beta = 0.0;
};

/// beta = S * max_i ||f(e_i)||_inf, a superposition bound on ||f(z_u)||_inf over W.
ChebyshevBoxes make_chebyshev_boxes(const MipdecoProblem& problem, double rho = 0.4);

/// Chebyshev distance from x to B(z), by clamping each coordinate to the box.
double chebyshev_box_distance(const IterateX& x, const Vector& z_u, const ChebyshevBoxes& boxes);

}  // namespace mipdeco
