#pragma once

#include "mipdeco/linalg.hpp"
#include "mipdeco/model.hpp"

#include <vector>

namespace mipdeco::ipm {

struct IpmConfig {
  double tol_kkt = 1e-6;
  double mu_min = 1e-15;        // safeguard
  double mu_factor = 0.1;
  double mu_initial = 1.0;
  double gamma = 1e-6;          // convexification floor for D_u
  double eta_max = 1e-1;
  double eta_min = 1e-10;
  double step_fraction = 0.995; // fraction to the boundary
  int max_iterations = 60;
  int gmres_max_iters = 400;
  int max_backtracks = 10;      // nonlinear PDE only
  /// Test hook: solve the unpenalized relaxation (Pcont) instead of (Ppen).
  bool penalty_enabled = true;
};

/// eta = max{min{eta_max, mu}, eta_min}.
double gmres_tolerance(const IpmConfig& config, double mu);

struct IpmState {
  Vector y;
  Vector u;
  double z = 1.0;
  Vector p;
  double q = 0.0;
  Vector lambda_lower;  // lambda_{u,0}
  Vector lambda_upper;  // lambda_{u,1}
  double lambda_slack = 1.0;
  double mu = 1.0;

  bool strictly_interior() const;
};

/// Strictly interior start: u = clamp(u_init, 0.01, 0.99), y = f(u),
/// z = max(S - 1^T u, 0.1), p = 0, q = 0 and multipliers on the central
/// path for mu.
IpmState initial_state(const MipdecoProblem& problem, const IterateX& x_init, double mu);

struct Residuals {
  Vector primal;            // (F(y,u), 1^T u + z - S)
  Vector dual;              // three stationarity blocks
  Vector complementarity;   // (U l0 - mu, (I-U) l1 - mu, z lz - mu)

  double max_norm() const;
};

/// Residuals at `state` for penalty parameter eps (eps = +inf drops the penalty).
Residuals compute_residuals(const MipdecoProblem& problem, const IpmState& state, double eps);

/// Newton system for target barrier state.mu. Builds Theta_u, theta_z and
/// D_u = -(2/eps) I + Theta_u with every entry below gamma raised to gamma.
/// The right-hand side has the multipliers eliminated through their
/// perturbed-complementarity steps, so it equals the negated KKT residual
/// whenever the multipliers sit on the central path. For the nonlinear
/// kind, F'_y and F'_u replace K and -M Phi.
linalg::SaddleSystem assemble_newton_system(const IpmState& state, const MipdecoProblem& problem,
                                            double eps, double gamma);

struct MultiplierSteps {
  Vector lower;
  Vector upper;
  double slack = 0.0;
};

MultiplierSteps multiplier_steps(const IpmState& state, const Vector& du, double dz, double mu);

struct Direction {
  Vector dy;
  Vector du;
  double dz = 0.0;
  Vector dp;
  double dq = 0.0;
  MultiplierSteps multipliers;
};

struct StepLengths {
  double primal = 1.0;
  double dual = 1.0;
};

/// Largest steps in (0, 1] keeping u in (0,1), z > 0 and the multipliers
/// positive, scaled by `fraction`.
StepLengths step_lengths(const IpmState& state, const Direction& direction,
                         double fraction = 0.995);

struct IpmTrace {
  double eps = 0.0;
  int iterations = 0;               // NLI
  std::vector<int> gmres_iterations;  // one entry per outer iteration
  std::vector<double> kkt_history;
  Residuals final_residuals;
  double final_mu = 0.0;
  bool converged = false;
  bool max_iterations_reached = false;
  bool linear_solver_failure = false;

  double average_gmres() const;
};

struct IpmResult {
  IterateX x;
  IpmTrace trace;
};

/// Inexact interior-point solve of the penalized relaxation for one eps.
///
/// One Newton step per barrier value, GMRES with the block-triangular
/// preconditioner, mu reduced by mu_factor every iteration. The returned
/// iterate is projected onto X: the control is clipped to the box and the
/// knapsack, and the state recomputed as f(u).
IpmResult ipm_solve(const MipdecoProblem& problem, double eps, const IterateX& x_init,
                    const IpmConfig& config = {});

}  // namespace mipdeco::ipm
