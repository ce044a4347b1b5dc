#include "mipdeco/ipm.hpp"

#include "mipdeco/gmres.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mipdeco::ipm {

namespace {

double penalty_weight(double eps) { return std::isinf(eps) ? 0.0 : 1.0 / eps; }

struct PdeTerms {
  Vector residual;                                    // F(y, u)
  std::shared_ptr<const linalg::SparseMatrix> jacobian;  // F'_y
};

PdeTerms pde_terms(const MipdecoProblem& problem, const Vector& y, const Vector& u) {
  const auto& sys = *problem.system;
  if (sys.kind == fem::PdeKind::NonlinearPoisson) {
    auto eval = fem::nonlinear_residual_and_jacobian(sys, y, u);
    return {std::move(eval.residual),
            std::make_shared<const linalg::SparseMatrix>(std::move(eval.state_jacobian))};
  }
  return {(*sys.stiffness) * y - sys.mass_sources * u, sys.stiffness};
}

double primal_residual_norm(const MipdecoProblem& problem, const Vector& y, const Vector& u,
                            double z) {
  const Vector f = pde_terms(problem, y, u).residual;
  const double knapsack = u.sum() + z - problem.budget;
  return std::sqrt(f.squaredNorm() + knapsack * knapsack);
}

// Largest alpha in (0, 1] with value + alpha * step >= 0 componentwise (strict via fraction).
double max_step_to_zero(const Vector& value, const Vector& step) {
  double alpha = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    if (step(i) < 0.0) alpha = std::min(alpha, -value(i) / step(i));
  }
  return alpha;
}

double max_step_to_zero(double value, double step) {
  return step < 0.0 ? -value / step : std::numeric_limits<double>::infinity();
}

void require_interior(const IpmState& state) {
  if (!state.strictly_interior()) {
    throw std::logic_error("interior-point iterate left the strict interior");
  }
}

}  // namespace

double gmres_tolerance(const IpmConfig& config, double mu) {
  return std::max(std::min(config.eta_max, mu), config.eta_min);
}

bool IpmState::strictly_interior() const {
  return (u.array() > 0.0).all() && (u.array() < 1.0).all() && z > 0.0 &&
         (lambda_lower.array() > 0.0).all() && (lambda_upper.array() > 0.0).all() &&
         lambda_slack > 0.0 && mu > 0.0;
}

IpmState initial_state(const MipdecoProblem& problem, const IterateX& x_init, double mu) {
  if (x_init.u.size() != problem.control_dim()) throw ModelError("initial control has wrong size");
  IpmState state;
  state.mu = mu;
  state.u = x_init.u.cwiseMax(0.01).cwiseMin(0.99);
  state.y = fem::solve_state(*problem.system, state.u);
  state.z = std::max(problem.budget - state.u.sum(), 0.1);
  state.p = Vector::Zero(problem.state_dim());
  state.q = 0.0;
  state.lambda_lower = mu * state.u.cwiseInverse();
  state.lambda_upper = mu * (1.0 - state.u.array()).inverse().matrix();
  state.lambda_slack = mu / state.z;
  return state;
}

double Residuals::max_norm() const {
  return std::max({primal.norm(), dual.norm(), complementarity.norm()});
}

Residuals compute_residuals(const MipdecoProblem& problem, const IpmState& state, double eps) {
  const auto& sys = *problem.system;
  const Eigen::Index n = problem.state_dim();
  const Eigen::Index l = problem.control_dim();
  const double w = penalty_weight(eps);
  const PdeTerms pde = pde_terms(problem, state.y, state.u);

  Residuals r;
  r.primal.resize(n + 1);
  r.primal.head(n) = pde.residual;
  r.primal(n) = state.u.sum() + state.z - problem.budget;

  r.dual.resize(n + l + 1);
  r.dual.head(n) = (*sys.mass) * (state.y - problem.desired_state) + pde.jacobian->transpose() * state.p;
  r.dual.segment(n, l) = w * (1.0 - 2.0 * state.u.array()).matrix() -
                         sys.mass_sources.transpose() * state.p - state.lambda_lower +
                         state.lambda_upper;
  r.dual.segment(n, l).array() += state.q;
  r.dual(n + l) = state.q - state.lambda_slack;

  r.complementarity.resize(2 * l + 1);
  r.complementarity.head(l) = (state.u.array() * state.lambda_lower.array() - state.mu).matrix();
  r.complementarity.segment(l, l) =
      ((1.0 - state.u.array()) * state.lambda_upper.array() - state.mu).matrix();
  r.complementarity(2 * l) = state.z * state.lambda_slack - state.mu;
  return r;
}

linalg::SaddleSystem assemble_newton_system(const IpmState& state, const MipdecoProblem& problem,
                                            double eps, double gamma) {
  require_interior(state);
  const auto& sys = *problem.system;
  const Eigen::Index n = problem.state_dim();
  const Eigen::Index l = problem.control_dim();
  const double w = penalty_weight(eps);
  const double mu = state.mu;
  const PdeTerms pde = pde_terms(problem, state.y, state.u);

  const auto u = state.u.array();
  const Eigen::ArrayXd theta_u =
      state.lambda_lower.array() / u + state.lambda_upper.array() / (1.0 - u);

  linalg::SaddleSystem out;
  out.mass = sys.mass;
  out.state_jacobian = pde.jacobian;
  out.control_jacobian = -sys.mass_sources;
  out.control_diagonal = (theta_u - 2.0 * w).max(gamma).matrix();
  out.slack_diagonal = state.lambda_slack / state.z;

  out.rhs.resize(2 * n + l + 2);
  out.rhs.head(n) = -((*sys.mass) * (state.y - problem.desired_state) +
                      pde.jacobian->transpose() * state.p);
  const Eigen::ArrayXd stationarity_u =
      w * (1.0 - 2.0 * u) - (sys.mass_sources.transpose() * state.p).array() + state.q -
      mu / u + mu / (1.0 - u);
  out.rhs.segment(n, l) = -stationarity_u.matrix();
  out.rhs(n + l) = -(state.q - mu / state.z);
  out.rhs.segment(n + l + 1, n) = -pde.residual;
  out.rhs(2 * n + l + 1) = -(state.u.sum() + state.z - problem.budget);
  return out;
}

MultiplierSteps multiplier_steps(const IpmState& state, const Vector& du, double dz, double mu) {
  const auto u = state.u.array();
  const auto l0 = state.lambda_lower.array();
  const auto l1 = state.lambda_upper.array();
  MultiplierSteps out;
  out.lower = (-(l0 / u) * du.array() - l0 + mu / u).matrix();
  out.upper = ((l1 / (1.0 - u)) * du.array() - l1 + mu / (1.0 - u)).matrix();
  out.slack = -(state.lambda_slack / state.z) * dz - state.lambda_slack + mu / state.z;
  return out;
}

StepLengths step_lengths(const IpmState& state, const Direction& direction, double fraction) {
  double primal = max_step_to_zero(state.u, direction.du);
  primal = std::min(primal, max_step_to_zero(Vector(1.0 - state.u.array()), Vector(-direction.du)));
  primal = std::min(primal, max_step_to_zero(state.z, direction.dz));

  double dual = max_step_to_zero(state.lambda_lower, direction.multipliers.lower);
  dual = std::min(dual, max_step_to_zero(state.lambda_upper, direction.multipliers.upper));
  dual = std::min(dual, max_step_to_zero(state.lambda_slack, direction.multipliers.slack));

  StepLengths out;
  out.primal = std::min(1.0, fraction * primal);
  out.dual = std::min(1.0, fraction * dual);
  return out;
}

double IpmTrace::average_gmres() const {
  if (gmres_iterations.empty()) return 0.0;
  return std::accumulate(gmres_iterations.begin(), gmres_iterations.end(), 0.0) /
         static_cast<double>(gmres_iterations.size());
}

IpmResult ipm_solve(const MipdecoProblem& problem, double eps, const IterateX& x_init,
                    const IpmConfig& config) {
  if (!(eps > 0.0)) throw ModelError("penalty parameter must be positive");
  const auto& sys = *problem.system;
  const Eigen::Index n = problem.state_dim();
  const Eigen::Index l = problem.control_dim();
  const double eps_eff = config.penalty_enabled ? eps : std::numeric_limits<double>::infinity();
  const bool nonlinear = sys.kind == fem::PdeKind::NonlinearPoisson;

  IpmTrace trace;
  trace.eps = eps;
  IpmState state = initial_state(problem, x_init, config.mu_initial);

  for (int it = 0; it < config.max_iterations; ++it) {
    const double mu = state.mu;
    const linalg::SaddleSystem newton = assemble_newton_system(state, problem, eps_eff, config.gamma);
    const linalg::Factorization state_factor =
        nonlinear ? linalg::factorize(*newton.state_jacobian, linalg::FactorKind::General)
                  : *sys.stiffness_factor;
    const auto prec = linalg::make_saddle_preconditioner(newton, *sys.mass_factor, state_factor);
    const auto solve = linalg::gmres([&](const Vector& v) { return newton.apply(v); }, newton.rhs,
                                     prec,
                                     {gmres_tolerance(config, mu), config.gmres_max_iters});
    trace.gmres_iterations.push_back(solve.iterations);
    if (!solve.converged && !(solve.relative_residual < 0.5)) {
      trace.linear_solver_failure = true;
      break;
    }

    Direction dir;
    dir.dy = solve.solution.head(n);
    dir.du = solve.solution.segment(n, l);
    dir.dz = solve.solution(n + l);
    dir.dp = solve.solution.segment(n + l + 1, n);
    dir.dq = solve.solution(2 * n + l + 1);
    dir.multipliers = multiplier_steps(state, dir.du, dir.dz, mu);
    StepLengths alpha = step_lengths(state, dir, config.step_fraction);

    if (nonlinear) {
      const double current = primal_residual_norm(problem, state.y, state.u, state.z);
      for (int k = 0; k < config.max_backtracks; ++k) {
        const double trial = primal_residual_norm(problem, state.y + alpha.primal * dir.dy,
                                                  state.u + alpha.primal * dir.du,
                                                  state.z + alpha.primal * dir.dz);
        if (trial <= (1.0 - 1e-4 * alpha.primal) * current || current < 1e-14) break;
        alpha.primal *= 0.5;
      }
    }

    state.y += alpha.primal * dir.dy;
    state.u += alpha.primal * dir.du;
    state.z += alpha.primal * dir.dz;
    state.p += alpha.dual * dir.dp;
    state.q += alpha.dual * dir.dq;
    state.lambda_lower += alpha.dual * dir.multipliers.lower;
    state.lambda_upper += alpha.dual * dir.multipliers.upper;
    state.lambda_slack += alpha.dual * dir.multipliers.slack;
    require_interior(state);
    trace.iterations = it + 1;

    trace.final_residuals = compute_residuals(problem, state, eps_eff);
    const double kkt = trace.final_residuals.max_norm();
    trace.kkt_history.push_back(kkt);
    trace.final_mu = mu;
    if (kkt <= config.tol_kkt && mu <= config.tol_kkt) {
      trace.converged = true;
      break;
    }
    if (mu <= config.mu_min * (1.0 + 1e-6)) break;
    state.mu = std::max(mu * config.mu_factor, config.mu_min);
    if (it + 1 == config.max_iterations) trace.max_iterations_reached = true;
  }

  IterateX x;
  x.u = state.u.cwiseMax(0.0).cwiseMin(1.0);
  const double total = x.u.sum();
  if (total > problem.budget) x.u *= problem.budget / total;
  x.y = fem::solve_state(sys, x.u);
  return {std::move(x), std::move(trace)};
}

}  // namespace mipdeco::ipm
