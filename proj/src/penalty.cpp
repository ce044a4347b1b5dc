#include "mipdeco/penalty.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace mipdeco::penalty {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double stacked_distance(const IterateX& a, const IterateX& b) {
  return std::sqrt((a.y - b.y).squaredNorm() + (a.u - b.u).squaredNorm());
}

void finish(SolveReport& report, const MipdecoProblem& problem, const IterateX& x,
            Clock::time_point start) {
  report.solution = smart_round_lift(problem, x);
  report.objective = objective_raw(problem, report.solution);
  report.wall_time_s = seconds_since(start);
}

}  // namespace

void OuterConfig::validate() const {
  if (!(eps0 > 0.0)) throw std::invalid_argument("eps0 must be positive");
  if (!(sigma_ipa > 0.0 && sigma_ipa < 1.0) || !(sigma_penalty > 0.0 && sigma_penalty < 1.0)) {
    throw std::invalid_argument("reduction factors must lie in (0, 1)");
  }
  if (!(eps_feas > 0.0 && eps_feas < 0.5)) throw std::invalid_argument("eps_feas must lie in (0, 1/2)");
  if (p_max < 1) throw std::invalid_argument("p_max must be positive");
  if (theta < 1) throw std::invalid_argument("theta must be positive");
}

IterateX relaxed_start(const MipdecoProblem& problem, const ipm::IpmConfig& config) {
  ipm::IpmConfig relaxed = config;
  relaxed.penalty_enabled = false;
  IterateX start;
  start.u = Vector::Constant(problem.control_dim(),
                             0.5 * problem.budget / static_cast<double>(problem.control_dim()));
  start.y = fem::solve_state(*problem.system, start.u);
  return ipm::ipm_solve(problem, 1.0, start, relaxed).x;
}

bool reduces_penalty_parameter(const MipdecoProblem& problem, const IterateX& x, double eps,
                               double feasibility_tolerance) {
  const double gap = feasibility_gap(x.u, problem.budget);
  const bool outside_w = feasibility_tolerance > 0.0 ? gap > feasibility_tolerance : gap > 0.0;
  if (!outside_w) return false;
  const IterateX rounded = smart_round_lift(problem, x);
  return objective_penalized(problem, eps, x) - objective_penalized(problem, eps, rounded) <=
         eps * stacked_distance(x, rounded);
}

std::vector<int> adjacent_sources(const fem::FemSystem& system, int index) {
  const auto& pos = system.source_positions;
  if (index < 0 || index >= static_cast<int>(pos.size())) {
    throw std::out_of_range("source index out of range");
  }
  std::vector<int> out;
  const fem::Point c = pos[static_cast<size_t>(index)];
  for (int j = 0; j < static_cast<int>(pos.size()); ++j) {
    if (j == index) continue;
    const double dx = pos[static_cast<size_t>(j)].x - c.x;
    const double dy = pos[static_cast<size_t>(j)].y - c.y;
    if (std::hypot(dx, dy) <= system.adjacency_radius) out.push_back(j);
  }
  return out;
}

IterateX perturb(const MipdecoProblem& problem, const IterateX& x, int theta, Rng& rng) {
  Vector u = x.u;
  std::vector<int> large;
  for (int i = 0; i < static_cast<int>(u.size()); ++i) {
    if (u(i) > 0.5) large.push_back(i);
  }
  const int flips = std::min(static_cast<int>(large.size()), theta);
  std::uniform_real_distribution<double> drop(0.1, 0.2);
  for (int k = 0; k < flips && !large.empty(); ++k) {
    std::uniform_int_distribution<size_t> pick(0, large.size() - 1);
    const size_t slot = pick(rng);
    const int i = large[slot];
    large.erase(large.begin() + static_cast<std::ptrdiff_t>(slot));

    const double value = drop(rng);
    const double d = std::abs(u(i) - value);
    u(i) = value;

    const std::vector<int> adj = adjacent_sources(*problem.system, i);
    if (adj.empty()) continue;
    std::uniform_int_distribution<size_t> pick_adj(0, adj.size() - 1);
    const int j = adj[pick_adj(rng)];
    std::uniform_real_distribution<double> raise(d - 0.1, d);
    u(j) = raise(rng);
    // entries pushed to 1/2 or below by an earlier flip are no longer candidates
    std::erase_if(large, [&](int idx) { return u(idx) <= 0.5; });
  }
  return {fem::solve_state(*problem.system, u), std::move(u)};
}

ReductionOutcome reduction_via_perturbation(const MipdecoProblem& problem, const IterateX& x,
                                            double eps, bool eps_decreased,
                                            const OuterConfig& config, Rng& rng,
                                            std::vector<ipm::IpmTrace>* traces) {
  const int S = problem.budget;
  const double j_x = objective_penalized(problem, eps, x);
  const Vector sr_x = smart_round(x.u, S);
  double j_sr_x = std::numeric_limits<double>::quiet_NaN();

  IterateX start = x;
  ReductionOutcome out;
  out.x = x;
  for (int cycle = 1; cycle <= config.p_max; ++cycle) {
    ipm::IpmResult local = ipm::ipm_solve(problem, eps, start, config.ipm);
    if (traces) traces->push_back(local.trace);
    out.local_solves = cycle;
    const IterateX& xl = local.x;
    const double j_loc = objective_penalized(problem, eps, xl);
    const double d_loc = (xl.u - x.u).cwiseAbs().maxCoeff();
    const Vector sr_loc = smart_round(xl.u, S);
    const double d_sr = (sr_loc - sr_x).cwiseAbs().maxCoeff();

    bool accept = false;
    if (eps_decreased) {
      accept = j_loc < j_x || d_loc < 0.2 || d_sr == 0.0;
    } else if (d_sr != 0.0 && j_loc < j_x) {
      if (std::isnan(j_sr_x)) j_sr_x = objective_raw(problem, lift_control(problem, sr_x));
      accept = objective_raw(problem, lift_control(problem, sr_loc)) < j_sr_x;
    }
    if (accept) {
      out.x = local.x;
      out.improved = true;
      return out;
    }

    IterateX next = perturb(problem, xl, config.theta, rng);
    // identical start would repeat the same deterministic local solve
    if (next.u == start.u) break;
    start = std::move(next);
  }
  return out;
}

SolveReport simple_penalty(const MipdecoProblem& problem, const IterateX& x0,
                           const OuterConfig& config) {
  config.validate();
  const auto start = Clock::now();
  SolveReport report;
  report.algorithm = "penalty";
  IterateX x = x0;
  bool done = false;
  for (int n = 0; n < config.max_penalty_reductions; ++n) {
    const double eps = config.eps0 * std::pow(config.sigma_penalty, n);
    ipm::IpmResult local = ipm::ipm_solve(problem, eps, x, config.ipm);
    report.ipm_traces.push_back(local.trace);
    x = std::move(local.x);
    report.eps_trajectory.push_back(eps);
    report.eps_reduced.push_back(true);
    const double gap = feasibility_gap(x.u, problem.budget);
    report.feasibility_gaps.push_back(gap);
    report.outer_iterations = n + 1;
    if (gap < config.eps_feas) {
      report.first_feasible = n;
      done = true;
      break;
    }
  }
  if (!done) {
    report.failed = true;
    report.failure = "penalty parameter cap reached before integer feasibility";
  }
  finish(report, problem, x, start);
  return report;
}

SolveReport simple_penalty(const MipdecoProblem& problem, const OuterConfig& config) {
  return simple_penalty(problem, relaxed_start(problem, config.ipm), config);
}

SolveReport ipa(const MipdecoProblem& problem, const IterateX& x0, const OuterConfig& config) {
  config.validate();
  const auto start = Clock::now();
  SolveReport report;
  report.algorithm = "ipa";
  Rng rng(config.seed);

  IterateX x = x0;
  int reductions = 0;
  bool eps_decreased = true;
  for (int n = 0; n < config.max_outer_iterations; ++n) {
    const double eps = config.eps0 * std::pow(config.sigma_ipa, reductions);
    const size_t before = report.ipm_traces.size();
    ReductionOutcome outcome = reduction_via_perturbation(problem, x, eps, eps_decreased, config,
                                                          rng, &report.ipm_traces);
    const int solves = static_cast<int>(report.ipm_traces.size() - before);
    report.perturbation_cycles += solves - 1;
    if (outcome.improved && solves > 1) ++report.accepted_after_perturbation;

    const bool reduce = reduces_penalty_parameter(problem, outcome.x, eps, config.eps_feas);
    const double gap = feasibility_gap(outcome.x.u, problem.budget);
    report.eps_trajectory.push_back(eps);
    report.eps_reduced.push_back(reduce);
    report.feasibility_gaps.push_back(gap);
    report.outer_iterations = n + 1;
    if (!reduce && report.phase_boundary < 0) report.phase_boundary = n;
    if (gap <= config.eps_feas && report.first_feasible < 0) report.first_feasible = n;

    eps_decreased = reduce;
    if (reduce) ++reductions;
    if (!outcome.improved) break;
    x = std::move(outcome.x);
    if (config.eps0 * std::pow(config.sigma_ipa, reductions) < config.eps_floor) {
      report.failed = true;
      report.failure = "penalty parameter fell below the safety floor";
      break;
    }
    if (n + 1 == config.max_outer_iterations) {
      report.failed = true;
      report.failure = "outer iteration cap reached";
    }
  }
  finish(report, problem, x, start);
  return report;
}

SolveReport ipa(const MipdecoProblem& problem, const OuterConfig& config) {
  return ipa(problem, relaxed_start(problem, config.ipm), config);
}

SolveReport exp_algorithm(const MipdecoProblem& problem, const IterateX& x0,
                          const OuterConfig& config, const ExpConfig& exp_config,
                          const Subsolver& subsolver) {
  config.validate();
  if (!(exp_config.sigma > 0.0 && exp_config.sigma < 1.0)) {
    throw std::invalid_argument("sigma must lie in (0, 1)");
  }
  if (!(exp_config.delta0 > 0.0) || !(exp_config.delta_min > 0.0)) {
    throw std::invalid_argument("delta values must be positive");
  }
  const auto start = Clock::now();
  SolveReport report;
  report.algorithm = "exp";

  IterateX previous = x0;
  double eps = config.eps0;
  double delta = exp_config.delta0;
  IterateX best;
  double best_value = std::numeric_limits<double>::infinity();
  for (int n = 0; n < exp_config.max_iterations && delta > exp_config.delta_min; ++n) {
    IterateX x = subsolver(problem, eps, delta, previous);
    const IterateX rounded = smart_round_lift(problem, x);
    const double value = objective_raw(problem, rounded);
    if (value < best_value) {
      best_value = value;
      best = rounded;
    }
    const bool reduce = reduces_penalty_parameter(problem, x, eps, exp_config.feasibility_tolerance);
    const double gap = feasibility_gap(x.u, problem.budget);
    report.eps_trajectory.push_back(eps);
    report.eps_reduced.push_back(reduce);
    report.feasibility_gaps.push_back(gap);
    report.outer_iterations = n + 1;
    if (!reduce && report.phase_boundary < 0) report.phase_boundary = n;
    if (gap <= config.eps_feas && report.first_feasible < 0) report.first_feasible = n;
    if (reduce) {
      eps *= exp_config.sigma;
    } else {
      delta *= exp_config.sigma;
    }
    previous = std::move(x);
  }
  if (best.u.size() == 0) best = previous;
  finish(report, problem, best, start);
  return report;
}

Subsolver make_perturbation_subsolver(const OuterConfig& config) {
  auto rng = std::make_shared<Rng>(config.seed);
  auto last_eps = std::make_shared<double>(std::numeric_limits<double>::infinity());
  return [config, rng, last_eps](const MipdecoProblem& problem, double eps, double,
                                 const IterateX& previous) {
    const bool decreased = eps < *last_eps;
    *last_eps = eps;
    return reduction_via_perturbation(problem, previous, eps, decreased, config, *rng).x;
  };
}

}  // namespace mipdeco::penalty
