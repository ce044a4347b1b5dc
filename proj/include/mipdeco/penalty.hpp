#pragma once

#include "mipdeco/ipm.hpp"
#include "mipdeco/model.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace mipdeco::penalty {

using Rng = std::mt19937_64;

struct OuterConfig {
  double eps0 = 1e5;
  double sigma_ipa = 0.7;
  double sigma_penalty = 0.9;
  double eps_feas = 0.1;
  int p_max = 300;
  int theta = 3;  // flips per perturbation
  std::uint64_t seed = 0;
  int max_penalty_reductions = 1000;  // simple penalty cap
  double eps_floor = 1e-12;           // IPA safety net
  int max_outer_iterations = 100000;
  ipm::IpmConfig ipm;

  void validate() const;
};

struct ExpConfig {
  double delta0 = 1.0;
  double sigma = 0.7;
  double delta_min = 1e-6;
  int max_iterations = 1000;
  /// 0 tests x in W exactly; a positive value uses the feasibility gap.
  double feasibility_tolerance = 0.0;
};

struct SolveReport {
  std::string algorithm;
  IterateX solution;   // binary control with its exact state
  double objective = 0.0;  // raw objective of `solution`
  std::vector<double> eps_trajectory;  // eps^n used in outer iteration n
  std::vector<bool> eps_reduced;       // Step-2 branch taken in outer iteration n
  std::vector<double> feasibility_gaps;  // gap of x^{n+1}
  int phase_boundary = -1;   // first n whose Step 2 kept eps (n*)
  int first_feasible = -1;   // first n with gap(x^{n+1}) <= eps_feas
  int outer_iterations = 0;
  int perturbation_cycles = 0;  // rejected local solves followed by a perturbation
  int accepted_after_perturbation = 0;
  std::vector<ipm::IpmTrace> ipm_traces;  // call order
  double wall_time_s = 0.0;
  bool failed = false;
  std::string failure;
};

/// Solution of the continuous relaxation (Pcont) by the interior-point method.
IterateX relaxed_start(const MipdecoProblem& problem, const ipm::IpmConfig& config = {});

/// Step-2 test: x not in W and J(x;eps) - J([x]_SR;eps) <= eps ||x - [x]_SR||_2.
/// With feasibility_tolerance > 0, "not in W" means gap(u) > tolerance.
bool reduces_penalty_parameter(const MipdecoProblem& problem, const IterateX& x, double eps,
                               double feasibility_tolerance);

/// Indices of sources within adjacency_radius of source `index` (excluding it).
std::vector<int> adjacent_sources(const fem::FemSystem& system, int index);

/// Flipping perturbation: up to theta times, a control entry above 1/2 drops
/// to U[0.1, 0.2] and a random adjacent entry is set to U[d - 0.1, d], where
/// d is the drop. The state is recomputed as f(u_pert).
IterateX perturb(const MipdecoProblem& problem, const IterateX& x, int theta, Rng& rng);

struct ReductionOutcome {
  IterateX x;
  bool improved = false;  // false: x is the unchanged input
  int local_solves = 0;
};

/// Local solves from perturbed starts until one passes the acceptance
/// criteria, for at most p_max cycles. `eps_decreased` says whether the
/// outer loop reduced eps before this call.
ReductionOutcome reduction_via_perturbation(const MipdecoProblem& problem, const IterateX& x,
                                            double eps, bool eps_decreased,
                                            const OuterConfig& config, Rng& rng,
                                            std::vector<ipm::IpmTrace>* traces = nullptr);

/// Algorithm 0: one local solve per eps, eps reduced geometrically until
/// the iterate is integer-feasible.
SolveReport simple_penalty(const MipdecoProblem& problem, const IterateX& x0,
                           const OuterConfig& config);
SolveReport simple_penalty(const MipdecoProblem& problem, const OuterConfig& config);

/// Improved penalty algorithm.
SolveReport ipa(const MipdecoProblem& problem, const IterateX& x0, const OuterConfig& config);
SolveReport ipa(const MipdecoProblem& problem, const OuterConfig& config);

/// Step-1 solver for the exact penalty loop: returns x^n given eps^n, delta^n
/// and the previous iterate.
using Subsolver = std::function<IterateX(const MipdecoProblem&, double eps, double delta,
                                         const IterateX& previous)>;

/// Exact penalty (EXP) loop; returns the best smart-rounded iterate seen.
SolveReport exp_algorithm(const MipdecoProblem& problem, const IterateX& x0,
                          const OuterConfig& config, const ExpConfig& exp_config,
                          const Subsolver& subsolver);

/// Subsolver approximating a delta-global optimizer by reduction via perturbation.
Subsolver make_perturbation_subsolver(const OuterConfig& config);

}  // namespace mipdeco::penalty
