#pragma once

#include "mipdeco/fem.hpp"
#include "mipdeco/model.hpp"
#include "mipdeco/oracle.hpp"
#include "mipdeco/penalty.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace mipdeco::experiment {

using Json = nlohmann::json;

enum class Recipe { RandomCenters, GridExact, Explicit };

std::string to_string(Recipe recipe);
Recipe recipe_from_string(const std::string& name);

/// Everything needed to rebuild one problem instance.
struct InstanceSpec {
  std::string id;
  fem::PdeKind kind = fem::PdeKind::Poisson;
  double h = 1.0 / 32.0;
  int m = 4;  // l = m^2
  int S = 2;
  Recipe recipe = Recipe::RandomCenters;
  std::vector<fem::Point> centers;  // random-centers recipe
  std::vector<int> support;         // grid-exact recipe: active grid sources
  std::vector<double> desired;      // explicit recipe: y_d on interior DOFs
  std::uint64_t seed = 0;
};

void to_json(Json& j, const InstanceSpec& spec);
void from_json(const Json& j, InstanceSpec& spec);

InstanceSpec load_instance(const std::filesystem::path& path);
void save_instance(const std::filesystem::path& path, const InstanceSpec& spec);

/// Discretization shared by all instances with the same (kind, h, m).
std::shared_ptr<const fem::FemSystem> build_system(fem::PdeKind kind, double h, int m);

/// Problem for `spec` on a matching system (built when not given).
MipdecoProblem build_problem(const InstanceSpec& spec,
                             std::shared_ptr<const fem::FemSystem> system = nullptr);

/// Desired state from Gaussian sources at arbitrary centres with the grid's
/// height and width, all switched on, pushed through the forward map.
Vector desired_from_centers(const fem::FemSystem& system, const std::vector<fem::Point>& centers);

/// `count` instances per S. Random centres are i.i.d. uniform over
/// [0.1, 0.9]^2; grid-exact supports are uniform S-subsets of the grid.
std::vector<InstanceSpec> generate_test_set(const InstanceSpec& tmpl, int count,
                                            const std::vector<int>& budgets, std::uint64_t seed);

/// Per-solve seed from the master seed and the instance index.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct RunConfig {
  penalty::OuterConfig outer;
  penalty::ExpConfig exp;
  std::uint64_t oracle_budget = oracle::kDefaultBudget;
  /// Subsolver for the exact penalty loop: "oracle" or "perturbation".
  std::string exp_subsolver = "perturbation";
};

Json config_to_json(const RunConfig& config);
/// Fields missing from `j` keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const Json& j);
RunConfig load_config(const std::filesystem::path& path);

inline const std::vector<std::string>& algorithm_names() {
  static const std::vector<std::string> names{"penalty", "ipa", "exp", "oracle"};
  return names;
}

/// Runs one algorithm; the oracle is wrapped into a report with no traces.
penalty::SolveReport solve(const MipdecoProblem& problem, const std::string& algorithm,
                           const RunConfig& config, std::uint64_t seed);

Json report_to_json(const penalty::SolveReport& report);

struct RunRecord {
  std::string instance;
  std::string algorithm;
  double objective = 0.0;
  double time_s = 0.0;
  bool feasible = false;
  std::string flags;  // empty, or ';'-joined failure tags
};

struct Comparison {
  std::vector<RunRecord> runs;
  std::vector<penalty::SolveReport> reports;  // same order as runs
};

Comparison run_comparison(const std::vector<InstanceSpec>& instances,
                          const std::vector<std::string>& algorithms, const RunConfig& config,
                          std::uint64_t master_seed);

struct MetricsRow {
  int S = 0;
  std::string algorithm;
  double t_av = 0.0;
  int min_count = 0;
  double rel_err_av = 0.0;
  int runs = 0;
  int failures = 0;
};

/// Relative error of each run against the per-instance best among
/// successful runs; zero-best instances use the absolute error.
double relative_error(double objective, double best);

/// Aggregates per (S, algorithm). Rows follow ascending S and then the
/// order in which algorithms first appear.
std::vector<MetricsRow> compute_metrics(const std::vector<RunRecord>& runs,
                                        const std::map<std::string, int>& budget_of_instance);

void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs);
std::vector<RunRecord> read_runs_csv(std::istream& in);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

/// One row per IPM call: eps, aGMRES, NLI.
void emit_trace(const penalty::SolveReport& report, std::ostream& out);

/// Matrix Market: coordinate format for sparse, array format for dense.
void write_matrix_market(std::ostream& out, const linalg::SparseMatrix& matrix);
void write_matrix_market(std::ostream& out, const Matrix& matrix);

}  // namespace mipdeco::experiment
