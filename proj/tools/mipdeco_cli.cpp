// mipdeco: instance generation, solver runs, benchmarks and traces.

#include "mipdeco/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace mipdeco;
using experiment::Json;

namespace {

struct ConfigFlags {
  std::string path;
  std::optional<int> p_max;
  std::optional<int> theta;
  std::optional<double> eps0;
  std::optional<double> eps_feas;
  std::optional<std::string> exp_subsolver;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.path, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--p-max", f.p_max, "perturbation cycles per reduction step");
  cmd->add_option("--theta", f.theta, "flips per perturbation");
  cmd->add_option("--eps0", f.eps0, "initial penalty parameter");
  cmd->add_option("--eps-feas", f.eps_feas, "feasibility tolerance");
  cmd->add_option("--exp-subsolver", f.exp_subsolver, "oracle or perturbation");
}

experiment::RunConfig resolve_config(const ConfigFlags& f) {
  Json j = f.path.empty() ? Json::object() : [&] {
    std::ifstream in(f.path);
    return Json::parse(in);
  }();
  if (f.p_max) j["outer"]["p_max"] = *f.p_max;
  if (f.theta) j["outer"]["theta"] = *f.theta;
  if (f.eps0) j["outer"]["eps0"] = *f.eps0;
  if (f.eps_feas) j["outer"]["eps_feas"] = *f.eps_feas;
  if (f.exp_subsolver) j["exp"]["subsolver"] = *f.exp_subsolver;
  return experiment::config_from_json(j);
}

std::vector<fs::path> collect_instances(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.path().extension() == ".json") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  return out;
}

template <typename Fn>
void write_file(const std::string& path, Fn&& fn) {
  if (path == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  fn(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalty and perturbation solvers for mixed-integer PDE-constrained optimization"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a deterministic test set of instance files");
  std::string gen_kind = "poisson", gen_recipe = "random-centers", gen_out = "instances";
  double gen_h = 1.0 / 32.0;
  int gen_m = 4, gen_count = 10;
  std::vector<int> gen_budgets{2, 3};
  std::uint64_t gen_seed = 0;
  gen->add_option("--kind", gen_kind, "poisson, convection-diffusion or nonlinear-poisson");
  gen->add_option("--mesh-width", gen_h, "mesh width (dyadic)");
  gen->add_option("--m", gen_m, "sources per side");
  gen->add_option("--S", gen_budgets, "knapsack bounds")->delimiter(',');
  gen->add_option("--count", gen_count, "instances per S");
  gen->add_option("--recipe", gen_recipe, "random-centers or grid-exact");
  gen->add_option("--seed", gen_seed, "master seed")->required();
  gen->add_option("--out", gen_out, "output directory");

  // solve
  auto* solve = app.add_subcommand("solve", "solve one instance");
  std::string solve_instance, solve_alg = "ipa", solve_report, solve_trace;
  std::uint64_t solve_seed = 0;
  ConfigFlags solve_cfg;
  solve->add_option("instance", solve_instance, "instance JSON")->required()->check(CLI::ExistingFile);
  solve->add_option("--algorithm", solve_alg, "penalty, ipa, exp or oracle");
  solve->add_option("--seed", solve_seed, "solver seed");
  solve->add_option("--report", solve_report, "write the JSON report here ('-' for stdout)");
  solve->add_option("--trace", solve_trace, "write the eps/aGMRES/NLI trace here");
  add_config_flags(solve, solve_cfg);

  // bench
  auto* bench = app.add_subcommand("bench", "compare algorithms on a set of instances");
  std::vector<std::string> bench_inputs;
  std::vector<std::string> bench_algs{"penalty", "ipa"};
  std::string bench_runs = "runs.csv", bench_metrics = "metrics.csv";
  std::uint64_t bench_seed = 0;
  ConfigFlags bench_cfg;
  bench->add_option("instances", bench_inputs, "instance files or directories")->required();
  bench->add_option("--algorithms", bench_algs, "subset of penalty,ipa,exp,oracle")->delimiter(',');
  bench->add_option("--seed", bench_seed, "master seed")->required();
  bench->add_option("--runs", bench_runs, "per-run CSV");
  bench->add_option("--metrics", bench_metrics, "metrics CSV");
  add_config_flags(bench, bench_cfg);

  // oracle
  auto* orc = app.add_subcommand("oracle", "brute-force global minimum over binary controls");
  std::string orc_instance, orc_table;
  std::uint64_t orc_budget = oracle::kDefaultBudget;
  orc->add_option("instance", orc_instance, "instance JSON")->required()->check(CLI::ExistingFile);
  orc->add_option("--budget", orc_budget, "maximum candidate count");
  orc->add_option("--table", orc_table, "write every candidate and its objective as CSV");

  // validate-fem
  auto* vfem = app.add_subcommand("validate-fem", "manufactured-solution error table and matrix export");
  std::vector<int> vfem_levels{3, 4, 5};
  std::string vfem_dump, vfem_kind = "poisson";
  double vfem_h = 1.0 / 16.0;
  int vfem_m = 4;
  vfem->add_option("--levels", vfem_levels, "mesh levels k with h = 2^-k")->delimiter(',');
  vfem->add_option("--dump", vfem_dump, "directory for M, K, Phi in Matrix Market format");
  vfem->add_option("--kind", vfem_kind, "PDE kind for --dump");
  vfem->add_option("--mesh-width", vfem_h, "mesh width for --dump");
  vfem->add_option("--m", vfem_m, "sources per side for --dump");

  // trace
  auto* trace = app.add_subcommand("trace", "run one solve and write its eps/aGMRES/NLI table");
  std::string trace_instance, trace_alg = "ipa", trace_out = "-";
  std::uint64_t trace_seed = 0;
  ConfigFlags trace_cfg;
  trace->add_option("instance", trace_instance, "instance JSON")->required()->check(CLI::ExistingFile);
  trace->add_option("--algorithm", trace_alg, "penalty, ipa or exp");
  trace->add_option("--seed", trace_seed, "solver seed");
  trace->add_option("--out", trace_out, "output file ('-' for stdout)");
  add_config_flags(trace, trace_cfg);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      experiment::InstanceSpec tmpl;
      tmpl.kind = fem::pde_kind_from_string(gen_kind);
      tmpl.h = gen_h;
      tmpl.m = gen_m;
      tmpl.recipe = experiment::recipe_from_string(gen_recipe);
      const auto set = experiment::generate_test_set(tmpl, gen_count, gen_budgets, gen_seed);
      fs::create_directories(gen_out);
      for (const auto& spec : set) experiment::save_instance(fs::path(gen_out) / (spec.id + ".json"), spec);
      std::cout << "wrote " << set.size() << " instances to " << gen_out << '\n';
    } else if (*solve) {
      const auto config = resolve_config(solve_cfg);
      const auto spec = experiment::load_instance(solve_instance);
      const auto problem = experiment::build_problem(spec);
      const auto report = experiment::solve(problem, solve_alg, config, solve_seed);
      std::printf("%s %s objective=%.10e time_s=%.3f%s\n", spec.id.c_str(), solve_alg.c_str(),
                  report.objective, report.wall_time_s, report.failed ? " FAILED" : "");
      if (!solve_report.empty()) {
        write_file(solve_report, [&](std::ostream& o) { o << experiment::report_to_json(report).dump(2) << '\n'; });
      }
      if (!solve_trace.empty()) {
        write_file(solve_trace, [&](std::ostream& o) { experiment::emit_trace(report, o); });
      }
      return report.failed ? 2 : 0;
    } else if (*bench) {
      const auto config = resolve_config(bench_cfg);
      std::vector<experiment::InstanceSpec> specs;
      std::map<std::string, int> budgets;
      for (const auto& p : collect_instances(bench_inputs)) {
        specs.push_back(experiment::load_instance(p));
        budgets[specs.back().id] = specs.back().S;
      }
      const auto cmp = experiment::run_comparison(specs, bench_algs, config, bench_seed);
      write_file(bench_runs, [&](std::ostream& o) { experiment::write_runs_csv(o, cmp.runs); });
      const auto rows = experiment::compute_metrics(cmp.runs, budgets);
      write_file(bench_metrics, [&](std::ostream& o) { experiment::write_metrics_csv(o, rows); });
      experiment::write_metrics_csv(std::cout, rows);
    } else if (*orc) {
      const auto spec = experiment::load_instance(orc_instance);
      const auto problem = experiment::build_problem(spec);
      const auto res = oracle::enumerate_global_min(problem, orc_budget, !orc_table.empty());
      std::printf("%s candidates=%llu objective=%.10e support=", spec.id.c_str(),
                  static_cast<unsigned long long>(res.evaluated), res.objective);
      for (Eigen::Index i = 0; i < res.u.size(); ++i) {
        if (res.u(i) == 1.0) std::printf("%ld ", static_cast<long>(i));
      }
      std::printf("\n");
      if (!orc_table.empty()) {
        write_file(orc_table, [&](std::ostream& o) { oracle::write_table_csv(o, res); });
      }
    } else if (*vfem) {
      std::printf("%-10s %-16s %s\n", "h", "l2_error", "ratio");
      double previous = 0.0;
      for (int k : vfem_levels) {
        const auto r = fem::manufactured_poisson_error(std::ldexp(1.0, -k));
        if (previous > 0.0) {
          std::printf("2^-%-7d %-16.8e %.4f\n", k, r.l2_error, previous / r.l2_error);
        } else {
          std::printf("2^-%-7d %-16.8e -\n", k, r.l2_error);
        }
        previous = r.l2_error;
      }
      if (!vfem_dump.empty()) {
        const auto sys = experiment::build_system(fem::pde_kind_from_string(vfem_kind), vfem_h, vfem_m);
        fs::create_directories(vfem_dump);
        const fs::path dir(vfem_dump);
        write_file((dir / "mass.mtx").string(), [&](std::ostream& o) { experiment::write_matrix_market(o, *sys->mass); });
        write_file((dir / "stiffness.mtx").string(), [&](std::ostream& o) { experiment::write_matrix_market(o, *sys->stiffness); });
        write_file((dir / "sources.mtx").string(), [&](std::ostream& o) { experiment::write_matrix_market(o, sys->sources); });
      }
    } else if (*trace) {
      const auto config = resolve_config(trace_cfg);
      const auto spec = experiment::load_instance(trace_instance);
      const auto problem = experiment::build_problem(spec);
      const auto report = experiment::solve(problem, trace_alg, config, trace_seed);
      write_file(trace_out, [&](std::ostream& o) { experiment::emit_trace(report, o); });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
