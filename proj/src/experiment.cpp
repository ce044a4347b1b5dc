#include "mipdeco/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace mipdeco::experiment {

namespace {

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

bool is_gaussian(fem::PdeKind kind) { return kind != fem::PdeKind::ConvectionDiffusion; }

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; })) {
      throw std::invalid_argument("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_if(const Json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

}  // namespace

std::string to_string(Recipe recipe) {
  switch (recipe) {
    case Recipe::RandomCenters: return "random-centers";
    case Recipe::GridExact: return "grid-exact";
    case Recipe::Explicit: return "explicit";
  }
  return "unknown";
}

Recipe recipe_from_string(const std::string& name) {
  if (name == "random-centers") return Recipe::RandomCenters;
  if (name == "grid-exact") return Recipe::GridExact;
  if (name == "explicit") return Recipe::Explicit;
  throw std::invalid_argument("unknown desired-state recipe: " + name);
}

void to_json(Json& j, const InstanceSpec& spec) {
  j = Json{{"id", spec.id},
           {"kind", fem::to_string(spec.kind)},
           {"h", spec.h},
           {"m", spec.m},
           {"S", spec.S},
           {"recipe", to_string(spec.recipe)},
           {"seed", spec.seed}};
  if (is_gaussian(spec.kind)) {
    const auto grid = fem::make_source_grid(spec.m);
    j["kappa"] = grid.height;
    j["omega"] = grid.width;
  }
  Json centers = Json::array();
  for (const auto& c : spec.centers) centers.push_back({c.x, c.y});
  j["centers"] = centers;
  j["support"] = spec.support;
  if (!spec.desired.empty()) j["desired"] = spec.desired;
}

void from_json(const Json& j, InstanceSpec& spec) {
  reject_unknown_keys(j,
                      {"id", "kind", "h", "m", "S", "recipe", "seed", "kappa", "omega", "centers",
                       "support", "desired"},
                      "instance");
  spec = InstanceSpec{};
  read_if(j, "id", spec.id);
  spec.kind = fem::pde_kind_from_string(j.at("kind").get<std::string>());
  spec.h = j.at("h").get<double>();
  spec.m = j.at("m").get<int>();
  spec.S = j.at("S").get<int>();
  spec.recipe = recipe_from_string(j.at("recipe").get<std::string>());
  read_if(j, "seed", spec.seed);
  if (j.contains("centers")) {
    for (const auto& c : j.at("centers")) {
      if (!c.is_array() || c.size() != 2) throw std::invalid_argument("centre must be [x, y]");
      spec.centers.push_back({c[0].get<double>(), c[1].get<double>()});
    }
  }
  read_if(j, "support", spec.support);
  read_if(j, "desired", spec.desired);
  if (is_gaussian(spec.kind) && (j.contains("kappa") || j.contains("omega"))) {
    const auto grid = fem::make_source_grid(spec.m);
    const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::abs(b); };
    if ((j.contains("kappa") && !close(j.at("kappa").get<double>(), grid.height)) ||
        (j.contains("omega") && !close(j.at("omega").get<double>(), grid.width))) {
      throw std::invalid_argument("instance source height/width differ from the grid values");
    }
  }
}

InstanceSpec load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file " + path.string());
  return Json::parse(in).get<InstanceSpec>();
}

void save_instance(const std::filesystem::path& path, const InstanceSpec& spec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file " + path.string());
  out << Json(spec).dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::shared_ptr<const fem::FemSystem> build_system(fem::PdeKind kind, double h, int m) {
  static std::mutex mutex;
  static std::map<std::tuple<int, double, int>, std::shared_ptr<const fem::FemSystem>> cache;
  const auto key = std::make_tuple(static_cast<int>(kind), h, m);
  std::lock_guard lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  std::shared_ptr<const fem::FemSystem> system;
  if (kind == fem::PdeKind::ConvectionDiffusion) {
    system = std::make_shared<const fem::FemSystem>(
        fem::assemble_convection_diffusion(fem::build_mesh(h, fem::ElementType::Q1Quad), m));
  } else {
    system = std::make_shared<const fem::FemSystem>(
        fem::assemble_poisson(fem::build_mesh(h), fem::make_source_grid(m), kind));
  }
  cache.emplace(key, system);
  return system;
}

Vector desired_from_centers(const fem::FemSystem& system, const std::vector<fem::Point>& centers) {
  if (!is_gaussian(system.kind)) {
    throw std::invalid_argument("random-centre desired states need Gaussian sources");
  }
  if (centers.empty()) throw std::invalid_argument("random-centre recipe needs centres");
  const fem::FemSystem shifted =
      fem::assemble_poisson(system.mesh, centers, system.source_height, system.source_width,
                            system.adjacency_radius, system.kind);
  return fem::solve_state(shifted, Vector::Ones(static_cast<Eigen::Index>(centers.size())));
}

MipdecoProblem build_problem(const InstanceSpec& spec,
                             std::shared_ptr<const fem::FemSystem> system) {
  if (!system) system = build_system(spec.kind, spec.h, spec.m);
  if (system->kind != spec.kind || system->control_dim() != spec.m * spec.m ||
      system->mesh.h != spec.h) {
    throw std::invalid_argument("instance does not match the given FEM system");
  }
  Vector desired;
  switch (spec.recipe) {
    case Recipe::RandomCenters:
      desired = desired_from_centers(*system, spec.centers);
      break;
    case Recipe::GridExact: {
      Vector u = Vector::Zero(system->control_dim());
      for (int i : spec.support) {
        if (i < 0 || i >= system->control_dim()) throw std::invalid_argument("support index out of range");
        u(i) = 1.0;
      }
      desired = fem::solve_state(*system, u);
      break;
    }
    case Recipe::Explicit:
      desired = Eigen::Map<const Vector>(spec.desired.data(),
                                         static_cast<Eigen::Index>(spec.desired.size()));
      break;
  }
  return MipdecoProblem(system, std::move(desired), spec.S);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<InstanceSpec> generate_test_set(const InstanceSpec& tmpl, int count,
                                            const std::vector<int>& budgets, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("instance count must be positive");
  const int l = tmpl.m * tmpl.m;
  std::vector<InstanceSpec> out;
  std::uint64_t index = 0;
  for (int S : budgets) {
    if (S < 1 || S > l) throw std::invalid_argument("budget S must satisfy 1 <= S <= l");
    for (int k = 0; k < count; ++k, ++index) {
      InstanceSpec spec = tmpl;
      spec.S = S;
      spec.seed = derive_seed(seed, index);
      spec.centers.clear();
      spec.support.clear();
      spec.desired.clear();
      char id[32];
      std::snprintf(id, sizeof id, "S%d_%03d", S, k);
      spec.id = id;
      std::mt19937_64 rng(spec.seed);
      if (spec.recipe == Recipe::RandomCenters) {
        std::uniform_real_distribution<double> coord(0.1, 0.9);
        for (int c = 0; c < S; ++c) {
          const double x = coord(rng);
          const double y = coord(rng);
          spec.centers.push_back({x, y});
        }
      } else if (spec.recipe == Recipe::GridExact) {
        std::vector<int> all(static_cast<size_t>(l));
        std::iota(all.begin(), all.end(), 0);
        for (int c = 0; c < S; ++c) {
          std::uniform_int_distribution<int> pick(c, l - 1);
          std::swap(all[static_cast<size_t>(c)], all[static_cast<size_t>(pick(rng))]);
        }
        spec.support.assign(all.begin(), all.begin() + S);
        std::sort(spec.support.begin(), spec.support.end());
      } else {
        throw std::invalid_argument("explicit desired states cannot be generated");
      }
      out.push_back(std::move(spec));
    }
  }
  return out;
}

Json config_to_json(const RunConfig& c) {
  const auto& o = c.outer;
  const auto& i = o.ipm;
  return Json{
      {"outer",
       {{"eps0", o.eps0},
        {"sigma_ipa", o.sigma_ipa},
        {"sigma_penalty", o.sigma_penalty},
        {"eps_feas", o.eps_feas},
        {"p_max", o.p_max},
        {"theta", o.theta},
        {"seed", o.seed},
        {"max_penalty_reductions", o.max_penalty_reductions},
        {"eps_floor", o.eps_floor},
        {"max_outer_iterations", o.max_outer_iterations}}},
      {"ipm",
       {{"tol_kkt", i.tol_kkt},
        {"mu_min", i.mu_min},
        {"mu_factor", i.mu_factor},
        {"mu_initial", i.mu_initial},
        {"gamma", i.gamma},
        {"eta_max", i.eta_max},
        {"eta_min", i.eta_min},
        {"step_fraction", i.step_fraction},
        {"max_iterations", i.max_iterations},
        {"gmres_max_iters", i.gmres_max_iters},
        {"max_backtracks", i.max_backtracks}}},
      {"exp",
       {{"delta0", c.exp.delta0},
        {"sigma", c.exp.sigma},
        {"delta_min", c.exp.delta_min},
        {"max_iterations", c.exp.max_iterations},
        {"feasibility_tolerance", c.exp.feasibility_tolerance},
        {"subsolver", c.exp_subsolver}}},
      {"oracle", {{"budget", c.oracle_budget}}}};
}

RunConfig config_from_json(const Json& j) {
  RunConfig c;
  reject_unknown_keys(j, {"outer", "ipm", "exp", "oracle"}, "config");
  if (j.contains("outer")) {
    const Json& o = j.at("outer");
    reject_unknown_keys(o,
                        {"eps0", "sigma_ipa", "sigma_penalty", "eps_feas", "p_max", "theta", "seed",
                         "max_penalty_reductions", "eps_floor", "max_outer_iterations"},
                        "config.outer");
    read_if(o, "eps0", c.outer.eps0);
    read_if(o, "sigma_ipa", c.outer.sigma_ipa);
    read_if(o, "sigma_penalty", c.outer.sigma_penalty);
    read_if(o, "eps_feas", c.outer.eps_feas);
    read_if(o, "p_max", c.outer.p_max);
    read_if(o, "theta", c.outer.theta);
    read_if(o, "seed", c.outer.seed);
    read_if(o, "max_penalty_reductions", c.outer.max_penalty_reductions);
    read_if(o, "eps_floor", c.outer.eps_floor);
    read_if(o, "max_outer_iterations", c.outer.max_outer_iterations);
  }
  if (j.contains("ipm")) {
    const Json& i = j.at("ipm");
    reject_unknown_keys(i,
                        {"tol_kkt", "mu_min", "mu_factor", "mu_initial", "gamma", "eta_max",
                         "eta_min", "step_fraction", "max_iterations", "gmres_max_iters",
                         "max_backtracks"},
                        "config.ipm");
    auto& t = c.outer.ipm;
    read_if(i, "tol_kkt", t.tol_kkt);
    read_if(i, "mu_min", t.mu_min);
    read_if(i, "mu_factor", t.mu_factor);
    read_if(i, "mu_initial", t.mu_initial);
    read_if(i, "gamma", t.gamma);
    read_if(i, "eta_max", t.eta_max);
    read_if(i, "eta_min", t.eta_min);
    read_if(i, "step_fraction", t.step_fraction);
    read_if(i, "max_iterations", t.max_iterations);
    read_if(i, "gmres_max_iters", t.gmres_max_iters);
    read_if(i, "max_backtracks", t.max_backtracks);
  }
  if (j.contains("exp")) {
    const Json& e = j.at("exp");
    reject_unknown_keys(e,
                        {"delta0", "sigma", "delta_min", "max_iterations", "feasibility_tolerance",
                         "subsolver"},
                        "config.exp");
    read_if(e, "delta0", c.exp.delta0);
    read_if(e, "sigma", c.exp.sigma);
    read_if(e, "delta_min", c.exp.delta_min);
    read_if(e, "max_iterations", c.exp.max_iterations);
    read_if(e, "feasibility_tolerance", c.exp.feasibility_tolerance);
    read_if(e, "subsolver", c.exp_subsolver);
  }
  if (j.contains("oracle")) {
    reject_unknown_keys(j.at("oracle"), {"budget"}, "config.oracle");
    read_if(j.at("oracle"), "budget", c.oracle_budget);
  }
  if (c.exp_subsolver != "oracle" && c.exp_subsolver != "perturbation") {
    throw std::invalid_argument("exp.subsolver must be 'oracle' or 'perturbation'");
  }
  c.outer.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  return config_from_json(Json::parse(in));
}

penalty::SolveReport solve(const MipdecoProblem& problem, const std::string& algorithm,
                           const RunConfig& config, std::uint64_t seed) {
  penalty::OuterConfig outer = config.outer;
  outer.seed = seed;
  if (algorithm == "penalty") return penalty::simple_penalty(problem, outer);
  if (algorithm == "ipa") return penalty::ipa(problem, outer);
  if (algorithm == "exp") {
    const IterateX x0 = penalty::relaxed_start(problem, outer.ipm);
    const penalty::Subsolver sub = config.exp_subsolver == "oracle"
                                       ? oracle::make_oracle_subsolver(config.oracle_budget)
                                       : penalty::make_perturbation_subsolver(outer);
    return penalty::exp_algorithm(problem, x0, outer, config.exp, sub);
  }
  if (algorithm == "oracle") {
    const auto start = std::chrono::steady_clock::now();
    const oracle::OracleResult res = oracle::enumerate_global_min(problem, config.oracle_budget);
    penalty::SolveReport report;
    report.algorithm = "oracle";
    report.solution = res.x;
    report.objective = res.objective;
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  }
  throw std::invalid_argument("unknown algorithm: " + algorithm);
}

Json report_to_json(const penalty::SolveReport& r) {
  Json traces = Json::array();
  for (const auto& t : r.ipm_traces) {
    traces.push_back({{"eps", t.eps},
                      {"nli", t.iterations},
                      {"agmres", t.average_gmres()},
                      {"gmres_iterations", t.gmres_iterations},
                      {"converged", t.converged},
                      {"final_mu", t.final_mu},
                      {"linear_solver_failure", t.linear_solver_failure}});
  }
  std::vector<double> control(r.solution.u.data(), r.solution.u.data() + r.solution.u.size());
  std::vector<int> reduced(r.eps_reduced.begin(), r.eps_reduced.end());
  return Json{{"algorithm", r.algorithm},
              {"objective", r.objective},
              {"control", control},
              {"eps_trajectory", r.eps_trajectory},
              {"eps_reduced", reduced},
              {"feasibility_gaps", r.feasibility_gaps},
              {"phase_boundary", r.phase_boundary},
              {"first_feasible", r.first_feasible},
              {"outer_iterations", r.outer_iterations},
              {"perturbation_cycles", r.perturbation_cycles},
              {"accepted_after_perturbation", r.accepted_after_perturbation},
              {"wall_time_s", r.wall_time_s},
              {"failed", r.failed},
              {"failure", r.failure},
              {"ipm_traces", traces}};
}

Comparison run_comparison(const std::vector<InstanceSpec>& instances,
                          const std::vector<std::string>& algorithms, const RunConfig& config,
                          std::uint64_t master_seed) {
  for (const auto& a : algorithms) {
    if (std::find(algorithm_names().begin(), algorithm_names().end(), a) == algorithm_names().end()) {
      throw std::invalid_argument("unknown algorithm: " + a);
    }
  }
  Comparison out;
  for (size_t k = 0; k < instances.size(); ++k) {
    const InstanceSpec& spec = instances[k];
    const MipdecoProblem problem = build_problem(spec);
    const std::uint64_t seed = derive_seed(master_seed, k);
    for (const auto& algorithm : algorithms) {
      RunRecord rec;
      rec.instance = spec.id;
      rec.algorithm = algorithm;
      penalty::SolveReport report;
      try {
        report = solve(problem, algorithm, config, seed);
        rec.objective = report.objective;
        rec.time_s = std::round(report.wall_time_s * 1000.0) / 1000.0;
        const Vector& u = report.solution.u;
        rec.feasible = u.size() == problem.control_dim() &&
                       (u.array() == 0.0 || u.array() == 1.0).all() && u.sum() <= problem.budget &&
                       feasibility_gap(u, problem.budget) == 0.0;
        if (report.failed) rec.flags = "failed";
      } catch (const oracle::BudgetExceeded&) {
        rec.objective = std::nan("");
        rec.flags = "budget";
        report.algorithm = algorithm;
        report.failed = true;
        report.failure = "enumeration budget exceeded";
      } catch (const std::exception& e) {
        rec.objective = std::nan("");
        rec.flags = "error";
        report.algorithm = algorithm;
        report.failed = true;
        report.failure = e.what();
      }
      if (!rec.feasible && rec.flags.empty()) rec.flags = "infeasible";
      out.runs.push_back(rec);
      out.reports.push_back(std::move(report));
    }
  }
  return out;
}

double relative_error(double objective, double best) {
  const double diff = objective - best;
  return best == 0.0 ? std::abs(diff) : std::abs(diff) / std::abs(best);
}

std::vector<MetricsRow> compute_metrics(const std::vector<RunRecord>& runs,
                                        const std::map<std::string, int>& budget_of_instance) {
  constexpr double kTie = 1e-12;
  std::map<std::string, double> best;
  for (const auto& r : runs) {
    if (!r.flags.empty()) continue;
    auto [it, inserted] = best.emplace(r.instance, r.objective);
    if (!inserted) it->second = std::min(it->second, r.objective);
  }

  std::vector<std::string> order;
  for (const auto& r : runs) {
    if (std::find(order.begin(), order.end(), r.algorithm) == order.end()) order.push_back(r.algorithm);
  }
  struct Acc {
    double time = 0.0;
    double err = 0.0;
    int nonzero = 0;
    MetricsRow row;
  };
  std::map<std::pair<int, size_t>, Acc> acc;
  for (const auto& r : runs) {
    const auto s = budget_of_instance.find(r.instance);
    if (s == budget_of_instance.end()) throw std::invalid_argument("no budget for instance " + r.instance);
    const size_t alg = static_cast<size_t>(std::find(order.begin(), order.end(), r.algorithm) - order.begin());
    Acc& a = acc[{s->second, alg}];
    a.row.S = s->second;
    a.row.algorithm = r.algorithm;
    ++a.row.runs;
    a.time += r.time_s;
    if (!r.flags.empty()) {
      ++a.row.failures;
      continue;
    }
    const double e = relative_error(r.objective, best.at(r.instance));
    if (e <= kTie) {
      ++a.row.min_count;
    } else {
      a.err += e;
      ++a.nonzero;
    }
  }
  std::vector<MetricsRow> rows;
  for (auto& [key, a] : acc) {
    a.row.t_av = a.time / a.row.runs;
    a.row.rel_err_av = a.nonzero > 0 ? a.err / a.nonzero : 0.0;
    rows.push_back(a.row);
  }
  return rows;
}

void write_runs_csv(std::ostream& out, const std::vector<RunRecord>& runs) {
  out << "instance,algorithm,objective,time_s,feasible,flags\n";
  for (const auto& r : runs) {
    char time[32];
    std::snprintf(time, sizeof time, "%.3f", r.time_s);
    out << r.instance << ',' << r.algorithm << ',' << format_double(r.objective) << ',' << time
        << ',' << (r.feasible ? 1 : 0) << ',' << r.flags << '\n';
  }
}

std::vector<RunRecord> read_runs_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "instance,algorithm,objective,time_s,feasible,flags") {
    throw std::runtime_error("unexpected run CSV header");
  }
  std::vector<RunRecord> runs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw std::runtime_error("malformed run CSV row: " + line);
    RunRecord r;
    r.instance = f[0];
    r.algorithm = f[1];
    r.objective = std::stod(f[2]);
    r.time_s = std::stod(f[3]);
    r.feasible = f[4] == "1";
    r.flags = f[5];
    runs.push_back(r);
  }
  return runs;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "S,algorithm,t_av,min_count,rel_err_av,runs,failures\n";
  for (const auto& r : rows) {
    out << r.S << ',' << r.algorithm << ',' << format_double(r.t_av) << ',' << r.min_count << ','
        << format_double(r.rel_err_av) << ',' << r.runs << ',' << r.failures << '\n';
  }
}

void emit_trace(const penalty::SolveReport& report, std::ostream& out) {
  for (const auto& t : report.ipm_traces) {
    out << format_double(t.eps) << ' ' << format_double(t.average_gmres()) << ' ' << t.iterations
        << '\n';
  }
}

void write_matrix_market(std::ostream& out, const linalg::SparseMatrix& matrix) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << matrix.rows() << ' ' << matrix.cols() << ' ' << matrix.nonZeros() << '\n';
  for (Eigen::Index k = 0; k < matrix.outerSize(); ++k) {
    for (linalg::SparseMatrix::InnerIterator it(matrix, k); it; ++it) {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << format_double(it.value()) << '\n';
    }
  }
}

void write_matrix_market(std::ostream& out, const Matrix& matrix) {
  out << "%%MatrixMarket matrix array real general\n";
  out << matrix.rows() << ' ' << matrix.cols() << '\n';
  for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) out << format_double(matrix(i, j)) << '\n';
  }
}

}  // namespace mipdeco::experiment
