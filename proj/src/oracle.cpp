#include "mipdeco/oracle.hpp"

#include <limits>
#include <memory>
#include <ostream>
#include <string>

namespace mipdeco::oracle {

std::uint64_t candidate_count(int l, int S) {
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t total = 0;
  std::uint64_t binom = 1;  // C(l, k)
  for (int k = 0; k <= S && k <= l; ++k) {
    if (k > 0) {
      const std::uint64_t num = static_cast<std::uint64_t>(l - k + 1);
      if (binom > kMax / num) return kMax;
      binom = binom * num / static_cast<std::uint64_t>(k);
    }
    if (total > kMax - binom) return kMax;
    total += binom;
  }
  return total;
}

namespace {

// Advances `idx` to the next k-combination of {0..l-1} in lexicographic order.
bool next_combination(std::vector<int>& idx, int l) {
  const int k = static_cast<int>(idx.size());
  int i = k - 1;
  while (i >= 0 && idx[static_cast<size_t>(i)] == l - k + i) --i;
  if (i < 0) return false;
  ++idx[static_cast<size_t>(i)];
  for (int j = i + 1; j < k; ++j) idx[static_cast<size_t>(j)] = idx[static_cast<size_t>(j - 1)] + 1;
  return true;
}

}  // namespace

OracleResult enumerate_global_min(const MipdecoProblem& problem, std::uint64_t budget,
                                  bool keep_table) {
  const int l = problem.control_dim();
  const int S = problem.budget;
  const std::uint64_t count = candidate_count(l, S);
  if (count > budget) {
    throw BudgetExceeded("enumeration needs " + std::to_string(count) +
                         " candidates, budget is " + std::to_string(budget));
  }
  const auto& sys = *problem.system;
  const bool linear = sys.kind != fem::PdeKind::NonlinearPoisson;
  Matrix singles;
  if (linear) singles = sys.stiffness_factor->solve(sys.mass_sources);

  OracleResult result;
  result.objective = std::numeric_limits<double>::infinity();
  std::vector<int> best_support;
  for (int k = 0; k <= S; ++k) {
    std::vector<int> idx(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j) idx[static_cast<size_t>(j)] = j;
    do {
      IterateX x;
      x.u = Vector::Zero(l);
      for (int i : idx) x.u(i) = 1.0;
      if (linear) {
        x.y = Vector::Zero(problem.state_dim());
        for (int i : idx) x.y += singles.col(i);
      } else {
        x.y = fem::solve_state(sys, x.u);
      }
      const double value = objective_raw(problem, x);
      ++result.evaluated;
      if (keep_table) result.table.push_back({idx, value});
      if (value < result.objective) {
        result.objective = value;
        best_support = idx;
      }
    } while (next_combination(idx, l));
  }
  result.u = Vector::Zero(l);
  for (int i : best_support) result.u(i) = 1.0;
  result.x = lift_control(problem, result.u);
  result.objective = objective_raw(problem, result.x);
  return result;
}

void write_table_csv(std::ostream& out, const OracleResult& result) {
  out << "support,objective\n";
  out.precision(17);
  for (const auto& c : result.table) {
    for (size_t i = 0; i < c.support.size(); ++i) out << (i ? " " : "") << c.support[i];
    out << ',' << c.objective << '\n';
  }
}

penalty::Subsolver make_oracle_subsolver(std::uint64_t budget) {
  struct Cache {
    const fem::FemSystem* system = nullptr;
    Vector desired;
    IterateX x;
  };
  auto cache = std::make_shared<Cache>();
  return [budget, cache](const MipdecoProblem& problem, double, double, const IterateX&) {
    if (cache->system != problem.system.get() ||
        cache->desired.size() != problem.desired_state.size() ||
        cache->desired != problem.desired_state) {
      cache->x = enumerate_global_min(problem, budget).x;
      cache->system = problem.system.get();
      cache->desired = problem.desired_state;
    }
    return cache->x;
  };
}

}  // namespace mipdeco::oracle
