#pragma once

#include "mipdeco/model.hpp"
#include "mipdeco/penalty.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace mipdeco::oracle {

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kDefaultBudget = 200000;

/// sum_{k=0}^{S} C(l, k), saturating at UINT64_MAX.
std::uint64_t candidate_count(int l, int S);

struct Candidate {
  std::vector<int> support;  // active sources, increasing
  double objective = 0.0;
};

struct OracleResult {
  Vector u;            // global minimizer over W
  IterateX x;          // with its exact state
  double objective = 0.0;
  std::uint64_t evaluated = 0;
  std::vector<Candidate> table;  // filled when requested
};

/// Exhaustive search over all binary controls with at most S ones.
/// Candidates are visited by size, then lexicographically; the first
/// strict minimum wins. Linear PDEs superpose the single-source states,
/// the nonlinear kind solves the state for every candidate.
OracleResult enumerate_global_min(const MipdecoProblem& problem,
                                  std::uint64_t budget = kDefaultBudget, bool keep_table = false);

/// CSV with header `support,objective`, support as space-separated indices.
void write_table_csv(std::ostream& out, const OracleResult& result);

/// EXP subsolver returning the global minimizer over W for every call.
penalty::Subsolver make_oracle_subsolver(std::uint64_t budget = kDefaultBudget);

}  // namespace mipdeco::oracle
