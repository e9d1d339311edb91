#pragma once

// Exact inference over learned cardinality constraints: hard constraints,
// soft per-variable preferences, depth-first branch and bound.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nesy/constraints.hpp"

namespace nesy {

struct Preference {
  std::uint8_t value = 0;
  double weight = 0;  // cost paid when the variable is set against `value`
};

struct SearchLimits {
  std::uint64_t node_budget = 10'000'000;
  double time_budget_seconds = 60.0;
};

struct InferenceProblem {
  CardinalitySystem system;
  std::vector<Preference> preferences;  // empty means weight 0 everywhere
  std::vector<std::int8_t> fixed;       // -1 free, 0/1 fixed; empty means all free
  SearchLimits limits;

  void validate() const;
};

enum class SolveStatus { Optimal, Feasible, Infeasible, BudgetExceeded };
const char* to_string(SolveStatus status) noexcept;

struct Solution {
  Assignment assignment;
  double cost = 0;
  SolveStatus status = SolveStatus::Infeasible;
  std::uint64_t nodes = 0;
};

/// Preferences from perception confidences: preferred value round(p), weight |2p - 1|.
std::vector<Preference> preferences_from_probabilities(const std::vector<double>& p);

/// Branch and bound with interval propagation; deterministic.
Solution solve(const InferenceProblem& problem);

/// Exhaustive search over free variables (at most max_free of them); ties go
/// to the lexicographically smallest assignment.
Solution brute_force_solve(const InferenceProblem& problem, int max_free = 24);

/// True when some completion of `fixed` satisfies every constraint.
bool satisfiable(const CardinalitySystem& system, const std::vector<std::int8_t>& fixed);

struct ProjectedEquivalence {
  bool equivalent = true;
  bool exhaustive = true;
  std::uint64_t checked = 0;
  std::optional<Assignment> witness;  // values of the projected variables
};

/// Checks, for every assignment of `projected` variables, that the system
/// admits a completion of the remaining (existentially quantified) variables
/// exactly when `predicate` accepts. Exhaustive for |projected| <= max_vars,
/// otherwise over `samples` uniform draws.
ProjectedEquivalence projected_equivalence(const CardinalitySystem& system, const std::vector<int>& projected,
                                           const std::function<bool(const Assignment&)>& predicate,
                                           int max_vars = 24, std::uint64_t samples = 100000,
                                           std::uint64_t seed = 0);

/// Reads unit-coefficient `>=` lines as written by export_opb. Consecutive
/// negated lines over the same support become the upper bound.
CardinalitySystem parse_opb(const std::string& text, const std::optional<VariableSpace>& space = std::nullopt);

nlohmann::json to_json(const Solution& s);

}  // namespace nesy
