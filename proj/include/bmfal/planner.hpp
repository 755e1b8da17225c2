#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "bmfal/acquisition.hpp"
#include "bmfal/optimizer.hpp"

namespace bmfal {

enum class PlanMode { kStandard, kExceedOnce };

// Greedy selection state: chosen queries, exact accumulated cost, and the
// fidelity multiset.
struct PlanState {
  QuerySet selected;
  Rational accumulated_cost;
  std::vector<int> fidelity_counts;
};

struct PlanStep {
  int fidelity = 0;
  double score = 0.0;  // weighted incremental score of the chosen pair
  int restarts_used = 0;
};

struct Plan {
  QuerySet queries;
  std::vector<double> costs;   // per query, double view
  std::vector<double> scores;  // per query
  Rational total_cost;
  bool infeasible = false;
  std::vector<PlanStep> steps;
};

// Weighted greedy batch construction: while budget remains, pick the
// (input, fidelity) pair maximizing the mean MI increment divided by its
// cost. Standard mode only considers fidelities that still fit; exceed-once
// mode always takes the global argmax and stops after the first pick that
// overshoots (which is then the final, only overshooting pick).
Plan plan_batch(const MfModel& model, const CostModel& cost, const OptimizerConfig& opt_config,
                const McInputSet& mc, PlanMode mode);

// ---- Discrete instances (finite candidate grids) ----
//
// Used by the guarantee property tests, where the optimum must be computable
// by exhaustive search. Values are set functions over multisets of candidate
// indices (a candidate may be picked repeatedly; its fidelity sets its cost).

struct DiscreteCandidate {
  int grid_index = 0;
  int fidelity = 0;
};

// counts[i] = multiplicity of candidate i in the multiset.
using MultisetValue = std::function<double(const std::vector<int>& counts)>;

struct DiscreteInstance {
  std::vector<DiscreteCandidate> candidates;
  MultisetValue value;
};

struct DiscreteStep {
  int candidate = 0;
  Rational cost_after;
  double value_after = 0.0;
  // True when every fidelity was still affordable at the moment this pick
  // was made (the regime where the greedy guarantee applies).
  bool unrestricted = false;
};

struct DiscretePlan {
  std::vector<int> picks;
  std::vector<int> counts;
  Rational total_cost;
  double value = 0.0;
  bool infeasible = false;
  std::vector<DiscreteStep> steps;
};

DiscretePlan plan_batch_discrete(const DiscreteInstance& instance, const CostModel& cost,
                                 PlanMode mode);

struct BruteForceResult {
  std::vector<int> counts;
  double value = 0.0;
  std::size_t sets_visited = 0;
};

// Exhaustive search over all multisets with total cost within the budget.
// Throws SizeError if more than `max_sets` multisets would be visited.
BruteForceResult brute_force_opt(const DiscreteInstance& instance, const CostModel& cost,
                                 std::size_t max_sets = 2000000);

}  // namespace bmfal
