#include "bmfal/planner.hpp"

#include <algorithm>
#include <cmath>

namespace bmfal {

namespace {

// floor(budget / lambda) for positive rationals.
long floor_ratio(const Rational& budget, const Rational& lambda) {
  const __int128 num = static_cast<__int128>(budget.num()) * lambda.den();
  const __int128 den = static_cast<__int128>(budget.den()) * lambda.num();
  return static_cast<long>(num / den);
}

}  // namespace

Plan plan_batch(const MfModel& model, const CostModel& cost, const OptimizerConfig& opt_config,
                const McInputSet& mc, PlanMode mode) {
  cost.validate();
  opt_config.validate();
  if (cost.num_fidelities() != model.num_fidelities())
    throw ContractError("plan_batch: cost model fidelity count mismatch");

  IncrementalBatchScorer scorer(model, mc);
  Plan plan;
  Rational spent(0);
  const long max_steps = floor_ratio(cost.budget, cost.lambdas.front()) + 1;

  for (long step = 0; step < max_steps; ++step) {
    if (!(spent <= cost.budget)) break;

    std::vector<int> candidates;
    for (int m = 0; m < cost.num_fidelities(); ++m)
      if (mode == PlanMode::kExceedOnce || cost.affordable(m, spent)) candidates.push_back(m);
    if (candidates.empty()) {
      plan.infeasible = plan.queries.empty();
      break;
    }

    struct Best {
      int fidelity;
      Eigen::VectorXd x;
      double weighted;
      int restarts;
    };
    std::optional<Best> best;
    for (int m : candidates) {  // ascending: ties keep the cheaper fidelity
      OptimizerConfig oc = opt_config;
      oc.seed = derive_seed(opt_config.seed, 0x9a7b, static_cast<std::uint64_t>(step) * 64 + m);
      MaximizeResult res;
      try {
        res = maximize([&](const Eigen::VectorXd& x) { return scorer.gain(m, x); }, model.domain(), oc);
      } catch (const OptimizerError&) {
        continue;  // this fidelity is unusable this step
      }
      const double weighted = res.value / cost.lambda(m);
      if (!best || weighted > best->weighted)
        best = Best{m, std::move(res.x), weighted, res.restarts_used};
    }
    if (!best) {  // optimizer failed on every candidate fidelity
      plan.infeasible = plan.queries.empty();
      break;
    }

    scorer.commit(best->fidelity, best->x);
    plan.queries.push_back(Query{best->x, best->fidelity});
    plan.costs.push_back(cost.lambda(best->fidelity));
    plan.scores.push_back(best->weighted);
    plan.steps.push_back(PlanStep{best->fidelity, best->weighted, best->restarts});
    spent += cost.lambdas[best->fidelity];

    if (mode == PlanMode::kExceedOnce && !(spent <= cost.budget)) break;  // single final overshoot
  }

  plan.total_cost = spent;
  return plan;
}

DiscretePlan plan_batch_discrete(const DiscreteInstance& instance, const CostModel& cost,
                                 PlanMode mode) {
  cost.validate();
  const int n = static_cast<int>(instance.candidates.size());
  for (const auto& c : instance.candidates)
    if (c.fidelity < 0 || c.fidelity >= cost.num_fidelities())
      throw ContractError("plan_batch_discrete: candidate fidelity out of range");

  // Evaluation order implements the tie-break: lower fidelity, then lower
  // grid index, first strictly-better score wins.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ca = instance.candidates[a];
    const auto& cb = instance.candidates[b];
    if (ca.fidelity != cb.fidelity) return ca.fidelity < cb.fidelity;
    return ca.grid_index < cb.grid_index;
  });

  DiscretePlan plan;
  plan.counts.assign(n, 0);
  Rational spent(0);
  double current = n > 0 ? instance.value(plan.counts) : 0.0;
  const long max_steps =
      n > 0 ? floor_ratio(cost.budget, cost.lambdas.front()) + 1 : 0;

  for (long step = 0; step < max_steps; ++step) {
    if (!(spent <= cost.budget)) break;

    bool all_affordable = true;
    for (int m = 0; m < cost.num_fidelities(); ++m)
      if (!cost.affordable(m, spent)) all_affordable = false;

    int best = -1;
    double best_score = 0.0;
    for (int i : order) {
      const int m = instance.candidates[i].fidelity;
      if (mode == PlanMode::kStandard && !cost.affordable(m, spent)) continue;
      plan.counts[i] += 1;
      const double gain = instance.value(plan.counts) - current;
      plan.counts[i] -= 1;
      const double score = gain / cost.lambda(m);
      if (best < 0 || score > best_score) {
        best = i;
        best_score = score;
      }
    }
    if (best < 0) {
      plan.infeasible = plan.picks.empty();
      break;
    }

    const int m = instance.candidates[best].fidelity;
    plan.counts[best] += 1;
    plan.picks.push_back(best);
    spent += cost.lambdas[m];
    current = instance.value(plan.counts);
    plan.steps.push_back(DiscreteStep{best, spent, current, all_affordable});

    if (mode == PlanMode::kExceedOnce && !(spent <= cost.budget)) break;
  }

  plan.total_cost = spent;
  plan.value = current;
  return plan;
}

namespace {

void enumerate(const DiscreteInstance& instance, const CostModel& cost, int start,
               std::vector<int>& counts, const Rational& spent, std::size_t max_sets,
               BruteForceResult& best, std::size_t& visited) {
  const int n = static_cast<int>(instance.candidates.size());
  for (int i = start; i < n; ++i) {
    const Rational& lambda = cost.lambdas[instance.candidates[i].fidelity];
    if (!(lambda <= cost.budget - spent)) continue;
    if (++visited > max_sets)
      throw SizeError("brute_force_opt: feasible family exceeds the enumeration guard");
    counts[i] += 1;
    const double v = instance.value(counts);
    if (v > best.value) {
      best.value = v;
      best.counts = counts;
    }
    enumerate(instance, cost, i, counts, spent + lambda, max_sets, best, visited);
    counts[i] -= 1;
  }
}

}  // namespace

BruteForceResult brute_force_opt(const DiscreteInstance& instance, const CostModel& cost,
                                 std::size_t max_sets) {
  cost.validate();
  BruteForceResult best;
  best.counts.assign(instance.candidates.size(), 0);
  best.value = instance.candidates.empty() ? 0.0 : instance.value(best.counts);

  std::vector<int> counts(instance.candidates.size(), 0);
  std::size_t visited = 0;
  enumerate(instance, cost, 0, counts, Rational(0), max_sets, best, visited);
  best.sets_visited = visited;
  return best;
}

}  // namespace bmfal
