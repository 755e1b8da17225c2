#include <doctest.h>

#include <random>

#include "bmfal/planner.hpp"
#include "instances.hpp"
#include "oracles.hpp"

using namespace bmfal;

namespace {

constexpr double kApproxFactor = 1.0 - 1.0 / M_E;

// gains with coverage semantics: a duplicate pick adds nothing
DiscreteInstance modular_instance() {
  DiscreteInstance inst;
  inst.candidates = {{0, 2}, {1, 0}, {2, 1}};  // a, b, c
  const std::vector<double> gains{10.0, 6.0, 5.0};
  inst.value = [gains](const std::vector<int>& counts) {
    double v = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i)
      if (counts[i] > 0) v += gains[i];
    return v;
  };
  return inst;
}

MfModel toy_model(std::uint64_t seed) {
  ModelConfig c;
  c.num_fidelities = 2;
  c.input_dim = 2;
  c.latent_dims = {2, 2};
  c.output_dims = {3, 3};
  c.hidden_width = 4;
  MfModel model(c, DomainBox::unit(2), seed);
  std::mt19937_64 gen(derive_seed(seed, 1));
  for (int m = 0; m < 2; ++m) {
    auto& raw = model.fidelity(m).chol_raw;
    raw = oracle::random_matrix(gen, raw.rows(), raw.cols(), 0.3);
  }
  return model;
}

OptimizerConfig quick_optimizer() {
  OptimizerConfig oc;
  oc.restarts = 2;
  oc.max_iters = 15;
  return oc;
}

}  // namespace

TEST_SUITE("greedy_planner") {

TEST_CASE("brute force agrees with the hand-enumerated modular example") {
  // costs: a=10, b=5, c=5 via lambdas [5, 5, 10] and fidelities [2, 0, 1]
  const CostModel cost({Rational(5), Rational(5), Rational(10)}, Rational(10));
  const DiscreteInstance inst = modular_instance();
  const auto opt = brute_force_opt(inst, cost);
  CHECK(opt.value == doctest::Approx(11.0));
  CHECK(opt.counts == std::vector<int>{0, 1, 1});

  SUBCASE("weighted greedy walks b then c and matches the optimum") {
    const auto plan = plan_batch_discrete(inst, cost, PlanMode::kStandard);
    REQUIRE(plan.picks.size() == 2);
    CHECK(plan.picks[0] == 1);  // ratio 6/5
    CHECK(plan.picks[1] == 2);  // ratio 5/5
    CHECK(plan.value == doctest::Approx(11.0));
    CHECK(plan.total_cost == Rational(10));
  }
}

TEST_CASE("empty grids yield an empty optimum and an infeasible plan") {
  DiscreteInstance inst;
  inst.value = [](const std::vector<int>&) { return 0.0; };
  const CostModel cost({1.0}, 5.0);
  const auto opt = brute_force_opt(inst, cost);
  CHECK(opt.value == 0.0);
  CHECK(opt.counts.empty());
  const auto plan = plan_batch_discrete(inst, cost, PlanMode::kStandard);
  CHECK(plan.picks.empty());
}

TEST_CASE("a single affordable candidate is picked") {
  DiscreteInstance inst;
  inst.candidates = {{0, 0}};
  inst.value = [](const std::vector<int>& c) { return c[0] > 0 ? 1.0 : 0.0; };
  const CostModel cost({2.0}, 3.0);
  const auto plan = plan_batch_discrete(inst, cost, PlanMode::kStandard);
  REQUIRE(plan.picks.size() == 1);
  CHECK(plan.picks[0] == 0);
}

TEST_CASE("score ties break toward lower fidelity, then lower grid index") {
  DiscreteInstance inst;
  // candidates 0 and 1 tie at ratio 1.0; 1 has the lower fidelity.
  // candidates 2 and 3 tie at equal fidelity; lower grid index wins.
  inst.candidates = {{0, 1}, {1, 0}, {2, 0}, {3, 0}};
  inst.value = [](const std::vector<int>& c) {
    double v = 0.0;
    if (c[0] > 0) v += 3.0;  // cost 3 -> ratio 1
    if (c[1] > 0) v += 1.0;  // cost 1 -> ratio 1
    if (c[2] > 0) v += 0.5;
    if (c[3] > 0) v += 0.5;
    return v;
  };
  const CostModel cost({1.0, 3.0}, 100.0);
  const auto plan = plan_batch_discrete(inst, cost, PlanMode::kStandard);
  REQUIRE(plan.picks.size() >= 3);
  CHECK(plan.picks[0] == 1);
  CHECK(plan.picks[1] == 0);
  CHECK(plan.picks[2] == 2);  // beats 3 on grid index
}

TEST_CASE("enumeration guard trips on oversized families") {
  DiscreteInstance inst;
  for (int i = 0; i < 12; ++i) inst.candidates.push_back({i, 0});
  inst.value = [](const std::vector<int>&) { return 0.0; };
  const CostModel cost({1.0}, 12.0);
  CHECK_THROWS_AS(brute_force_opt(inst, cost, 1000), SizeError);
}

TEST_CASE("guarantee properties hold on random submodular instances") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = instances::random_instance(gen);
    const double lam_top = g.cost.lambdas.back().to_double();
    const double budget = g.cost.budget.to_double();

    const auto standard = plan_batch_discrete(g.instance, g.cost, PlanMode::kStandard);
    const auto exceed = plan_batch_discrete(g.instance, g.cost, PlanMode::kExceedOnce);
    const auto opt_full = brute_force_opt(g.instance, g.cost);

    // Theorem-style prefix bound while every fidelity stayed affordable
    bool chain_ok = true;
    for (const auto& step : standard.steps) {
      if (!step.unrestricted) chain_ok = false;
      if (!chain_ok) break;
      const CostModel prefix_cost(g.cost.lambdas, step.cost_after);
      const auto opt_prefix = brute_force_opt(g.instance, prefix_cost);
      CHECK(step.value_after >= kApproxFactor * opt_prefix.value - 1e-9);
    }

    // exceed-once bound at the full budget
    CHECK(exceed.value >= kApproxFactor * opt_full.value - 1e-9);
    // appendix bound for the standard mode at the full budget
    const double slack = (1.0 - lam_top / budget) * kApproxFactor;
    CHECK(standard.value >= slack * opt_full.value - 1e-9);

    // budget discipline
    CHECK(standard.total_cost <= g.cost.budget);
    if (!exceed.steps.empty()) {
      for (std::size_t s = 0; s + 1 < exceed.steps.size(); ++s)
        CHECK(exceed.steps[s].cost_after <= g.cost.budget);
    }
  }
}

TEST_CASE("budget safety under random rational costs") {
  std::mt19937_64 gen(77);
  std::uniform_int_distribution<int> num(1, 24), den(1, 8), nb(2, 40);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = instances::random_instance(gen);
    // replace the integer costs with random rationals, keeping them sorted
    std::vector<Rational> lams;
    for (std::size_t m = 0; m < g.cost.lambdas.size(); ++m) lams.push_back(Rational(num(gen), den(gen)));
    std::sort(lams.begin(), lams.end());
    const Rational budget = lams.back() * Rational(nb(gen), 2);
    const CostModel cost(lams, budget);

    const auto standard = plan_batch_discrete(g.instance, cost, PlanMode::kStandard);
    CHECK(standard.total_cost <= cost.budget);

    const auto exceed = plan_batch_discrete(g.instance, cost, PlanMode::kExceedOnce);
    int overshoots = 0;
    for (std::size_t s = 0; s < exceed.steps.size(); ++s) {
      if (!(exceed.steps[s].cost_after <= cost.budget)) {
        ++overshoots;
        CHECK(s + 1 == exceed.steps.size());  // only the final pick may overshoot
      }
    }
    CHECK(overshoots <= 1);
  }
}

TEST_CASE("iteration count stays within the budget-over-cheapest bound") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = instances::random_instance(gen);
    const auto plan = plan_batch_discrete(g.instance, g.cost, PlanMode::kStandard);
    const long bound =
        static_cast<long>(g.cost.budget.to_double() / g.cost.lambdas.front().to_double()) + 1;
    CHECK(static_cast<long>(plan.picks.size()) <= bound);
  }
}

TEST_CASE("continuous planner: nothing affordable gives an infeasible empty plan") {
  const MfModel model = toy_model(5);
  const auto mc = McInputSet::draw(model.domain(), 4, 3);
  const CostModel cost({1.0, 3.0}, 0.5);  // below the cheapest fidelity
  const Plan plan = plan_batch(model, cost, quick_optimizer(), mc, PlanMode::kStandard);
  CHECK(plan.queries.empty());
  CHECK(plan.infeasible);
}

TEST_CASE("continuous planner: tight budgets only fit cheap queries") {
  const MfModel model = toy_model(7);
  const auto mc = McInputSet::draw(model.domain(), 4, 5);
  const CostModel cost({1.0, 3.0}, 2.0);
  const Plan plan = plan_batch(model, cost, quick_optimizer(), mc, PlanMode::kStandard);
  REQUIRE(plan.queries.size() == 2);
  CHECK(plan.queries[0].fidelity == 0);
  CHECK(plan.queries[1].fidelity == 0);
  CHECK(plan.total_cost == Rational(2));
  CHECK_FALSE(plan.infeasible);
}

TEST_CASE("continuous planner respects the budget in standard mode") {
  const MfModel model = toy_model(11);
  const auto mc = McInputSet::draw(model.domain(), 4, 7);
  const CostModel cost({1.0, 3.0}, 7.0);
  const Plan plan = plan_batch(model, cost, quick_optimizer(), mc, PlanMode::kStandard);
  CHECK(plan.total_cost <= cost.budget);
  CHECK(plan.queries.size() <= 8);
  // every step carries diagnostics
  CHECK(plan.steps.size() == plan.queries.size());
}

TEST_CASE("exceed-once overshoots at most once and only at the end") {
  const MfModel model = toy_model(13);
  const auto mc = McInputSet::draw(model.domain(), 4, 9);
  const CostModel cost({1.0, 3.0}, 5.0);
  const Plan plan = plan_batch(model, cost, quick_optimizer(), mc, PlanMode::kExceedOnce);
  Rational spent(0);
  for (std::size_t i = 0; i < plan.queries.size(); ++i) {
    spent += cost.lambdas[plan.queries[i].fidelity];
    if (!(spent <= cost.budget)) CHECK(i + 1 == plan.queries.size());
  }
  CHECK(spent == plan.total_cost);
}

}  // TEST_SUITE
