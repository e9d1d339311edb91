#include "doctest.h"
#include "nesy/reasoner.hpp"
#include "nesy/tasks.hpp"

using namespace nesy;

namespace {

CardinalitySystem sys(int d, std::vector<CardinalityConstraint> cs) {
  CardinalitySystem s;
  s.space.latent_bits = d;
  s.constraints = std::move(cs);
  return s;
}

// Independent enumeration: minimal cost over all completions, -1 when none.
double enumerate_cost(const InferenceProblem& p) {
  const int d = p.system.dim();
  double best = -1;
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << d); ++code) {
    Assignment a(static_cast<std::size_t>(d));
    bool ok = true;
    for (int j = 0; j < d; ++j) {
      a[j] = static_cast<std::uint8_t>((code >> j) & 1U);
      if (!p.fixed.empty() && p.fixed[j] >= 0 && p.fixed[j] != a[j]) ok = false;
    }
    if (!ok || !evaluate(p.system, a).satisfied) continue;
    double cost = 0;
    for (int j = 0; j < d && !p.preferences.empty(); ++j)
      if (a[j] != p.preferences[j].value) cost += p.preferences[j].weight;
    if (best < 0 || cost < best) best = cost;
  }
  return best;
}

InferenceProblem random_problem(RngState& rng) {
  const int d = 2 + static_cast<int>(rng.below(15));
  const int m = static_cast<int>(rng.below(9));
  InferenceProblem p;
  p.system.space.latent_bits = d;
  for (int i = 0; i < m; ++i) {
    CardinalityConstraint c;
    for (int j = 0; j < d; ++j)
      if (rng.bernoulli(0.4)) c.support.push_back(j);
    if (c.support.empty()) c.support.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(d))));
    c.lo = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.width()) + 1));
    c.hi = c.lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.width() - c.lo) + 1));
    p.system.constraints.push_back(c);
  }
  for (int j = 0; j < d; ++j)
    p.preferences.push_back({static_cast<std::uint8_t>(rng.below(2)), rng.uniform()});
  return p;
}

}  // namespace

TEST_CASE("solve: examples") {
  InferenceProblem p;
  p.system = sys(2, {{{0, 1}, 2, 2}});
  p.preferences = {{1, 0.8}, {0, 0.3}};
  const Solution s = solve(p);
  CHECK(s.status == SolveStatus::Optimal);
  CHECK(s.assignment == Assignment{1, 1});
  CHECK(s.cost == doctest::Approx(0.3));

  InferenceProblem unit;
  unit.system = sys(1, {{{0}, 1, 1}});
  unit.preferences = {{0, 5.0}};
  CHECK(solve(unit).assignment == Assignment{1});

  InferenceProblem contra;
  contra.system = sys(1, {{{0}, 1, 1}, {{0}, 0, 0}});
  CHECK(solve(contra).status == SolveStatus::Infeasible);
  CHECK_FALSE(satisfiable(contra.system, {}));
}

TEST_CASE("solve: fixed values") {
  InferenceProblem p;
  p.system = sys(3, {{{0, 1, 2}, 1, 1}});
  p.fixed = {1, -1, -1};
  p.preferences = {{0, 1.0}, {1, 1.0}, {1, 1.0}};
  const Solution s = solve(p);
  CHECK(s.assignment == Assignment{1, 0, 0});
  CHECK(s.cost == doctest::Approx(3.0));
  p.fixed = {1, 1, -1};
  CHECK_THROWS_AS(solve(p), Error);
  CHECK_FALSE(satisfiable(p.system, p.fixed));
}

TEST_CASE("solve: agrees with enumeration on random instances") {
  RngState rng(77);
  for (int k = 0; k < 60; ++k) {
    const InferenceProblem p = random_problem(rng);
    const double want = enumerate_cost(p);
    const Solution s = solve(p);
    if (want < 0) {
      CHECK(s.status == SolveStatus::Infeasible);
      continue;
    }
    CHECK(s.status == SolveStatus::Optimal);
    CHECK(s.cost == doctest::Approx(want).epsilon(1e-12));
    CHECK(evaluate(p.system, s.assignment).satisfied);
    const Solution b = brute_force_solve(p);
    CHECK(b.cost == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("brute_force_solve: empty system and fully fixed inputs") {
  InferenceProblem p;
  p.system = sys(3, {});
  p.preferences = {{1, 0.2}, {0, 0.9}, {1, 0.4}};
  const Solution s = brute_force_solve(p);
  CHECK(s.assignment == Assignment{1, 0, 1});
  CHECK(s.cost == 0.0);

  p.system = sys(3, {{{0, 1}, 1, 1}});
  p.fixed = {1, 0, 1};
  CHECK(brute_force_solve(p).status == SolveStatus::Optimal);
  p.fixed = {1, 1, 1};
  CHECK_THROWS_AS(brute_force_solve(p), Error);
}

TEST_CASE("solve: budgets") {
  const CardinalitySystem gt = sudoku_ground_truth(4);
  InferenceProblem p;
  p.system = gt;
  p.limits.node_budget = 1;
  const Solution s = solve(p);
  CHECK((s.status == SolveStatus::BudgetExceeded || s.status == SolveStatus::Feasible));
  p.limits.node_budget = 10'000'000;
  const Solution full = solve(p);
  CHECK(full.status == SolveStatus::Optimal);
  CHECK(evaluate(gt, full.assignment).satisfied);
}

TEST_CASE("preferences_from_probabilities") {
  const auto prefs = preferences_from_probabilities({0.9, 0.2, 0.5});
  CHECK(prefs[0].value == 1);
  CHECK(prefs[0].weight == doctest::Approx(0.8));
  CHECK(prefs[1].value == 0);
  CHECK(prefs[1].weight == doctest::Approx(0.6));
  CHECK(prefs[2].weight == 0.0);
}

TEST_CASE("parse_opb: examples") {
  const CardinalitySystem one = parse_opb("+1 x1 +1 x2 >= 1 ;\n");
  REQUIRE(one.size() == 1);
  CHECK(one.constraints[0] == CardinalityConstraint{{0, 1}, 1, 2});
  const CardinalitySystem pair = parse_opb("* #variable= 3\n+1 x1 +1 x3 >= 1 ;\n-1 x1 -1 x3 >= -1 ;\n");
  CHECK(pair.dim() == 3);
  REQUIRE(pair.size() == 1);
  CHECK(pair.constraints[0] == CardinalityConstraint{{0, 2}, 1, 1});
  try {
    parse_opb("+1 x1 +1 y2 >= 1 ;\n");
    FAIL("expected SyntaxError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SyntaxError);
  }
  CHECK_THROWS_AS(parse_opb("+2 x1 >= 1 ;\n"), Error);
  const CardinalitySystem gt = sudoku_ground_truth(4);
  CHECK(canonical(parse_opb(export_opb(gt), gt.space)) == canonical(gt));
}

TEST_CASE("projected_equivalence: auxiliary variable projected away") {
  // x0 = x1 via an auxiliary a: x0 + a = 1 and x1 + a = 1.
  CardinalitySystem s = sys(3, {{{0, 2}, 1, 1}, {{1, 2}, 1, 1}});
  const auto r = projected_equivalence(s, {0, 1}, [](const Assignment& a) { return a[0] == a[1]; });
  CHECK(r.equivalent);
  const auto w = projected_equivalence(s, {0, 1}, [](const Assignment& a) { return a[0] != a[1]; });
  CHECK_FALSE(w.equivalent);
}
