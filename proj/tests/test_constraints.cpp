#include <algorithm>

#include "doctest.h"
#include "nesy/constraints.hpp"
#include "nesy/dcopt.hpp"
#include "nesy/reasoner.hpp"
#include "nesy/tasks.hpp"

using namespace nesy;

namespace {

VariableSpace plain_space(int d) {
  VariableSpace s;
  s.latent_bits = d;
  return s;
}

CardinalityConstraint cc(std::vector<int> support, int lo, int hi) { return {std::move(support), lo, hi}; }

// Smallest-width interval covering at least ceil(k*n) values, by enumeration.
Bounds interval_oracle(const std::vector<int>& sums, double k) {
  const int lo_v = *std::min_element(sums.begin(), sums.end());
  const int hi_v = *std::max_element(sums.begin(), sums.end());
  const double need = k * static_cast<double>(sums.size()) - 1e-9;
  Bounds best{lo_v, hi_v};
  for (int lo = lo_v; lo <= hi_v; ++lo)
    for (int hi = lo; hi <= hi_v; ++hi) {
      const auto c = std::count_if(sums.begin(), sums.end(), [&](int s) { return lo <= s && s <= hi; });
      if (static_cast<double>(c) >= need && hi - lo < best.hi - best.lo) best = {lo, hi};
    }
  return best;
}

}  // namespace

TEST_CASE("binarize: tolerance and NotBoolean") {
  Matrix m(1, 2);
  m << 0.9996, 0.0004;
  const BoolMatrix b = binarize(m);
  CHECK(b(0, 0) == 1);
  CHECK(b(0, 1) == 0);
  Matrix bad(1, 1);
  bad << 0.4;
  try {
    binarize(bad);
    FAIL("expected NotBoolean");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotBoolean);
  }
}

TEST_CASE("binarize: converged DC rows match the Boolean optimum") {
  // Four toy rows, each a Boolean least-squares problem with a planted vertex
  // optimum; the annealed DC iterate must land there.
  RngState rng(21);
  Matrix W(4, 5);
  for (int i = 0; i < 4; ++i) {
    BooleanQuadratic prob;
    prob.Q = uniform_matrix(rng, 8, 5, -1, 1);
    Vector planted(5);
    for (int j = 0; j < 5; ++j) planted(j) = static_cast<double>(rng.below(2));
    prob.q1 = prob.Q * planted;
    prob.q2 = planted;
    prob.tau = 0.1;
    const auto res = dc_anneal_solve(prob, Vector::Constant(5, 0.5),
                                     AnnealSchedule::for_threshold(exact_penalty_threshold(prob)));
    CHECK(res.boolean);
    W.row(i) = res.u.transpose();
    CHECK(res.u == brute_force_min(prob).u);
  }
  CHECK(booleanness_violation(W) <= 1e-3);
  CHECK_NOTHROW(binarize(W));
}

TEST_CASE("deduplicate: duplicates, empty and vacuous rows") {
  CardinalitySystem sys{plain_space(4), {cc({0, 1}, 1, 1), cc({0, 1}, 1, 1), cc({0, 1, 2, 3}, 0, 4), cc({2}, 0, 1)}};
  const CardinalitySystem d = deduplicate(sys);
  REQUIRE(d.size() == 1);
  CHECK(d.constraints[0] == cc({0, 1}, 1, 1));

  BoolMatrix w = BoolMatrix::Zero(2, 3);
  w(1, 0) = 1;
  const CardinalitySystem from = system_from_rows(plain_space(3), w, {{1, 0, 0}, {1, 1, 0}}, 1.0);
  CHECK(deduplicate(from).size() == 1);
}

TEST_CASE("estimate_bounds: examples against enumeration") {
  CHECK(estimate_bounds_from_sums({2, 2, 2}, 1.0) == Bounds{2, 2});
  CHECK(estimate_bounds_from_sums({1, 2, 3, 4, 100}, 0.8) == Bounds{1, 4});
  CHECK(interval_oracle({1, 2, 3, 4, 100}, 0.8) == Bounds{1, 4});
  RngState rng(4);
  for (int t = 0; t < 30; ++t) {
    std::vector<int> sums(1 + rng.below(12));
    for (int& s : sums) s = static_cast<int>(rng.below(8));
    for (double k : {1.0, 0.9, 0.75, 0.5}) {
      const Bounds got = estimate_bounds_from_sums(sums, k);
      const Bounds want = interval_oracle(sums, k);
      CHECK(got.hi - got.lo == want.hi - want.lo);
    }
  }
}

TEST_CASE("estimate_bounds: Sudoku row-digit constraint on solved boards") {
  SudokuConfig cfg;
  cfg.N = 20;
  cfg.seed = 3;
  const Dataset ds = gen_sudoku(cfg);
  std::vector<Assignment> boards;
  for (const auto& s : ds.samples) {
    Assignment full(64);
    for (int i = 0; i < 64; ++i) full[i] = (*s.z)[i] | s.y[i];
    boards.push_back(full);
  }
  std::vector<int> support;
  for (int c = 0; c < 4; ++c) support.push_back(sudoku_var(4, 0, c, 2));
  CHECK(estimate_bounds(support, boards, 1.0) == Bounds{1, 1});
}

TEST_CASE("evaluate: examples") {
  const CardinalitySystem empty{plain_space(2), {}};
  const Evaluation e0 = evaluate(empty, {1, 0});
  CHECK(e0.satisfied);
  CHECK(e0.sums.empty());
  const CardinalitySystem one{plain_space(2), {cc({0, 1}, 2, 2)}};
  const Evaluation e1 = evaluate(one, {1, 1});
  CHECK(e1.satisfied);
  CHECK(e1.sums == std::vector<int>{2});
  CHECK_FALSE(evaluate(one, {1, 0}).satisfied);
  CHECK_THROWS_AS(evaluate(one, {1}), Error);
}

TEST_CASE("semantic_equivalence: examples") {
  const CardinalitySystem a{plain_space(3), {cc({0, 1}, 1, 2)}};
  CHECK(semantic_equivalence(a, a).equivalent);
  const CardinalitySystem p{plain_space(1), {cc({0}, 1, 1)}};
  const CardinalitySystem q{plain_space(1), {cc({0}, 0, 0)}};
  const EquivalenceResult r = semantic_equivalence(p, q);
  CHECK_FALSE(r.equivalent);
  REQUIRE(r.witness.has_value());
  // x0 + x1 in [1,2] is the same set as "not both zero" written as two rows.
  const CardinalitySystem b{plain_space(3), {cc({0, 1}, 1, 2), cc({0, 1, 2}, 1, 3)}};
  CHECK(semantic_equivalence(a, b).equivalent);
}

TEST_CASE("export_opb: format and round trip") {
  const CardinalitySystem s{plain_space(2), {cc({0, 1}, 1, 2)}};
  const std::string opb = export_opb(s);
  CHECK(opb.find("+1 x1 +1 x2 >= 1 ;") != std::string::npos);
  CHECK(opb.find("-1 x1 -1 x2 >= -2 ;") != std::string::npos);

  const std::string empty = export_opb(CardinalitySystem{plain_space(3), {}});
  CHECK(empty.find(">=") == std::string::npos);
  CHECK(empty.rfind("* #variable= 3", 0) == 0);

  const CardinalitySystem gt = sudoku_ground_truth(4);
  CHECK(canonical(parse_opb(export_opb(gt), gt.space)) == canonical(gt));
  CHECK(export_smt2(gt).find("(check-sat)") != std::string::npos);
}

TEST_CASE("JSON round trip and validation") {
  const CardinalitySystem gt = sudoku_ground_truth(4);
  CHECK(system_from_json(to_json(gt)) == gt);
  auto j = to_json(gt);
  j["version"] = 2;
  CHECK_THROWS_AS(system_from_json(j), Error);
  CardinalitySystem bad{plain_space(2), {cc({0, 5}, 0, 1)}};
  CHECK_THROWS_AS(bad.validate(), Error);
  CardinalitySystem inverted{plain_space(2), {cc({0, 1}, 2, 1)}};
  CHECK_THROWS_AS(inverted.validate(), Error);
}

TEST_CASE("canonical ordering is a set normal form") {
  const CardinalitySystem a{plain_space(3), {cc({1, 2}, 1, 1), cc({0}, 0, 1)}};
  const CardinalitySystem b{plain_space(3), {cc({0}, 0, 1), cc({1, 2}, 1, 1)}};
  CHECK(canonical(a) == canonical(b));
}
