#include "doctest.h"
#include "nesy/learner.hpp"
#include "nesy/tasks.hpp"

using namespace nesy;

namespace {

// Projected gradient descent on one row's proximal objective.
Vector gd_oracle(const Matrix& D, double b, const Vector& w0, const Vector& wk, double lambda, double t1, double gamma,
                 int steps) {
  const Eigen::Index d = D.cols();
  const Matrix H = 2 * (D.transpose() * D) + 2 * (lambda + 1 / gamma) * Matrix::Identity(d, d);
  const double step = 1.0 / H.trace();  // trace bounds the largest eigenvalue of a PSD matrix
  Vector w = Vector::Constant(d, 0.5);
  for (int i = 0; i < steps; ++i) {
    const Vector g = 2 * D.transpose() * (D * w - b * Vector::Ones(D.rows())) + 2 * lambda * (w - w0) +
                     t1 * (Vector::Ones(d) - 2 * wk) + (2 / gamma) * (w - wk);
    w = (w - step * g).cwiseMax(0.0).cwiseMin(1.0);
  }
  return w;
}

LearnerState one_row(const Vector& w, const Vector& w0, double b, double lambda, double t1, double gamma) {
  LearnerState s;
  s.rs.W = w.transpose();
  s.rs.W0 = w0.transpose();
  s.rs.b = Vector::Constant(1, b);
  s.rs.lambda = lambda;
  s.rs.t1 = t1;
  s.gamma = gamma;
  return s;
}

}  // namespace

TEST_CASE("ppa_step: least-squares fixed point") {
  Matrix D(4, 2);
  D << 1, 0, 0, 1, 1, 1, 0, 0;
  // Normal equations D'D w = D'e b with b = 1 give w = (2/3, 2/3).
  const Vector w = Vector::Constant(2, 2.0 / 3.0);
  const LearnerState s = ppa_step(one_row(w, Vector::Zero(2), 1.0, 0.0, 0.0, 0.5), D);
  CHECK((s.rs.W.row(0).transpose() - w).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ppa_step: a huge trust weight pins rows to their centers") {
  RngState rng(1);
  LearnerState s = init_learner(rng, 5, 6, 1.0, BiasMode::Fixed, 1e6, 0.001);
  const Matrix D = uniform_matrix(rng, 20, 6, 0, 1);
  s.rs.W = uniform_matrix(rng, 5, 6, 0, 1);
  s.gamma = 1e6;  // weak proximal term so the trust region decides
  const LearnerState n = ppa_step(s, D);
  CHECK((n.rs.W - n.rs.W0).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("ppa_step: matches a gradient-descent oracle") {
  Matrix D(3, 2);
  D << 1, 0, 1, 1, 0, 1;
  Vector w0(2), wk(2);
  w0 << 0.3, 0.6;
  wk << 0.4, 0.5;
  const double lambda = 0.1, t1 = 0.2, gamma = 1.0, b = 1.0;
  const Vector want = gd_oracle(D, b, w0, wk, lambda, t1, gamma, 100000);
  CHECK(want.minCoeff() > 0);  // interior, so clamping is inactive
  CHECK(want.maxCoeff() < 1);
  const LearnerState s = ppa_step(one_row(wk, w0, b, lambda, t1, gamma), D);
  CHECK((s.rs.W.row(0).transpose() - want).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ppa_step: factored and direct paths agree, output stays in the box") {
  RngState rng(2);
  const LearnerState s = init_learner(rng, 8, 5, 1.0, BiasMode::Fixed);
  const Matrix D = uniform_matrix(rng, 40, 5, 0, 1);
  LearnerState a = s, b = s;
  a.rs.t1 = b.rs.t1 = 3.0;
  a = ppa_step(a, D);
  b = ppa_step(b, D, factor_batch(D, s.rs.lambda, s.gamma));
  CHECK((a.rs.W - b.rs.W).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.rs.W.minCoeff() >= 0);
  CHECK(a.rs.W.maxCoeff() <= 1);
  CHECK_THROWS_AS(ppa_step(s, Matrix::Zero(3, 4)), Error);
}

TEST_CASE("booleanness: examples") {
  CHECK(booleanness(Matrix::Identity(3, 3)) == 0.0);
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = 0.5;
  CHECK(booleanness(m) == 0.5);
  m(0, 1) = 0.999;
  CHECK(booleanness(m) == doctest::Approx(0.001));
}

TEST_CASE("b_sweep: empty sweep and Sudoku cell constraints") {
  SweepConfig cfg;
  VariableSpace sp;
  sp.latent_bits = 3;
  CHECK(b_sweep(cfg, sp, Matrix::Zero(2, 3), {{0, 0, 0}, {0, 0, 0}}, {}).empty());

  SudokuConfig sc;
  sc.N = 400;
  sc.seed = 5;
  const Dataset ds = gen_sudoku(sc);
  Matrix D(sc.N, 64);
  std::vector<Assignment> boards;
  for (int i = 0; i < sc.N; ++i) {
    Assignment full(64);
    for (int j = 0; j < 64; ++j) {
      full[j] = ds.samples[i].z->at(j) | ds.samples[i].y[j];
      D(i, j) = full[j];
    }
    boards.push_back(full);
  }
  cfg.rows = 512;
  cfg.seed = 3;
  const auto cands = b_sweep(cfg, ds.space, D, boards, {1});
  int cells_found = 0;
  for (int cell = 0; cell < 16; ++cell) {
    CardinalityConstraint want{{cell * 4, cell * 4 + 1, cell * 4 + 2, cell * 4 + 3}, 1, 1};
    for (const auto& c : cands)
      if (c.constraint == want) {
        ++cells_found;
        break;
      }
  }
  CHECK(cells_found == 16);
}
