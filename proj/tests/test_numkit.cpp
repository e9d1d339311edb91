#include <cstdint>
#include <vector>

#include "doctest.h"
#include "nesy/numkit.hpp"
#include "nesy/tasks.hpp"

using namespace nesy;

namespace {

// Plain Gaussian elimination with partial pivoting, written without Eigen solvers.
Matrix gauss_solve(Matrix a, Matrix b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index p = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    a.row(c).swap(a.row(p));
    b.row(c).swap(b.row(p));
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (Eigen::Index k = c; k < n; ++k) a(r, k) -= f * a(c, k);
      for (Eigen::Index k = 0; k < b.cols(); ++k) b(r, k) -= f * b(c, k);
    }
  }
  Matrix x(n, b.cols());
  for (Eigen::Index r = n - 1; r >= 0; --r)
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      double s = b(r, k);
      for (Eigen::Index j = r + 1; j < n; ++j) s -= a(r, j) * x(j, k);
      x(r, k) = s / a(r, r);
    }
  return x;
}

// Rank over the integers modulo a large prime; equals the rational rank of a
// small 0/1 matrix unless the prime divides every maximal nonzero minor.
long rank_mod_p(const Matrix& m) {
  const std::int64_t p = 1'000'000'007;
  std::vector<std::vector<std::int64_t>> a(static_cast<std::size_t>(m.rows()),
                                           std::vector<std::int64_t>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) a[i][j] = static_cast<std::int64_t>(m(i, j)) % p;
  auto power = [&](std::int64_t b, std::int64_t e) {
    std::int64_t r = 1;
    b %= p;
    for (; e; e >>= 1, b = b * b % p)
      if (e & 1) r = r * b % p;
    return r;
  };
  long rank = 0;
  const std::size_t rows = a.size(), cols = rows ? a[0].size() : 0;
  for (std::size_t c = 0; c < cols && static_cast<std::size_t>(rank) < rows; ++c) {
    std::size_t piv = static_cast<std::size_t>(rank);
    while (piv < rows && a[piv][c] == 0) ++piv;
    if (piv == rows) continue;
    std::swap(a[piv], a[static_cast<std::size_t>(rank)]);
    auto& top = a[static_cast<std::size_t>(rank)];
    const std::int64_t inv = power(top[c], p - 2);
    for (std::size_t r = 0; r < rows; ++r) {
      if (r == static_cast<std::size_t>(rank) || a[r][c] == 0) continue;
      const std::int64_t f = a[r][c] * inv % p;
      for (std::size_t k = c; k < cols; ++k) a[r][k] = ((a[r][k] - f * top[k]) % p + p) % p;
    }
    ++rank;
  }
  return rank;
}

}  // namespace

TEST_CASE("spd_solve: identity returns the right-hand side") {
  RngState rng(3);
  const Matrix B = uniform_matrix(rng, 3, 4, -1, 1);
  CHECK((spd_solve(Matrix::Identity(3, 3), B) - B).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("spd_solve: 2x2 example") {
  Matrix A(2, 2);
  A << 4, 2, 2, 3;
  const Matrix X = spd_solve(A, Matrix::Ones(2, 1));
  CHECK(X(0, 0) == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(X(1, 0) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("spd_solve: agrees with Gaussian elimination on regularized normal matrices") {
  RngState rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix D = uniform_matrix(rng, 30, 12, 0, 1);
    const Matrix A = D.transpose() * D + 0.1 * Matrix::Identity(12, 12);
    const Matrix B = uniform_matrix(rng, 12, 3, -1, 1);
    CHECK((spd_solve(A, B) - gauss_solve(A, B)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("spd_solve: rejects bad matrices") {
  Matrix ns(2, 2);
  ns << 1, 2, 0, 1;
  CHECK_THROWS_AS(SpdFactor<double>{ns}, Error);
  try {
    SpdFactor<double> f(ns);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotSymmetric);
  }
  Matrix indef(2, 2);
  indef << 1, 2, 2, 1;
  try {
    SpdFactor<double> f(indef);
    FAIL("expected NotPositiveDefinite");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
  }
  SpdFactor<double> f(Matrix::Identity(2, 2));
  CHECK_THROWS_AS(f.solve(Matrix::Ones(3, 1)), Error);
}

TEST_CASE("rank: small cases") {
  CHECK(rank(Matrix::Identity(3, 3)) == 3);
  Matrix p(2, 2);
  p << 1, 1, 2, 2;
  CHECK(rank(p) == 1);
  CHECK(rank(Matrix::Zero(3, 2)) == 0);
  CHECK(rank(Matrix(0, 0)) == 0);
}

TEST_CASE("rank: Sudoku ground-truth matrices") {
  const Matrix w4 = sudoku_ground_truth(4).weight_matrix();
  CHECK(rank(w4) == rank_mod_p(w4));
  const Matrix w9 = sudoku_ground_truth(9).weight_matrix();
  CHECK(w9.rows() == 324);
  CHECK(w9.cols() == 729);
  CHECK(rank(w9) == 249);
  CHECK(rank_mod_p(w9) == 249);
}

TEST_CASE("RngState: determinism and ranges") {
  RngState a(42), b(42);
  CHECK(uniform_matrix(a, 5, 5, 0, 1) == uniform_matrix(b, 5, 5, 0, 1));
  CHECK(a == b);

  RngState r(7);
  const Matrix m = uniform_matrix(r, 50, 50, 2, 3);
  CHECK(m.minCoeff() >= 2.0);
  CHECK(m.maxCoeff() < 3.0);
  CHECK_THROWS_AS(uniform_matrix(r, 1, 1, 1, 1), Error);

  RngState s(1);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) sum += s.uniform();
  CHECK(std::abs(sum / 100000 - 0.5) < 0.01);
}

TEST_CASE("RngState: forks are distinct and reproducible") {
  const RngState root(5);
  RngState f1 = root.fork(1), f1b = root.fork(1), f2 = root.fork(2);
  CHECK(f1.next_u64() == f1b.next_u64());
  CHECK(root.fork(1).next_u64() != f2.next_u64());
  RngState resumed(root.seed(), 0);
  for (int i = 0; i < 10; ++i) resumed.next_u64();
  RngState jumped(root.seed(), 10);
  CHECK(resumed.next_u64() == jumped.next_u64());
}

TEST_CASE("RngState: below is within range and shuffle permutes") {
  RngState r(9);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 6000; ++i) ++counts[r.below(6)];
  for (int c : counts) CHECK(c > 800);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  shuffle(r, v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(r.below(0), Error);
}
