#pragma once

// Dense linear algebra and randomness shared by every other module.
//
// Matrices are plain Eigen dense types; the free functions below accept any
// Eigen expression and evaluate it once.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "nesy/error.hpp"

namespace nesy {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using BoolMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using BoolVector = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;

inline constexpr double kPivotTolerance = 1e-12;

/// Infinity norm (max absolute row sum).
template <typename Derived>
typename Derived::Scalar inf_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Cholesky factorization of a symmetric positive definite matrix, kept so
/// the same factor can be applied to several right-hand sides.
template <typename Scalar>
class SpdFactor {
 public:
  SpdFactor() = default;

  template <typename Derived>
  explicit SpdFactor(const Eigen::MatrixBase<Derived>& a, Scalar pivot_tol = Scalar(kPivotTolerance)) {
    compute(a, pivot_tol);
  }

  template <typename Derived>
  SpdFactor& compute(const Eigen::MatrixBase<Derived>& a, Scalar pivot_tol = Scalar(kPivotTolerance)) {
    const MatrixX<Scalar> m = a;
    if (m.rows() != m.cols()) throw Error(ErrorKind::ShapeMismatch, "spd_solve: matrix is not square");
    const Scalar scale = std::max<Scalar>(Scalar(1), m.cwiseAbs().maxCoeff());
    if (((m - m.transpose()).cwiseAbs().maxCoeff()) > Scalar(1e-12) * scale)
      throw Error(ErrorKind::NotSymmetric, "spd_solve: matrix is not symmetric");
    llt_.compute(m);
    if (llt_.info() != Eigen::Success)
      throw Error(ErrorKind::NotPositiveDefinite, "spd_solve: non-positive pivot encountered");
    const auto diag = llt_.matrixLLT().diagonal();
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
      if (!(diag(i) * diag(i) > pivot_tol))
        throw Error(ErrorKind::NotPositiveDefinite,
                    "spd_solve: pivot " + std::to_string(i) + " below tolerance");
    }
    return *this;
  }

  Eigen::Index size() const { return llt_.rows(); }

  template <typename Derived>
  MatrixX<Scalar> solve(const Eigen::MatrixBase<Derived>& b) const {
    if (b.rows() != llt_.rows()) throw Error(ErrorKind::ShapeMismatch, "spd_solve: rhs row count mismatch");
    return llt_.solve(b);
  }

 private:
  Eigen::LLT<MatrixX<Scalar>> llt_;
};

/// Solves A X = B for symmetric positive definite A.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> spd_solve(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  return SpdFactor<typename DerivedA::Scalar>(a).solve(b);
}

/// Numerical rank: pivots with magnitude above tol * ||M||_inf under Gaussian
/// elimination with partial pivoting.
template <typename Derived>
Eigen::Index rank(const Eigen::MatrixBase<Derived>& m, double tol = 1e-6) {
  MatrixX<double> a = m.template cast<double>();
  if (a.size() == 0) return 0;
  const double threshold = tol * static_cast<double>(inf_norm(a));
  if (threshold == 0) return 0;
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  Eigen::Index r = 0;
  for (Eigen::Index c = 0; c < cols && r < rows; ++c) {
    Eigen::Index pivot = r;
    double best = std::abs(a(r, c));
    for (Eigen::Index i = r + 1; i < rows; ++i) {
      if (std::abs(a(i, c)) > best) {
        best = std::abs(a(i, c));
        pivot = i;
      }
    }
    if (best <= threshold) continue;
    a.row(r).swap(a.row(pivot));
    for (Eigen::Index i = r + 1; i < rows; ++i) {
      const double f = a(i, c) / a(r, c);
      if (f != 0) a.row(i).tail(cols - c) -= f * a.row(r).tail(cols - c);
    }
    ++r;
  }
  return r;
}

/// Counter-based SplitMix64 stream: output k is mix(seed + (k+1) * golden).
/// The whole state is (seed, position), so it checkpoints as two integers.
class RngState {
 public:
  RngState() = default;
  explicit RngState(std::uint64_t seed, std::uint64_t position = 0) : seed_(seed), position_(position) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++position_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    const double u = lo + (hi - lo) * uniform();
    return u < hi ? u : std::nextafter(hi, lo);
  }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "RngState::below: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream; used to give each sample or split its own seed.
  RngState fork(std::uint64_t stream) const {
    RngState mixer(seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1)), 0);
    return RngState(mixer.next_u64(), 0);
  }

  friend bool operator==(const RngState&, const RngState&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t position_ = 0;
};

/// Row-major fill of i.i.d. uniform draws on [lo, hi).
inline Matrix uniform_matrix(RngState& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  if (!(lo < hi)) throw Error(ErrorKind::InvalidArgument, "uniform_matrix: requires lo < hi");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

template <typename T>
void shuffle(RngState& rng, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace nesy
