#include "nesy/dcopt.hpp"

#include <cmath>
#include <limits>

#include "nesy/constraints.hpp"

namespace nesy {

void BooleanQuadratic::validate() const {
  if (Q.rows() != q1.size() || Q.cols() != q2.size())
    throw Error(ErrorKind::ShapeMismatch, "BooleanQuadratic: Q, q1, q2 sizes disagree");
  if (tau < 0) throw Error(ErrorKind::DomainViolation, "BooleanQuadratic: tau must be >= 0");
  if (!Q.allFinite() || !q1.allFinite() || !q2.allFinite())
    throw Error(ErrorKind::DomainViolation, "BooleanQuadratic: non-finite entries");
}

Matrix BooleanQuadratic::S() const {
  Matrix s = Q.transpose() * Q;
  s.diagonal().array() += tau;
  return s;
}

Vector BooleanQuadratic::s() const { return Q.transpose() * q1 + tau * q2; }

Vector BooleanQuadratic::gradient(const Vector& u) const { return 2.0 * (S() * u - s()); }

namespace {

void check_size(const BooleanQuadratic& prob, const Vector& u) {
  if (u.size() != prob.n()) throw Error(ErrorKind::ShapeMismatch, "objective: u has the wrong length");
}

double q_value(const BooleanQuadratic& prob, const Vector& u) {
  return (prob.Q * u - prob.q1).squaredNorm() + prob.tau * (u - prob.q2).squaredNorm();
}

}  // namespace

double objective_P(const BooleanQuadratic& prob, const Vector& u) {
  check_size(prob, u);
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (u(i) != 0.0 && u(i) != 1.0) throw Error(ErrorKind::DomainViolation, "objective_P: u must be Boolean");
  return q_value(prob, u);
}

double objective_Pt(const BooleanQuadratic& prob, const Vector& u, double t) {
  check_size(prob, u);
  if ((u.array() < 0.0).any() || (u.array() > 1.0).any())
    throw Error(ErrorKind::DomainViolation, "objective_Pt: u must lie in [0,1]^n");
  return q_value(prob, u) + t * (u.sum() - u.squaredNorm());
}

double exact_penalty_threshold(const BooleanQuadratic& prob) {
  if (prob.n() == 0) return 0;
  return prob.Q.colwise().squaredNorm().maxCoeff() + prob.tau;
}

VertexMinimum brute_force_min(const BooleanQuadratic& prob, int max_n) {
  prob.validate();
  const Eigen::Index n = prob.n();
  if (n > max_n) throw Error(ErrorKind::TooLarge, "brute_force_min: n = " + std::to_string(n));
  // u_1 is the most significant position, so ascending codes walk vertices in
  // lexicographic order and a strict improvement test keeps the smallest tie.
  const Matrix S = prob.S();
  const Vector s = prob.s();
  const double constant = prob.q1.squaredNorm() + prob.tau * prob.q2.squaredNorm();
  VertexMinimum best;
  best.value = std::numeric_limits<double>::infinity();
  Vector u(n);
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t code = 0; code < total; ++code) {
    for (Eigen::Index i = 0; i < n; ++i) u(i) = static_cast<double>((code >> (n - 1 - i)) & 1U);
    const double value = u.dot(S * u) - 2.0 * s.dot(u) + constant;
    if (value < best.value) {
      best.value = value;
      best.u = u;
    }
  }
  best.value = q_value(prob, best.u);
  return best;
}

VertexMinimum box_minimize_Pt(const BooleanQuadratic& prob, double t, int grid) {
  prob.validate();
  if (grid < 1) throw Error(ErrorKind::InvalidArgument, "box_minimize_Pt: grid must be >= 1");
  const Eigen::Index n = prob.n();
  const Matrix S = prob.S();
  const Vector s = prob.s();
  // q^t(u) = u'(S - tI)u - 2 s'u + t e'u + const
  Matrix H = S;
  H.diagonal().array() -= t;
  const Vector lin = -2.0 * s + Vector::Constant(n, t);
  auto value = [&](const Vector& u) { return u.dot(H * u) + lin.dot(u); };

  Vector u = Vector::Zero(n);
  Vector best_u = u;
  double best = value(u);
  std::vector<int> digits(static_cast<std::size_t>(n), 0);
  while (true) {
    Eigen::Index i = 0;
    while (i < n && digits[i] == grid) digits[i++] = 0;
    if (i == n) break;
    ++digits[i];
    for (Eigen::Index j = 0; j < n; ++j) u(j) = static_cast<double>(digits[j]) / grid;
    const double v = value(u);
    if (v < best) {
      best = v;
      best_u = u;
    }
  }
  // Each coordinate of q^t is a 1-D quadratic with curvature 2(S_ii - t); its
  // minimum over [0,1] is either the clamped stationary point or an endpoint.
  u = best_u;
  for (int sweep = 0; sweep < 1000; ++sweep) {
    bool moved = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = H(i, i);
      const double b = 2.0 * (H.row(i).dot(u) - a * u(i)) + lin(i);
      auto f = [&](double x) { return a * x * x + b * x; };
      double x = f(0.0) <= f(1.0) ? 0.0 : 1.0;
      if (a > 0) {
        const double stat = std::clamp(-b / (2 * a), 0.0, 1.0);
        if (f(stat) < f(x)) x = stat;
      }
      if (f(x) < f(u(i)) - 1e-15 * (1 + std::abs(f(u(i))))) {
        u(i) = x;
        moved = true;
      }
    }
    if (!moved) break;
  }
  return {u, objective_Pt(prob, u, t)};
}

bool stationarity_check(const BooleanQuadratic& prob, double t, const Vector& u, double tol) {
  check_size(prob, u);
  const Vector g = prob.gradient(u);
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (g(i) * (1.0 - 2.0 * u(i)) + t < -tol) return false;
  return true;
}

bool diagonal_optimality_check(const BooleanQuadratic& prob, const Vector& u, double tol) {
  check_size(prob, u);
  const Vector g = prob.gradient(u);
  const Matrix S = prob.S();
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (g(i) * (1.0 - 2.0 * u(i)) + S(i, i) < -tol) return false;
  return true;
}

AnnealSchedule AnnealSchedule::for_threshold(double delta_max, double step_fraction, double cap_multiple,
                                             double epsilon) {
  AnnealSchedule s;
  const double scale = delta_max > 0 ? delta_max : 1.0;
  s.t = 0;
  s.step = step_fraction * scale;
  s.t_cap = cap_multiple * scale;
  s.epsilon = epsilon;
  return s;
}

AnnealSchedule anneal(AnnealSchedule s, double violation) {
  if (violation < 0) throw Error(ErrorKind::DomainViolation, "anneal: violation must be >= 0");
  if (violation > s.epsilon) s.t = std::min(s.t + s.step, s.t_cap);
  return s;
}

DcSolveResult dc_anneal_solve(const BooleanQuadratic& prob, const Vector& start, AnnealSchedule schedule,
                              int max_iterations) {
  prob.validate();
  const Eigen::Index n = prob.n();
  if (start.size() != n) throw Error(ErrorKind::ShapeMismatch, "dc_anneal_solve: start has the wrong length");
  const Matrix S = prob.S();
  const Vector s = prob.s();
  DcSolveResult res;
  res.u = start.cwiseMax(0.0).cwiseMin(1.0);
  for (int it = 0; it < max_iterations; ++it) {
    // Convex box QP: min u'Su - 2 s'u + t (e - 2 u_k)'u, solved by exact
    // coordinate descent (each 1-D problem has curvature 2 S_ii > 0).
    const Vector lin = -2.0 * s + schedule.t * (Vector::Ones(n) - 2.0 * res.u);
    Vector u = res.u;
    for (int sweep = 0; sweep < 10000; ++sweep) {
      double change = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = S(i, i);
        const double b = 2.0 * (S.row(i).dot(u) - a * u(i)) + lin(i);
        const double x = a > 0 ? std::clamp(-b / (2 * a), 0.0, 1.0) : (b < 0 ? 1.0 : 0.0);
        change = std::max(change, std::abs(x - u(i)));
        u(i) = x;
      }
      if (change < 1e-13) break;
    }
    const double step = (u - res.u).cwiseAbs().maxCoeff();
    res.u = u;
    res.iterations = it + 1;
    const double violation = booleanness_violation(res.u);
    if (violation <= schedule.epsilon && step < 1e-12) break;
    schedule = anneal(schedule, violation);
  }
  res.t = schedule.t;
  res.boolean = booleanness_violation(res.u) <= schedule.epsilon;
  if (res.boolean) res.u = res.u.array().round().matrix();
  return res;
}

BooleanQuadratic random_instance(RngState& rng, int max_n, double tau) {
  if (max_n < 1) throw Error(ErrorKind::InvalidArgument, "random_instance: max_n must be positive");
  const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_n)));
  const int p = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n + 3)));
  BooleanQuadratic prob;
  prob.Q = uniform_matrix(rng, p, n, -1.0, 1.0);
  prob.q1 = uniform_matrix(rng, p, 1, -1.0, 1.0);
  prob.q2 = uniform_matrix(rng, n, 1, 0.0, 1.0);
  prob.tau = tau;
  return prob;
}

SuiteReport proposition1_suite(std::uint64_t seed, int instances, int max_n) {
  SuiteReport rep;
  const RngState root(seed);
  for (int k = 0; k < instances; ++k) {
    RngState rng = root.fork(static_cast<std::uint64_t>(k));
    const BooleanQuadratic prob = random_instance(rng, max_n, k % 2 == 0 ? 0.1 : 1.0);
    const double t = exact_penalty_threshold(prob) + 0.1;
    const VertexMinimum box = box_minimize_Pt(prob, t);
    const VertexMinimum vertex = brute_force_min(prob);
    ++rep.total;
    if (box.u == vertex.u) ++rep.passed;
  }
  return rep;
}

SuiteReport proposition2_suite(std::uint64_t seed, int instances, int max_n, double tol) {
  SuiteReport rep;
  const RngState root(seed);
  for (int k = 0; k < instances; ++k) {
    RngState rng = root.fork(static_cast<std::uint64_t>(k));
    const BooleanQuadratic prob = random_instance(rng, max_n, k % 2 == 0 ? 0.1 : 1.0);
    const Vector start = uniform_matrix(rng, prob.n(), 1, 0.0, 1.0);
    const DcSolveResult res = dc_anneal_solve(prob, start, AnnealSchedule::for_threshold(exact_penalty_threshold(prob)));
    const VertexMinimum best = brute_force_min(prob);
    ++rep.total;
    if (res.boolean && stationarity_check(prob, res.t, res.u, tol) && diagonal_optimality_check(prob, best.u, tol))
      ++rep.passed;
  }
  return rep;
}

}  // namespace nesy
