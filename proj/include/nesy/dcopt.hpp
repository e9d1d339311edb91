#pragma once

// Boolean least-squares subproblems
//   (P)   min_{u in {0,1}^n} q(u) = ||Q u - q1||^2 + tau ||u - q2||^2
//   (P_t) min_{u in [0,1]^n} q(u) + t (e'u - u'u)
// together with the exact-penalty threshold, the stationarity test for
// Boolean points, and the additive annealing controller for t.

#include <optional>

#include "nesy/numkit.hpp"

namespace nesy {

struct BooleanQuadratic {
  Matrix Q;   // p x n
  Vector q1;  // p
  Vector q2;  // n
  double tau = 0;

  Eigen::Index n() const { return Q.cols(); }
  void validate() const;

  /// S = Q'Q + tau I
  Matrix S() const;
  /// s = Q'q1 + tau q2
  Vector s() const;
  /// grad q(u) = 2 (S u - s)
  Vector gradient(const Vector& u) const;
};

double objective_P(const BooleanQuadratic& prob, const Vector& u);
double objective_Pt(const BooleanQuadratic& prob, const Vector& u, double t);

/// Largest diagonal entry of Q'Q + tau I; above it every coordinate of (P_t) is concave.
double exact_penalty_threshold(const BooleanQuadratic& prob);

struct VertexMinimum {
  Vector u;
  double value = 0;
};

/// Enumerates all 2^n vertices; ties resolve to the lexicographically smallest u.
VertexMinimum brute_force_min(const BooleanQuadratic& prob, int max_n = 24);

/// Minimizes (P_t) over the box: best point of the {0, 1/grid, ..., 1}^n lattice,
/// then exact coordinate-wise refinement until no coordinate improves.
VertexMinimum box_minimize_Pt(const BooleanQuadratic& prob, double t, int grid = 2);

/// Stationarity of a Boolean u for (P_t): [grad q(u)]_i (1 - 2u_i) + t >= -tol for all i.
bool stationarity_check(const BooleanQuadratic& prob, double t, const Vector& u, double tol = 1e-8);

/// Necessary optimality condition for a global optimum of (P):
/// [grad q(u)]_i (1 - 2u_i) + S_ii >= -tol.
bool diagonal_optimality_check(const BooleanQuadratic& prob, const Vector& u, double tol = 1e-8);

struct AnnealSchedule {
  double t = 0;
  double step = 0.05;
  double epsilon = 1e-3;
  double t_cap = 1.0;

  /// Default schedule scaled to a subproblem's exact-penalty threshold.
  static AnnealSchedule for_threshold(double delta_max, double step_fraction = 0.05, double cap_multiple = 10.0,
                                      double epsilon = 1e-3);
};

/// t' = min(t + step, t_cap) while the violation exceeds epsilon.
AnnealSchedule anneal(AnnealSchedule s, double booleanness_violation);

/// Result of the annealed DC iteration on a single Boolean quadratic.
struct DcSolveResult {
  Vector u;
  double t = 0;
  int iterations = 0;
  bool boolean = false;
};

/// Successive convex approximation: each step minimizes
/// q(u) + t (e - 2 u_k)'u over the box exactly (projected coordinate descent),
/// then anneals t by the booleanness of the iterate.
DcSolveResult dc_anneal_solve(const BooleanQuadratic& prob, const Vector& start, AnnealSchedule schedule,
                              int max_iterations = 2000);

/// Seeded random instance: n in [1, max_n], p in [1, n + 3], Q and q1 uniform
/// on [-1, 1], q2 uniform on [0, 1].
BooleanQuadratic random_instance(RngState& rng, int max_n, double tau);

struct SuiteReport {
  int passed = 0;
  int total = 0;
};

/// Exact-penalty equivalence: the box minimizer of (P_t) at t = delta_max + 0.1
/// coincides with the vertex brute-force minimizer of (P). tau alternates 0.1 / 1.
SuiteReport proposition1_suite(std::uint64_t seed, int instances, int max_n = 10);

/// Stationarity: the annealed DC solver returns a Boolean point that passes
/// stationarity_check at its final t, and the brute-force optimum passes the
/// diagonal optimality condition.
SuiteReport proposition2_suite(std::uint64_t seed, int instances, int max_n = 10, double tol = 1e-8);

}  // namespace nesy
