#pragma once

// Constraint learning by the proximal point method. Each row w_i of W solves
//
//   min ||D w - b_i e||^2 + lambda ||w - w_i^0||^2 + t1 (e - 2 w_i^k)'w
//       + (1/gamma) ||w - w_i^k||^2
//
// whose normal equations share one matrix D'D + (lambda + 1/gamma) I across
// all rows; the result is clamped back into [0,1].

#include <functional>
#include <vector>

#include "nesy/constraints.hpp"
#include "nesy/dcopt.hpp"

namespace nesy {

struct LearnerState {
  RelaxedSystem rs;
  double gamma = 0.001;
  AnnealSchedule anneal;  // drives rs.t1
  long iteration = 0;
};

/// Fresh state: W = W0 drawn uniformly on [0,1), b filled with `b_init`.
LearnerState init_learner(RngState& rng, Eigen::Index m, Eigen::Index d, double b_init, BiasMode mode,
                          double lambda = 0.1, double gamma = 0.001);

/// One proximal step on the batch D (N x d).
LearnerState ppa_step(LearnerState state, const Matrix& D);

/// Same as ppa_step but reuses a precomputed factorization of
/// D'D + (lambda + 1/gamma) I and the column sums D'e (full-batch training).
struct PpaFactor {
  SpdFactor<double> factor;
  Vector column_sums;
  Eigen::Index samples = 0;
  Eigen::Index dim = 0;
  double lambda = 0;
  double gamma = 0;
};
PpaFactor factor_batch(const Matrix& D, double lambda, double gamma);
LearnerState ppa_step(LearnerState state, const Matrix& D, const PpaFactor& factor);

/// max over entries of min(|w|, |1 - w|).
double booleanness(const Matrix& W);

/// Value of the regularized row objectives summed over rows (no proximal term):
/// sum_i ||D w_i - b_i e||^2 + lambda ||w_i - w_i^0||^2 + t1 (e - 2 w_i^anchor)'w_i.
double constraint_objective(const RelaxedSystem& rs, const Matrix& D, const Matrix& anchor);

/// Least-squares fit term alone, sum_i ||D w_i - b_i e||^2 / N.
double fit_residual(const RelaxedSystem& rs, const Matrix& D);

struct SweepConfig {
  Eigen::Index rows = 32;
  double lambda = 0.1;
  double gamma = 0.001;
  double anneal_step_fraction = 0.0005;
  double anneal_cap_multiple = 10.0;
  double epsilon = 1e-3;
  int max_epochs = 40000;
  double coverage = 1.0;
  std::uint64_t seed = 0;
};

struct SweepCandidate {
  CardinalityConstraint constraint;
  int b = 0;  // sweep value that produced it
};

/// Runs fixed-b constraint learning to convergence for each b, binarizes,
/// estimates bounds on `samples`, keeps rows whose bounds contain b, and
/// returns the deduplicated union with the b that first found each row.
std::vector<SweepCandidate> b_sweep(const SweepConfig& cfg, const VariableSpace& space, const Matrix& D,
                                    const std::vector<Assignment>& samples, const std::vector<int>& b_values);

/// Runs fixed-b learning on a static batch until W is Boolean and stationary.
struct FitResult {
  LearnerState state;
  int epochs = 0;
  bool boolean = false;
};
FitResult fit_fixed_batch(LearnerState state, const Matrix& D, double anneal_step_fraction, double cap_multiple,
                          double epsilon, int max_epochs);

}  // namespace nesy
