#pragma once

// Symbol grounding: per sample, the free coordinates of s solve
//
//   min ||W s - b||^2 + alpha ||s_F - a_F||^2 + t2 (e - 2 s_F^k)'s_F
//
// with the clamped coordinates held at their anchor values, followed by a
// clamp into [0,1].

#include <vector>

#include "nesy/constraints.hpp"
#include "nesy/dcopt.hpp"

namespace nesy {

struct GroundingBatch {
  Matrix S;               // N x d, current grounding
  Matrix anchor;          // N x d, (f(x); y) or the previous grounding
  std::vector<char> free; // length d; true where the coordinate is grounded
  double alpha = 0.5;
  AnnealSchedule anneal;  // drives t2

  Eigen::Index samples() const { return S.rows(); }
  Eigen::Index dim() const { return S.cols(); }
};

/// Batch whose grounding starts at the anchor; `free` defaults to every coordinate.
GroundingBatch make_grounding(const Matrix& anchor, double alpha, std::vector<char> free = {});

/// Eigenvalue-free threshold for t2: largest diagonal of W_F'W_F + alpha I.
double grounding_threshold(const Matrix& W, const std::vector<char>& free, double alpha);

GroundingBatch ground_step(GroundingBatch gb, const Matrix& W, const Vector& b);

/// Per-row objective at fixed (W, b, t2) evaluated at `S`, linearization point `previous`.
Vector grounding_objective(const GroundingBatch& gb, const Matrix& S, const Matrix& previous, const Matrix& W,
                           const Vector& b);

BoolMatrix binarize_grounding(const GroundingBatch& gb, double eps = 1e-3);

/// Latent-segment slice of the grounding (targets for the perception network).
Matrix make_targets(const GroundingBatch& gb, const VariableSpace& space);

/// Validates the auxiliary-variable budget: auxiliaries may not exceed the
/// number of non-auxiliary logical variables.
void check_auxiliary_budget(int auxiliary, int logical);

}  // namespace nesy
