#pragma once

// Cardinality-constraint data model: variable spaces, hard constraints
// sum_{j in support} s_j in [lo, hi], the relaxed training-time matrix form,
// and text exports.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nesy/numkit.hpp"

namespace nesy {

using Assignment = std::vector<std::uint8_t>;

/// Layout of the logical variables: observed inputs, then latent bits, then
/// outputs. Groups mark disjoint index sets known to be one-hot.
struct VariableSpace {
  int observed_input_bits = 0;
  int latent_bits = 0;
  int output_bits = 0;
  std::vector<std::vector<int>> one_hot_groups;
  std::vector<std::string> names;

  int dim() const { return observed_input_bits + latent_bits + output_bits; }
  int latent_begin() const { return observed_input_bits; }
  int output_begin() const { return observed_input_bits + latent_bits; }

  /// Throws InvalidArgument when segments are negative or groups overlap.
  void validate() const;

  friend bool operator==(const VariableSpace&, const VariableSpace&) = default;
};

struct CardinalityConstraint {
  std::vector<int> support;  // sorted indices with weight 1
  int lo = 0;
  int hi = 0;

  int width() const { return static_cast<int>(support.size()); }
  bool vacuous() const { return lo <= 0 && hi >= width(); }
  int sum(const Assignment& s) const;
  bool satisfied_by(const Assignment& s) const {
    const int v = sum(s);
    return lo <= v && v <= hi;
  }

  friend bool operator==(const CardinalityConstraint&, const CardinalityConstraint&) = default;
  friend auto operator<=>(const CardinalityConstraint&, const CardinalityConstraint&) = default;
};

struct CardinalitySystem {
  VariableSpace space;
  std::vector<CardinalityConstraint> constraints;

  int dim() const { return space.dim(); }
  std::size_t size() const { return constraints.size(); }

  /// Checks every constraint invariant (0 <= lo <= hi <= width, support in range, sorted, nonempty).
  void validate() const;

  /// Dense 0/1 weight matrix, one row per constraint.
  Matrix weight_matrix() const;

  friend bool operator==(const CardinalitySystem&, const CardinalitySystem&) = default;
};

/// Constraints sorted lexicographically; systems equal under this ordering are
/// the same set of constraints.
CardinalitySystem canonical(CardinalitySystem sys);

enum class BiasMode { Fixed, Learned };

/// Training-time relaxation: W in [0,1]^{m x d}, least-squares targets b,
/// trust centers W0, trust weight lambda and DC weight t1.
struct RelaxedSystem {
  Matrix W;
  Vector b;
  Matrix W0;
  double lambda = 0.1;
  double t1 = 0.0;
  BiasMode b_mode = BiasMode::Fixed;

  Eigen::Index rows() const { return W.rows(); }
  Eigen::Index cols() const { return W.cols(); }
};

/// Rounded weights with the provisional bias kept for diagnostics.
struct BinarizedRows {
  BoolMatrix weights;
  Vector b;
};

/// max over entries of min(|x|, |1 - x|).
template <typename Derived>
double booleanness_violation(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0;
  return m.cwiseAbs().cwiseMin((m.array() - 1.0).abs().matrix()).maxCoeff();
}

/// Rounds each entry to {0,1}; throws NotBoolean for entries farther than eps.
BoolMatrix binarize(const Matrix& m, double eps = 1e-3);
BinarizedRows binarize_system(const RelaxedSystem& rs, double eps = 1e-3);

/// Drops all-zero rows, vacuous rows and repeated (support, lo, hi) rows,
/// keeping the first occurrence.
CardinalitySystem deduplicate(const CardinalitySystem& sys);

struct Bounds {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

/// Narrowest integer interval holding at least a fraction `coverage` of the
/// observed sums; ties go to the smaller lower end.
Bounds estimate_bounds_from_sums(std::vector<int> sums, double coverage);
Bounds estimate_bounds(const std::vector<int>& support, const std::vector<Assignment>& samples, double coverage);

/// Builds a system from binarized rows with bounds estimated on `samples`.
CardinalitySystem system_from_rows(const VariableSpace& space, const BoolMatrix& weights,
                                   const std::vector<Assignment>& samples, double coverage);

struct Evaluation {
  bool satisfied = true;
  std::vector<int> sums;
};

Evaluation evaluate(const CardinalitySystem& sys, const Assignment& s);

struct EquivalenceResult {
  bool equivalent = true;
  bool exhaustive = true;  // false: verdict over random samples only
  std::uint64_t checked = 0;
  std::optional<Assignment> witness;  // an assignment the systems disagree on
};

/// Compares the accepted assignment sets. Exhaustive for d <= max_vars,
/// otherwise over `samples` uniform draws.
EquivalenceResult semantic_equivalence(const CardinalitySystem& a, const CardinalitySystem& b, int max_vars = 24,
                                       std::uint64_t samples = 100000, std::uint64_t seed = 0);

/// OPB text; upper bounds become negated >= lines.
std::string export_opb(const CardinalitySystem& sys);
std::string export_smt2(const CardinalitySystem& sys);

nlohmann::json to_json(const VariableSpace& space);
VariableSpace space_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CardinalitySystem& sys);
CardinalitySystem system_from_json(const nlohmann::json& j);

}  // namespace nesy
