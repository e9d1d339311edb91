#include "nesy/grounding.hpp"

namespace nesy {

namespace {

struct Split {
  std::vector<Eigen::Index> free;
  std::vector<Eigen::Index> fixed;
};

Split split(const std::vector<char>& mask) {
  Split s;
  for (std::size_t j = 0; j < mask.size(); ++j) (mask[j] ? s.free : s.fixed).push_back(static_cast<Eigen::Index>(j));
  return s;
}

}  // namespace

GroundingBatch make_grounding(const Matrix& anchor, double alpha, std::vector<char> free) {
  GroundingBatch gb;
  gb.anchor = anchor.cwiseMax(0.0).cwiseMin(1.0);
  gb.S = gb.anchor;
  gb.free = free.empty() ? std::vector<char>(static_cast<std::size_t>(anchor.cols()), 1) : std::move(free);
  if (static_cast<Eigen::Index>(gb.free.size()) != anchor.cols())
    throw Error(ErrorKind::ShapeMismatch, "grounding: free mask length differs from dimension");
  gb.alpha = alpha;
  return gb;
}

double grounding_threshold(const Matrix& W, const std::vector<char>& free, double alpha) {
  double best = 0;
  for (Eigen::Index j = 0; j < W.cols(); ++j)
    if (free[j]) best = std::max(best, W.col(j).squaredNorm());
  return best + alpha;
}

GroundingBatch ground_step(GroundingBatch gb, const Matrix& W, const Vector& b) {
  const Eigen::Index d = gb.dim();
  const Eigen::Index n = gb.samples();
  if (W.cols() != d || W.rows() != b.size() || gb.anchor.rows() != n || gb.anchor.cols() != d ||
      static_cast<Eigen::Index>(gb.free.size()) != d)
    throw Error(ErrorKind::ShapeMismatch, "ground_step: W, b and grounding shapes disagree");
  if (gb.alpha < 0) throw Error(ErrorKind::InvalidArgument, "ground_step: alpha must be >= 0");
  const Split sp = split(gb.free);
  const auto nf = static_cast<Eigen::Index>(sp.free.size());
  if (nf == 0) return gb;
  const double t2 = gb.anneal.t;

  const Matrix Wf = W(Eigen::all, sp.free);
  Matrix A = Wf.transpose() * Wf;
  A.diagonal().array() += gb.alpha;
  SpdFactor<double> factor;
  try {
    factor.compute(A);
  } catch (const Error&) {
    throw Error(ErrorKind::SingularSystem, "ground_step: W_F'W_F + alpha I is not positive definite");
  }

  // Right-hand sides, one column per sample.
  Matrix target = b * Vector::Ones(n).transpose();  // m x N
  if (!sp.fixed.empty()) target.noalias() -= W(Eigen::all, sp.fixed) * gb.anchor(Eigen::all, sp.fixed).transpose();
  Matrix rhs = Wf.transpose() * target;
  rhs.noalias() += gb.alpha * gb.anchor(Eigen::all, sp.free).transpose();
  rhs.noalias() += t2 * gb.S(Eigen::all, sp.free).transpose();
  rhs.array() -= 0.5 * t2;
  const Matrix solved = factor.solve(rhs).transpose();
  if (!solved.allFinite()) throw Error(ErrorKind::NumericalFailure, "ground_step: non-finite grounding");

  gb.S(Eigen::all, sp.free) = solved.cwiseMax(0.0).cwiseMin(1.0);
  if (!sp.fixed.empty()) gb.S(Eigen::all, sp.fixed) = gb.anchor(Eigen::all, sp.fixed);
  return gb;
}

Vector grounding_objective(const GroundingBatch& gb, const Matrix& S, const Matrix& previous, const Matrix& W,
                           const Vector& b) {
  const Eigen::Index n = S.rows();
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double dc = 0;
    double prox = 0;
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      if (!gb.free[j]) continue;
      prox += (S(i, j) - gb.anchor(i, j)) * (S(i, j) - gb.anchor(i, j));
      dc += (1.0 - 2.0 * previous(i, j)) * S(i, j);
    }
    out(i) = (W * S.row(i).transpose() - b).squaredNorm() + gb.alpha * prox + gb.anneal.t * dc;
  }
  return out;
}

BoolMatrix binarize_grounding(const GroundingBatch& gb, double eps) { return binarize(gb.S, eps); }

Matrix make_targets(const GroundingBatch& gb, const VariableSpace& space) {
  if (gb.dim() != space.dim()) throw Error(ErrorKind::ShapeMismatch, "make_targets: grounding/space dimension mismatch");
  return gb.S.middleCols(space.latent_begin(), space.latent_bits);
}

void check_auxiliary_budget(int auxiliary, int logical) {
  if (auxiliary > logical)
    throw Error(ErrorKind::InvalidArgument, "auxiliary variables (" + std::to_string(auxiliary) +
                                                ") exceed the logical variables they support (" +
                                                std::to_string(logical) + ")");
}

}  // namespace nesy
