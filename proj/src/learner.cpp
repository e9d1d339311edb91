#include "nesy/learner.hpp"

#include <set>

namespace nesy {

LearnerState init_learner(RngState& rng, Eigen::Index m, Eigen::Index d, double b_init, BiasMode mode,
                          double lambda, double gamma) {
  if (!(gamma > 0)) throw Error(ErrorKind::InvalidArgument, "learner: gamma must be > 0");
  LearnerState st;
  st.rs.W0 = uniform_matrix(rng, m, d, 0.0, 1.0);
  st.rs.W = st.rs.W0;
  st.rs.b = Vector::Constant(m, b_init);
  st.rs.lambda = lambda;
  st.rs.b_mode = mode;
  st.gamma = gamma;
  return st;
}

PpaFactor factor_batch(const Matrix& D, double lambda, double gamma) {
  if (D.rows() < 1) throw Error(ErrorKind::ShapeMismatch, "ppa_step: empty batch");
  if (!(gamma > 0)) throw Error(ErrorKind::InvalidArgument, "ppa_step: gamma must be > 0");
  PpaFactor f;
  Matrix A = D.transpose() * D;
  A.diagonal().array() += lambda + 1.0 / gamma;
  try {
    f.factor.compute(A);
  } catch (const Error& e) {
    throw Error(ErrorKind::NumericalFailure, std::string("ppa_step factorization: ") + e.what());
  }
  f.column_sums = D.transpose() * Vector::Ones(D.rows());
  f.samples = D.rows();
  f.dim = D.cols();
  f.lambda = lambda;
  f.gamma = gamma;
  return f;
}

LearnerState ppa_step(LearnerState state, const Matrix& D) {
  const PpaFactor f = factor_batch(D, state.rs.lambda, state.gamma);
  return ppa_step(std::move(state), D, f);
}

LearnerState ppa_step(LearnerState state, const Matrix& D, const PpaFactor& f) {
  RelaxedSystem& rs = state.rs;
  const Eigen::Index m = rs.W.rows();
  const Eigen::Index d = rs.W.cols();
  if (D.cols() != d || rs.W0.rows() != m || rs.W0.cols() != d || rs.b.size() != m || f.dim != d ||
      f.samples != D.rows())
    throw Error(ErrorKind::ShapeMismatch, "ppa_step: batch, W, W0 and b shapes disagree");
  const double inv_gamma = 1.0 / state.gamma;
  const double t1 = rs.t1;

  // Columns of rhs are the right-hand sides of the per-row normal equations.
  Matrix rhs = f.column_sums * rs.b.transpose();
  rhs.noalias() += rs.lambda * rs.W0.transpose();
  rhs.noalias() += (inv_gamma + t1) * rs.W.transpose();
  rhs.array() -= 0.5 * t1;
  Matrix next = f.factor.solve(rhs).transpose();
  if (!next.allFinite()) throw Error(ErrorKind::NumericalFailure, "ppa_step: non-finite update");

  if (rs.b_mode == BiasMode::Learned) {
    const Vector mean_fit = (D * rs.W.transpose()).colwise().mean().transpose();
    rs.b = (mean_fit + inv_gamma * rs.b) / (1.0 + inv_gamma);
  }
  rs.W = next.cwiseMax(0.0).cwiseMin(1.0);
  ++state.iteration;
  return state;
}

double booleanness(const Matrix& W) { return booleanness_violation(W); }

double constraint_objective(const RelaxedSystem& rs, const Matrix& D, const Matrix& anchor) {
  const Matrix residual = D * rs.W.transpose() - Vector::Ones(D.rows()) * rs.b.transpose();
  const double dc = rs.t1 * ((Matrix::Ones(rs.W.rows(), rs.W.cols()) - 2.0 * anchor).cwiseProduct(rs.W)).sum();
  return residual.squaredNorm() + rs.lambda * (rs.W - rs.W0).squaredNorm() + dc;
}

double fit_residual(const RelaxedSystem& rs, const Matrix& D) {
  const Matrix residual = D * rs.W.transpose() - Vector::Ones(D.rows()) * rs.b.transpose();
  return residual.squaredNorm() / static_cast<double>(D.rows());
}

FitResult fit_fixed_batch(LearnerState state, const Matrix& D, double anneal_step_fraction, double cap_multiple,
                          double epsilon, int max_epochs) {
  const PpaFactor f = factor_batch(D, state.rs.lambda, state.gamma);
  const double delta_max = D.colwise().squaredNorm().maxCoeff() + state.rs.lambda;
  state.anneal = AnnealSchedule::for_threshold(delta_max, anneal_step_fraction, cap_multiple, epsilon);
  state.rs.t1 = state.anneal.t;
  FitResult out;
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    const Matrix before = state.rs.W;
    state = ppa_step(std::move(state), D, f);
    out.epochs = epoch + 1;
    const double violation = booleanness(state.rs.W);
    if (violation <= epsilon && (state.rs.W - before).cwiseAbs().maxCoeff() < 1e-12) {
      out.boolean = true;
      break;
    }
    state.anneal = anneal(state.anneal, violation);
    state.rs.t1 = state.anneal.t;
  }
  out.boolean = booleanness(state.rs.W) <= epsilon;
  out.state = std::move(state);
  return out;
}

std::vector<SweepCandidate> b_sweep(const SweepConfig& cfg, const VariableSpace& space, const Matrix& D,
                                    const std::vector<Assignment>& samples, const std::vector<int>& b_values) {
  std::vector<SweepCandidate> out;
  std::set<CardinalityConstraint> seen;
  const int d = space.dim();
  for (int b : b_values) {
    if (b < 1 || b > d - 1) throw Error(ErrorKind::InvalidArgument, "b_sweep: b outside [1, d-1]");
    RngState rng = RngState(cfg.seed).fork(static_cast<std::uint64_t>(b));
    LearnerState st = init_learner(rng, cfg.rows, d, b, BiasMode::Fixed, cfg.lambda, cfg.gamma);
    FitResult fit = fit_fixed_batch(std::move(st), D, cfg.anneal_step_fraction, cfg.anneal_cap_multiple, cfg.epsilon,
                                    cfg.max_epochs);
    const BinarizedRows rows = binarize_system(fit.state.rs, cfg.epsilon);
    const CardinalitySystem sys = deduplicate(system_from_rows(space, rows.weights, samples, cfg.coverage));
    for (const auto& c : sys.constraints) {
      if (c.lo > b || c.hi < b) continue;
      if (seen.insert(c).second) out.push_back({c, b});
    }
  }
  return out;
}

}  // namespace nesy
