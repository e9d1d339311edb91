#include "nesy/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace nesy {

// ---- configuration ----------------------------------------------------

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, "config: " + msg);
  };
  require(epochs >= 0, "epochs must be >= 0");
  require(m >= 1, "m must be >= 1");
  require(alpha > 0, "alpha must be > 0");
  require(lambda >= 0, "lambda must be >= 0");
  require(gamma > 0, "gamma must be > 0");
  require(eta > 0, "eta must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(hidden >= 1, "hidden must be >= 1");
  require(t1_step_fraction >= 0 && t2_step_fraction >= 0, "annealing step fractions must be >= 0");
  require(cap_multiple > 0, "cap_multiple must be > 0");
  require(epsilon > 0 && epsilon < 0.5, "epsilon must be in (0, 0.5)");
  require(b_mode == "fixed" || b_mode == "learned", "b_mode must be 'fixed' or 'learned'");
  require(b_mode == "learned" || !b_values.empty(), "fixed b_mode needs at least one b value");
  require(coverage > 0 && coverage <= 1, "coverage must be in (0, 1]");
  require(perception == "auto" || perception == "on" || perception == "off", "perception must be auto, on or off");
  require(patience >= 1, "patience must be >= 1");
  require(rel_tol >= 0, "rel_tol must be >= 0");
}

namespace {

struct KeyInfo {
  const char* key;
  const char* help;
};

const KeyInfo kConfigKeys[] = {
    {"seed", "random seed"},
    {"epochs", "maximum number of epochs K"},
    {"m", "constraint rows per learner"},
    {"alpha", "grounding trade-off weight"},
    {"lambda", "trust-region weight (0 disables it)"},
    {"gamma", "proximal step size of constraint learning"},
    {"eta", "network learning rate"},
    {"batch_size", "network minibatch size (cells)"},
    {"hidden", "hidden rectifier units of the perception network"},
    {"t1_step_fraction", "t1 increment as a fraction of the constraint subproblem threshold"},
    {"t2_step_fraction", "t2 increment as a fraction of the grounding subproblem threshold"},
    {"cap_multiple", "t1/t2 cap as a multiple of the threshold"},
    {"epsilon", "booleanness tolerance"},
    {"b_mode", "fixed (one learner per b value) or learned"},
    {"b_values", "b sweep values for fixed mode"},
    {"b_init", "initial b in learned mode"},
    {"coverage", "fraction k of training samples each bound must cover"},
    {"b_filter", "drop rows whose estimated bounds exclude their b"},
    {"perception", "auto, on or off"},
    {"round_predictions", "feed rounded instead of raw predictions to constraint learning"},
    {"ground_outputs", "ground output bits jointly with latent bits"},
    {"ndc", "ablation: no DC penalty, hard rounding at the end"},
    {"patience", "epochs of stable Boolean state before stopping"},
    {"rel_tol", "relative objective change counted as stable"},
};

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  return {{"seed", c.seed},
          {"epochs", c.epochs},
          {"m", c.m},
          {"alpha", c.alpha},
          {"lambda", c.lambda},
          {"gamma", c.gamma},
          {"eta", c.eta},
          {"batch_size", c.batch_size},
          {"hidden", c.hidden},
          {"t1_step_fraction", c.t1_step_fraction},
          {"t2_step_fraction", c.t2_step_fraction},
          {"cap_multiple", c.cap_multiple},
          {"epsilon", c.epsilon},
          {"b_mode", c.b_mode},
          {"b_values", c.b_values},
          {"b_init", c.b_init},
          {"coverage", c.coverage},
          {"b_filter", c.b_filter},
          {"perception", c.perception},
          {"round_predictions", c.round_predictions},
          {"ground_outputs", c.ground_outputs},
          {"ndc", c.ndc},
          {"patience", c.patience},
          {"rel_tol", c.rel_tol}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "config: expected a JSON object");
  std::set<std::string> known;
  for (const auto& k : kConfigKeys) known.insert(k.key);
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw Error(ErrorKind::InvalidArgument, "config: unknown key '" + key + "'");
  TrainConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("seed", c.seed);
    get("epochs", c.epochs);
    get("m", c.m);
    get("alpha", c.alpha);
    get("lambda", c.lambda);
    get("gamma", c.gamma);
    get("eta", c.eta);
    get("batch_size", c.batch_size);
    get("hidden", c.hidden);
    get("t1_step_fraction", c.t1_step_fraction);
    get("t2_step_fraction", c.t2_step_fraction);
    get("cap_multiple", c.cap_multiple);
    get("epsilon", c.epsilon);
    get("b_mode", c.b_mode);
    get("b_values", c.b_values);
    get("b_init", c.b_init);
    get("coverage", c.coverage);
    get("b_filter", c.b_filter);
    get("perception", c.perception);
    get("round_predictions", c.round_predictions);
    get("ground_outputs", c.ground_outputs);
    get("ndc", c.ndc);
    get("patience", c.patience);
    get("rel_tol", c.rel_tol);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::pair<std::string, std::string>> train_config_help() {
  const nlohmann::json defaults = to_json(TrainConfig{});
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : kConfigKeys) out.emplace_back(k.key, defaults.at(k.key).dump() + "  " + k.help);
  return out;
}

// ---- metrics ------------------------------------------------------------

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv_header() {
  return "epoch,perception_acc,w_booleanness,z_booleanness,rank,distinct,grounding_change,objective,"
         "w_update_sq,theta_update_sq,t1,t2,loss";
}

std::string to_csv(const MetricsRow& r) {
  std::ostringstream o;
  o << r.epoch << ',' << num(r.perception_acc) << ',' << num(r.w_booleanness) << ',' << num(r.z_booleanness) << ','
    << r.rank << ',' << r.distinct << ',' << num(r.grounding_change) << ',' << num(r.objective) << ','
    << num(r.w_update_sq) << ',' << num(r.theta_update_sq) << ',' << num(r.t1) << ',' << num(r.t2) << ','
    << num(r.loss);
  return o.str();
}

nlohmann::json to_json(const MetricsRow& r) {
  return {{"epoch", r.epoch},
          {"perception_acc", r.perception_acc},
          {"w_booleanness", r.w_booleanness},
          {"z_booleanness", r.z_booleanness},
          {"rank", r.rank},
          {"distinct", r.distinct},
          {"grounding_change", r.grounding_change},
          {"objective", r.objective},
          {"w_update_sq", r.w_update_sq},
          {"theta_update_sq", r.theta_update_sq},
          {"t1", r.t1},
          {"t2", r.t2},
          {"loss", r.loss}};
}

const char* to_string(Phase p) noexcept {
  switch (p) {
    case Phase::Prediction: return "prediction";
    case Phase::ConstraintLearning: return "constraint-learning";
    case Phase::Grounding: return "grounding";
    case Phase::NetworkTraining: return "network-training";
    case Phase::Annealing: return "annealing";
  }
  return "?";
}

// ---- task binding -----------------------------------------------------

TaskBinding bind_task(const Dataset& ds, const TrainConfig& cfg) {
  const VariableSpace& sp = ds.space;
  const int d = sp.dim();
  const auto N = static_cast<Eigen::Index>(ds.samples.size());
  if (N == 0) throw Error(ErrorKind::InvalidArgument, "training: empty dataset");
  TaskBinding tb;
  tb.base = Matrix::Zero(N, d);
  tb.perceived.assign(static_cast<std::size_t>(d), 0);
  tb.auxiliary.assign(static_cast<std::size_t>(d), 0);
  tb.free.clear();
  std::vector<char> free(static_cast<std::size_t>(d), 0);
  const int out0 = sp.output_begin();
  auto check_sample = [&](const TaskSample& s) {
    if (static_cast<int>(s.y.size()) != sp.output_bits && ds.task != "sudoku")
      throw Error(ErrorKind::DimensionMismatch, "training: output bits disagree with the space");
  };

  if (ds.task == "xor" || ds.task == "nonogram") {
    if (cfg.perception == "on") throw Error(ErrorKind::InvalidArgument, ds.task + " has no perception input");
    check_auxiliary_budget(sp.latent_bits, sp.observed_input_bits + sp.output_bits);
    for (Eigen::Index n = 0; n < N; ++n) {
      const auto& s = ds.samples[n];
      check_sample(s);
      if (!s.x || static_cast<int>(s.x->size()) != sp.observed_input_bits)
        throw Error(ErrorKind::DimensionMismatch, "training: observed bits disagree with the space");
      for (int j = 0; j < sp.observed_input_bits; ++j) tb.base(n, j) = (*s.x)[j];
      for (int j = 0; j < sp.output_bits; ++j) tb.base(n, out0 + j) = s.y[j];
    }
    for (int j = sp.latent_begin(); j < out0; ++j) tb.auxiliary[j] = free[j] = 1;
    if (cfg.ground_outputs)
      for (int j = out0; j < d; ++j) free[j] = 1;
  } else if (ds.task == "sudoku") {
    const int size = ds.meta.at("size").get<int>();
    const int cells = size * size;
    const bool has_x = !ds.samples.empty() && ds.samples.front().x.has_value();
    tb.uses_perception = cfg.perception == "on" || (cfg.perception == "auto" && has_x);
    if (tb.uses_perception && !has_x) throw Error(ErrorKind::InvalidArgument, "sudoku: perception needs glyph inputs");
    const int pixels = tb.uses_perception ? static_cast<int>(ds.samples.front().x->size()) / cells : 0;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index n = 0; n < N; ++n) {
      const auto& s = ds.samples[n];
      if (static_cast<int>(s.y.size()) != d || static_cast<int>(s.mask.size()) != cells)
        throw Error(ErrorKind::DimensionMismatch, "sudoku: sample shape disagrees with the space");
      for (int cell = 0; cell < cells; ++cell) {
        if (s.mask[cell] && tb.uses_perception) {
          tb.cell_rows.emplace_back(static_cast<int>(n), cell * size);
          continue;
        }
        for (int k = 0; k < size; ++k) {
          const int v = cell * size + k;
          tb.base(n, v) = s.mask[cell] ? (s.z ? (*s.z)[v] : 0) : s.y[v];
        }
      }
    }
    if (tb.uses_perception) {
      tb.cell_output = size;
      tb.head = HeadKind::Softmax;
      tb.cell_inputs.resize(static_cast<Eigen::Index>(tb.cell_rows.size()), pixels);
      for (std::size_t r = 0; r < tb.cell_rows.size(); ++r) {
        const auto& x = *ds.samples[tb.cell_rows[r].first].x;
        const int cell = tb.cell_rows[r].second / size;
        for (int p = 0; p < pixels; ++p) tb.cell_inputs(static_cast<Eigen::Index>(r), p) = x[cell * pixels + p];
      }
      for (int j = 0; j < d; ++j) tb.perceived[j] = free[j] = 1;
    }
  } else if (ds.task == "gridpath") {
    const int cells = sp.latent_bits;
    tb.uses_perception = cfg.perception != "off";
    for (Eigen::Index n = 0; n < N; ++n) {
      const auto& s = ds.samples[n];
      check_sample(s);
      for (int j = 0; j < cells; ++j) {
        if (tb.uses_perception) tb.cell_rows.emplace_back(static_cast<int>(n), sp.latent_begin() + j);
        else tb.base(n, sp.latent_begin() + j) = s.z ? (*s.z)[j] : 0;
      }
      for (int j = 0; j < sp.output_bits; ++j) tb.base(n, out0 + j) = s.y[j];
    }
    if (tb.uses_perception) {
      tb.cell_output = 1;
      tb.head = HeadKind::Logistic;
      tb.cell_inputs.resize(static_cast<Eigen::Index>(tb.cell_rows.size()), 1);
      for (std::size_t r = 0; r < tb.cell_rows.size(); ++r) {
        const auto& s = ds.samples[tb.cell_rows[r].first];
        tb.cell_inputs(static_cast<Eigen::Index>(r), 0) = (*s.x)[tb.cell_rows[r].second - sp.latent_begin()];
      }
      for (int j = sp.latent_begin(); j < out0; ++j) tb.perceived[j] = free[j] = 1;
      if (cfg.ground_outputs)
        for (int j = out0; j < d; ++j) free[j] = 1;
    }
  } else {
    throw Error(ErrorKind::InvalidArgument, "training: unknown task '" + ds.task + "'");
  }
  if (std::find(free.begin(), free.end(), 1) != free.end()) tb.free = free;
  return tb;
}

// ---- epoch loop -------------------------------------------------------

namespace {

Matrix predictions(const MlpModel& model, const TaskBinding& tb) { return forward_batch(model, tb.cell_inputs); }

Matrix batch_from(const TaskBinding& tb, const std::optional<MlpModel>& model,
                  const std::optional<GroundingBatch>& grounding, bool round) {
  Matrix D = tb.base;
  if (model && tb.uses_perception) {
    const Matrix P = predictions(*model, tb);
    for (std::size_t r = 0; r < tb.cell_rows.size(); ++r) {
      const auto [n, off] = tb.cell_rows[r];
      Vector p = P.row(static_cast<Eigen::Index>(r)).transpose();
      if (round) {
        if (tb.head == HeadKind::Softmax) {
          Eigen::Index k = 0;
          p.maxCoeff(&k);
          p.setZero();
          p(k) = 1;
        } else {
          p = (p.array() >= 0.5).cast<double>().matrix();
        }
      }
      D.row(n).segment(off, tb.cell_output) = p.transpose();
    }
  }
  if (grounding) {
    for (Eigen::Index j = 0; j < D.cols(); ++j) {
      if (!tb.auxiliary[j]) continue;
      D.col(j) = grounding->S.col(j);
      if (round) D.col(j) = (D.col(j).array() >= 0.5).cast<double>().matrix();
    }
  }
  return D;
}

double model_sq_distance(const MlpModel& a, const MlpModel& b) {
  double s = 0;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    s += (a.weights[l] - b.weights[l]).squaredNorm();
    s += (a.biases[l] - b.biases[l]).squaredNorm();
  }
  return s;
}

double cell_accuracy(const Matrix& P, const TaskBinding& tb, const Dataset& ds) {
  if (P.rows() == 0) return 1.0;
  long right = 0;
  long total = 0;
  for (std::size_t r = 0; r < tb.cell_rows.size(); ++r) {
    const auto [n, off] = tb.cell_rows[r];
    const auto& z = ds.samples[n].z;
    if (!z) continue;
    const int zoff = ds.task == "gridpath" ? off - ds.space.latent_begin() : off;
    bool ok = true;
    if (tb.head == HeadKind::Softmax) {
      Eigen::Index k = 0;
      P.row(static_cast<Eigen::Index>(r)).maxCoeff(&k);
      ok = (*z)[zoff + k] == 1;
    } else {
      for (int k = 0; k < tb.cell_output; ++k) ok = ok && ((P(r, k) >= 0.5) == ((*z)[zoff + k] == 1));
    }
    right += ok;
    ++total;
  }
  return total ? static_cast<double>(right) / total : 1.0;
}

Matrix stacked_W(const TrainState& st) {
  Eigen::Index rows = 0;
  for (const auto& l : st.learners) rows += l.rs.W.rows();
  Matrix W(rows, st.learners.front().rs.W.cols());
  Eigen::Index at = 0;
  for (const auto& l : st.learners) {
    W.middleRows(at, l.rs.W.rows()) = l.rs.W;
    at += l.rs.W.rows();
  }
  return W;
}

Vector stacked_b(const TrainState& st) {
  Eigen::Index rows = 0;
  for (const auto& l : st.learners) rows += l.rs.b.size();
  Vector b(rows);
  Eigen::Index at = 0;
  for (const auto& l : st.learners) {
    b.segment(at, l.rs.b.size()) = l.rs.b;
    at += l.rs.b.size();
  }
  return b;
}

double free_booleanness(const GroundingBatch& gb) {
  double v = 0;
  for (Eigen::Index j = 0; j < gb.dim(); ++j)
    if (gb.free[j]) v = std::max(v, booleanness_violation(gb.S.col(j)));
  return v;
}

long distinct_rows(const BoolMatrix& B) {
  std::set<std::vector<std::uint8_t>> rows;
  for (Eigen::Index i = 0; i < B.rows(); ++i) {
    std::vector<std::uint8_t> r(static_cast<std::size_t>(B.cols()));
    bool any = false;
    for (Eigen::Index j = 0; j < B.cols(); ++j) any |= (r[j] = B(i, j)) != 0;
    if (any) rows.insert(std::move(r));
  }
  return static_cast<long>(rows.size());
}

BoolMatrix round_matrix(const Matrix& W) { return (W.array() >= 0.5).cast<std::uint8_t>().matrix(); }

}  // namespace

Matrix current_batch(const TrainState& state, const TaskBinding& tb, bool round) {
  return batch_from(tb, state.model, state.grounding, round);
}

TrainState init_training(const TrainConfig& cfg, const Dataset& ds, const TaskBinding& tb) {
  cfg.validate();
  TrainState st;
  st.rng = RngState(cfg.seed);
  const int d = ds.space.dim();
  if (tb.uses_perception) {
    RngState net_rng = st.rng.fork(1);
    st.model = init_mlp(net_rng, 1, static_cast<int>(tb.cell_inputs.cols()), {cfg.hidden}, tb.cell_output, tb.head);
  }
  Matrix D = batch_from(tb, st.model, std::nullopt, false);
  RngState aux_rng = st.rng.fork(2);
  for (Eigen::Index n = 0; n < D.rows(); ++n)
    for (int j = 0; j < d; ++j)
      if (tb.auxiliary[j]) D(n, j) = aux_rng.uniform();
  if (!tb.free.empty()) {
    st.grounding = make_grounding(D, cfg.alpha, tb.free);
    st.grounding->anneal.epsilon = cfg.epsilon;
  }
  const double delta_max = D.colwise().squaredNorm().maxCoeff() + cfg.lambda;
  AnnealSchedule sched = AnnealSchedule::for_threshold(delta_max, cfg.ndc ? 0.0 : cfg.t1_step_fraction,
                                                       cfg.cap_multiple, cfg.epsilon);
  if (cfg.b_mode == "fixed") {
    for (int b : cfg.b_values) {
      if (b < 1 || b > d - 1) throw Error(ErrorKind::InvalidArgument, "config: b value outside [1, d-1]");
      RngState r = st.rng.fork(100 + static_cast<std::uint64_t>(b));
      LearnerState ls = init_learner(r, cfg.m, d, b, BiasMode::Fixed, cfg.lambda, cfg.gamma);
      ls.anneal = sched;
      ls.rs.t1 = sched.t;
      st.learners.push_back(std::move(ls));
      st.learner_b.push_back(b);
    }
  } else {
    RngState r = st.rng.fork(100);
    LearnerState ls = init_learner(r, cfg.m, d, cfg.b_init, BiasMode::Learned, cfg.lambda, cfg.gamma);
    ls.anneal = sched;
    st.learners.push_back(std::move(ls));
    st.learner_b.push_back(0);
  }
  st.rng = st.rng.fork(3);  // stream for minibatch shuffling
  return st;
}

MetricsRow train_epoch(TrainState& st, const TrainConfig& cfg, const Dataset& ds, const TaskBinding& tb,
                       std::vector<Phase>* trace) {
  std::vector<Phase> local;
  auto mark = [&](Phase p) {
    // The phases must run in exactly this order every epoch.
    const Phase expected = static_cast<Phase>(local.size());
    if (p != expected) throw Error(ErrorKind::NumericalFailure, "training: phase order violated");
    local.push_back(p);
    if (trace) trace->push_back(p);
  };
  MetricsRow row;
  row.epoch = st.epoch + 1;

  mark(Phase::Prediction);
  const Matrix D = batch_from(tb, st.model, st.grounding, cfg.round_predictions);
  if (st.model) row.perception_acc = cell_accuracy(predictions(*st.model, tb), tb, ds);

  mark(Phase::ConstraintLearning);
  const PpaFactor factor = factor_batch(D, cfg.lambda, cfg.gamma);
  for (auto& ls : st.learners) {
    const Matrix before = ls.rs.W;
    ls = ppa_step(std::move(ls), D, factor);
    row.w_update_sq += (ls.rs.W - before).squaredNorm();
    row.objective += constraint_objective(ls.rs, D, before);
  }

  mark(Phase::Grounding);
  if (st.grounding) {
    const Matrix before = st.grounding->S;
    st.grounding->anchor = D;
    st.grounding->alpha = cfg.alpha;
    *st.grounding = ground_step(std::move(*st.grounding), stacked_W(st), stacked_b(st));
    long count = 0;
    double change = 0;
    for (Eigen::Index j = 0; j < D.cols(); ++j) {
      if (!tb.free[j]) continue;
      change += (st.grounding->S.col(j) - before.col(j)).cwiseAbs().sum();
      count += D.rows();
    }
    row.grounding_change = count ? change / count : 0;
  }

  mark(Phase::NetworkTraining);
  if (st.model && st.grounding) {
    const auto R = static_cast<Eigen::Index>(tb.cell_rows.size());
    Matrix T(R, tb.cell_output);
    for (Eigen::Index r = 0; r < R; ++r) {
      const auto [n, off] = tb.cell_rows[r];
      T.row(r) = st.grounding->S.row(n).segment(off, tb.cell_output);
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(R));
    for (Eigen::Index r = 0; r < R; ++r) order[r] = r;
    shuffle(st.rng, order);
    const MlpModel before = *st.model;
    double loss_sum = 0;
    for (Eigen::Index start = 0; start < R; start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, R - start);
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
      double loss = 0;
      const MlpGradient g = batch_gradient(*st.model, tb.cell_inputs(idx, Eigen::all), T(idx, Eigen::all), &loss);
      loss_sum += loss * len;
      *st.model = sgd_step(std::move(*st.model), g, cfg.eta);
    }
    row.loss = R ? loss_sum / R : 0;
    row.theta_update_sq = model_sq_distance(*st.model, before);
  }

  mark(Phase::Annealing);
  for (auto& ls : st.learners) {
    const double v = booleanness(ls.rs.W);
    row.w_booleanness = std::max(row.w_booleanness, v);
    if (!cfg.ndc) {
      ls.anneal = anneal(ls.anneal, v);
      ls.rs.t1 = ls.anneal.t;
    }
    row.t1 = std::max(row.t1, ls.rs.t1);
  }
  if (st.grounding) {
    const double v = free_booleanness(*st.grounding);
    row.z_booleanness = v;
    if (!cfg.ndc) {
      const double thr = grounding_threshold(stacked_W(st), tb.free, cfg.alpha);
      AnnealSchedule& a = st.grounding->anneal;
      a.step = cfg.t2_step_fraction * thr;
      a.t_cap = std::max(a.t, cfg.cap_multiple * thr);
      a.epsilon = cfg.epsilon;
      a = anneal(a, v);
    }
    row.t2 = st.grounding->anneal.t;
  }

  const BoolMatrix B = round_matrix(stacked_W(st));
  row.rank = static_cast<long>(rank(B.cast<double>()));
  row.distinct = distinct_rows(B);

  const bool boolean = row.w_booleanness <= cfg.epsilon && row.z_booleanness <= cfg.epsilon;
  const double rel = std::abs(row.objective - st.prev_objective) / std::max(std::abs(st.prev_objective), 1e-12);
  st.stable_epochs = (boolean && st.epoch > 0 && rel < cfg.rel_tol) ? st.stable_epochs + 1 : 0;
  st.prev_objective = row.objective;
  st.converged = st.stable_epochs >= cfg.patience;
  ++st.epoch;
  return row;
}

// ---- termination --------------------------------------------------------

namespace {

std::vector<Assignment> bound_samples(const TrainState& st, const TaskBinding& tb) {
  const Matrix D = batch_from(tb, st.model, st.grounding, true);
  std::vector<Assignment> out(static_cast<std::size_t>(D.rows()));
  for (Eigen::Index n = 0; n < D.rows(); ++n) {
    out[n].resize(static_cast<std::size_t>(D.cols()));
    for (Eigen::Index j = 0; j < D.cols(); ++j) out[n][j] = D(n, j) >= 0.5 ? 1 : 0;
  }
  return out;
}

}  // namespace

TrainResult finish_training(TrainState st, const TrainConfig& cfg, const Dataset& ds, const TaskBinding& tb,
                            std::vector<MetricsRow> metrics) {
  TrainResult res;
  const auto samples = bound_samples(st, tb);
  std::vector<BoolMatrix> binarized;
  for (std::size_t i = 0; i < st.learners.size(); ++i) {
    const auto& ls = st.learners[i];
    // No epochs means no annealing happened; the W0-derived rows are rounded.
    if (cfg.ndc || st.epoch == 0) {
      binarized.push_back(round_matrix(ls.rs.W));
      continue;
    }
    try {
      binarized.push_back(binarize_system(ls.rs, cfg.epsilon).weights);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NotBoolean) throw;
      throw Error(ErrorKind::NonBooleanAtTermination,
                  "training ended with non-Boolean W after " + std::to_string(st.epoch) +
                      " epochs (violation " + num(booleanness(ls.rs.W)) + ", t1 " + num(ls.rs.t1) + "): " + e.what());
    }
  }
  Eigen::Index rows = 0;
  for (const auto& B : binarized) rows += B.rows();
  Matrix stacked(rows, ds.space.dim());
  rows = 0;
  for (const auto& B : binarized) {
    stacked.middleRows(rows, B.rows()) = B.cast<double>();
    rows += B.rows();
  }
  res.raw_rank = static_cast<long>(rank(stacked));

  std::vector<std::pair<CardinalityConstraint, Provenance>> kept;
  std::set<CardinalityConstraint> seen;
  for (std::size_t i = 0; i < binarized.size(); ++i) {
    const CardinalitySystem sys = deduplicate(system_from_rows(ds.space, binarized[i], samples, cfg.coverage));
    const int b = st.learner_b[i];
    for (const auto& c : sys.constraints) {
      if (cfg.b_filter && cfg.b_mode == "fixed" && (c.lo > b || c.hi < b)) continue;
      if (seen.insert(c).second) kept.push_back({c, {b, static_cast<int>(i)}});
    }
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  res.system.space = ds.space;
  for (auto& [c, p] : kept) {
    res.system.constraints.push_back(c);
    res.provenance.push_back(p);
  }
  res.final_rank = res.system.constraints.empty() ? 0 : static_cast<long>(rank(res.system.weight_matrix()));
  res.model = st.model;
  res.metrics = std::move(metrics);
  res.state = std::move(st);
  return res;
}

TrainResult resume_training(TrainState st, const TrainConfig& cfg, const Dataset& ds, std::vector<MetricsRow> metrics) {
  cfg.validate();
  const TaskBinding tb = bind_task(ds, cfg);
  while (st.epoch < cfg.epochs && !st.converged) metrics.push_back(train_epoch(st, cfg, ds, tb));
  return finish_training(std::move(st), cfg, ds, tb, std::move(metrics));
}

TrainResult run_training(const TrainConfig& cfg, const Dataset& ds) {
  cfg.validate();
  const TaskBinding tb = bind_task(ds, cfg);
  return resume_training(init_training(cfg, ds, tb), cfg, ds);
}

// ---- evaluation -------------------------------------------------------

nlohmann::json to_json(const EvalReport& r) {
  return {{"samples", r.samples},
          {"perception_acc", r.perception_acc},
          {"solving_acc", r.solving_acc},
          {"total_acc", r.total_acc},
          {"cell_perception_acc", r.cell_perception_acc},
          {"cell_solving_acc", r.cell_solving_acc},
          {"budget_exceeded", r.budget_exceeded},
          {"infeasible", r.infeasible}};
}

SampleProblem sample_problem(const CardinalitySystem& system, const std::optional<MlpModel>& model,
                             const Dataset& test, std::size_t index, const SearchLimits& limits) {
  const VariableSpace& sp = test.space;
  if (system.dim() != sp.dim()) throw Error(ErrorKind::SpaceMismatch, "sample_problem: system and dataset spaces differ");
  if (index >= test.samples.size()) throw Error(ErrorKind::InvalidArgument, "sample_problem: index out of range");
  const auto& s = test.samples[index];
  const int d = sp.dim();
  SampleProblem out;
  InferenceProblem& prob = out.problem;
  prob.system = system;
  prob.limits = limits;
  prob.fixed.assign(static_cast<std::size_t>(d), -1);
  prob.preferences.assign(static_cast<std::size_t>(d), Preference{});

  if (test.task == "sudoku") {
    const int size = test.meta.at("size").get<int>();
    const int cells = size * size;
    const bool use_net = model && s.x;
    const int pixels = use_net ? static_cast<int>(s.x->size()) / cells : 0;
    for (int cell = 0; cell < cells; ++cell) {
      if (!s.mask[cell]) continue;
      if (use_net) {
        const Vector x = Eigen::Map<const Vector>(s.x->data() + static_cast<std::ptrdiff_t>(cell) * pixels, pixels);
        const Vector p = forward(*model, x);
        Eigen::Index k = 0;
        p.maxCoeff(&k);
        if (s.z) {
          const bool ok = (*s.z)[cell * size + k] == 1;
          out.perceived_ok = out.perceived_ok && ok;
          out.cells_right += ok;
          ++out.cells_seen;
        }
        const auto prefs = preferences_from_probabilities(std::vector<double>(p.data(), p.data() + p.size()));
        for (int k2 = 0; k2 < size; ++k2) prob.preferences[cell * size + k2] = prefs[k2];
      } else {
        if (!s.z) throw Error(ErrorKind::InvalidArgument, "sample_problem: symbolic sudoku sample without z");
        for (int k = 0; k < size; ++k) prob.fixed[cell * size + k] = static_cast<std::int8_t>((*s.z)[cell * size + k]);
      }
    }
  } else if (test.task == "xor" || test.task == "nonogram") {
    for (int j = 0; j < sp.observed_input_bits; ++j) prob.fixed[j] = static_cast<std::int8_t>((*s.x)[j] >= 0.5);
  } else if (test.task == "gridpath") {
    for (int j = 0; j < sp.latent_bits; ++j) {
      double p = s.z ? (*s.z)[j] : 0.0;
      if (model && s.x) p = forward(*model, Vector::Constant(1, (*s.x)[j]))(0);
      const auto pref = preferences_from_probabilities({p})[0];
      prob.preferences[sp.latent_begin() + j] = pref;
      if (s.z) {
        const bool ok = pref.value == (*s.z)[j];
        out.perceived_ok = out.perceived_ok && ok;
        out.cells_right += ok;
        ++out.cells_seen;
      }
    }
    for (int j = 0; j < sp.output_bits; ++j)
      if (s.mask[j]) prob.fixed[sp.output_begin() + j] = 1;
  } else {
    throw Error(ErrorKind::InvalidArgument, "sample_problem: unknown task '" + test.task + "'");
  }
  return out;
}

EvalReport evaluate(const CardinalitySystem& system, const std::optional<MlpModel>& model, const Dataset& test,
                    const SearchLimits& limits) {
  const VariableSpace& sp = test.space;
  EvalReport rep;
  long perc_ok = 0, solve_ok = 0, both_ok = 0;
  long cells_seen = 0, cells_right = 0, out_seen = 0, out_right = 0;

  for (std::size_t i = 0; i < test.samples.size(); ++i) {
    const auto& s = test.samples[i];
    const SampleProblem sp_i = sample_problem(system, model, test, i, limits);
    cells_seen += sp_i.cells_seen;
    cells_right += sp_i.cells_right;
    Solution sol;
    try {
      sol = solve(sp_i.problem);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InconsistentFixed) throw;
      sol.status = SolveStatus::Infeasible;
    }
    rep.infeasible += sol.status == SolveStatus::Infeasible;
    rep.budget_exceeded += sol.status == SolveStatus::BudgetExceeded;
    bool solved = sol.status == SolveStatus::Optimal || sol.status == SolveStatus::Feasible;

    if (test.task == "sudoku") {
      // Only blank cells are scored for solving.
      const int size = test.meta.at("size").get<int>();
      for (int cell = 0; cell < size * size; ++cell) {
        if (s.mask[cell]) continue;
        bool ok = solved;
        for (int k = 0; k < size && ok; ++k) ok = sol.assignment[cell * size + k] == s.y[cell * size + k];
        out_right += ok;
        ++out_seen;
        solved = solved && ok;
      }
    } else {
      const int out0 = sp.output_begin();
      if (solved) {
        const Assignment out(sol.assignment.begin() + out0, sol.assignment.end());
        if (test.task == "nonogram") solved = line_clue(out) == line_clue(s.y);
        else solved = out == s.y;
        for (int j = 0; j < sp.output_bits; ++j) out_right += out[j] == s.y[j];
      }
      out_seen += sp.output_bits;
    }
    perc_ok += sp_i.perceived_ok;
    solve_ok += solved;
    both_ok += sp_i.perceived_ok && solved;
  }
  rep.samples = static_cast<long>(test.samples.size());
  const double n = rep.samples ? static_cast<double>(rep.samples) : 1.0;
  rep.perception_acc = perc_ok / n;
  rep.solving_acc = solve_ok / n;
  rep.total_acc = both_ok / n;
  rep.cell_perception_acc = cells_seen ? static_cast<double>(cells_right) / cells_seen : 1.0;
  rep.cell_solving_acc = out_seen ? static_cast<double>(out_right) / out_seen : 1.0;
  return rep;
}

// ---- checkpoints --------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json mat_json(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Matrix json_mat(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
    throw Error(ErrorKind::CorruptFile, "checkpoint: matrix payload has the wrong length");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  return m;
}

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json sched_json(const AnnealSchedule& a) {
  return {{"t", a.t}, {"step", a.step}, {"epsilon", a.epsilon}, {"t_cap", a.t_cap}};
}

AnnealSchedule json_sched(const nlohmann::json& j) {
  AnnealSchedule a;
  a.t = j.at("t").get<double>();
  a.step = j.at("step").get<double>();
  a.epsilon = j.at("epsilon").get<double>();
  a.t_cap = j.at("t_cap").get<double>();
  return a;
}

}  // namespace

nlohmann::json checkpoint_to_json(const TrainState& st, const TrainConfig& cfg) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["config"] = to_json(cfg);
  j["epoch"] = st.epoch;
  j["rng"] = {{"seed", st.rng.seed()}, {"position", st.rng.position()}};
  j["learners"] = nlohmann::json::array();
  for (std::size_t i = 0; i < st.learners.size(); ++i) {
    const auto& ls = st.learners[i];
    j["learners"].push_back({{"b_value", st.learner_b[i]},
                             {"W", mat_json(ls.rs.W)},
                             {"b", vec_json(ls.rs.b)},
                             {"W0", mat_json(ls.rs.W0)},
                             {"lambda", ls.rs.lambda},
                             {"t1", ls.rs.t1},
                             {"b_mode", ls.rs.b_mode == BiasMode::Fixed ? "fixed" : "learned"},
                             {"gamma", ls.gamma},
                             {"anneal", sched_json(ls.anneal)},
                             {"iteration", ls.iteration}});
  }
  if (st.grounding) {
    const auto& g = *st.grounding;
    std::vector<int> free(g.free.begin(), g.free.end());
    j["grounding"] = {{"S", mat_json(g.S)},      {"anchor", mat_json(g.anchor)}, {"free", free},
                      {"alpha", g.alpha},         {"anneal", sched_json(g.anneal)}};
  } else {
    j["grounding"] = nullptr;
  }
  j["model"] = st.model ? to_json(*st.model) : nlohmann::json(nullptr);
  j["prev_objective"] = st.prev_objective;
  j["stable_epochs"] = st.stable_epochs;
  j["converged"] = st.converged;
  return j;
}

TrainState checkpoint_state_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("version")) throw Error(ErrorKind::CorruptFile, "checkpoint: missing version");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw Error(ErrorKind::VersionMismatch, "checkpoint: unsupported version " + j.at("version").dump());
    TrainState st;
    st.epoch = j.at("epoch").get<int>();
    st.rng = RngState(j.at("rng").at("seed").get<std::uint64_t>(), j.at("rng").at("position").get<std::uint64_t>());
    for (const auto& l : j.at("learners")) {
      LearnerState ls;
      ls.rs.W = json_mat(l.at("W"));
      ls.rs.b = json_vec(l.at("b"));
      ls.rs.W0 = json_mat(l.at("W0"));
      ls.rs.lambda = l.at("lambda").get<double>();
      ls.rs.t1 = l.at("t1").get<double>();
      ls.rs.b_mode = l.at("b_mode").get<std::string>() == "fixed" ? BiasMode::Fixed : BiasMode::Learned;
      ls.gamma = l.at("gamma").get<double>();
      ls.anneal = json_sched(l.at("anneal"));
      ls.iteration = l.at("iteration").get<long>();
      if (ls.rs.W.rows() != ls.rs.b.size() || ls.rs.W.rows() != ls.rs.W0.rows() || ls.rs.W.cols() != ls.rs.W0.cols())
        throw Error(ErrorKind::CorruptFile, "checkpoint: learner shapes disagree");
      st.learners.push_back(std::move(ls));
      st.learner_b.push_back(l.at("b_value").get<int>());
    }
    if (!j.at("grounding").is_null()) {
      const auto& g = j.at("grounding");
      GroundingBatch gb;
      gb.S = json_mat(g.at("S"));
      gb.anchor = json_mat(g.at("anchor"));
      for (int f : g.at("free").get<std::vector<int>>()) gb.free.push_back(static_cast<char>(f));
      gb.alpha = g.at("alpha").get<double>();
      gb.anneal = json_sched(g.at("anneal"));
      st.grounding = std::move(gb);
    }
    if (!j.at("model").is_null()) st.model = mlp_from_json(j.at("model"));
    st.prev_objective = j.at("prev_objective").get<double>();
    st.stable_epochs = j.at("stable_epochs").get<int>();
    st.converged = j.at("converged").get<bool>();
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptFile, std::string("checkpoint: ") + e.what());
  }
}

void atomic_write(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::InvalidArgument, "write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::string& path) {
  atomic_write(path, checkpoint_to_json(state, cfg).dump(1) + "\n");
}

std::pair<TrainState, TrainConfig> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::CorruptFile, "checkpoint: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptFile, std::string("checkpoint: ") + e.what());
  }
  TrainState st = checkpoint_state_from_json(j);
  return {std::move(st), train_config_from_json(j.at("config"))};
}

}  // namespace nesy
