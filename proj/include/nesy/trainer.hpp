#pragma once

// Joint training loop. Each epoch runs, in order: network prediction,
// constraint learning (one proximal step per learner), symbol grounding,
// network training, and annealing of the two DC penalties.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nesy/constraints.hpp"
#include "nesy/grounding.hpp"
#include "nesy/learner.hpp"
#include "nesy/perception.hpp"
#include "nesy/reasoner.hpp"
#include "nesy/tasks.hpp"

namespace nesy {

struct TrainConfig {
  std::uint64_t seed = 0;
  int epochs = 3000;  // K
  int m = 512;        // constraint rows per learner
  double alpha = 0.5;
  double lambda = 0.1;
  double gamma = 0.001;
  double eta = 0.5;   // network learning rate
  int batch_size = 64;
  int hidden = 64;
  double t1_step_fraction = 0.0005;  // of the constraint subproblem's delta_max
  double t2_step_fraction = 0.0005;  // of the grounding subproblem's delta_max
  double cap_multiple = 10.0;
  double epsilon = 1e-3;
  std::string b_mode = "fixed";  // "fixed" (one learner per b value) or "learned"
  std::vector<int> b_values{1};
  double b_init = 1.0;           // learned mode start
  double coverage = 1.0;         // k for bound estimation
  bool b_filter = true;          // keep rows whose estimated bounds contain their b
  std::string perception = "auto";  // auto | on | off
  bool round_predictions = false;
  bool ground_outputs = true;    // joint grounding of output bits
  bool ndc = false;              // ablation: no DC penalty, hard rounding at the end
  int patience = 5;
  double rel_tol = 1e-6;

  void validate() const;
};

/// Unknown keys are rejected with InvalidArgument.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
/// Every key with its default value and a one-line description.
std::vector<std::pair<std::string, std::string>> train_config_help();

struct MetricsRow {
  int epoch = 0;
  double perception_acc = 1.0;
  double w_booleanness = 0;
  double z_booleanness = 0;
  long rank = 0;
  long distinct = 0;
  double grounding_change = 0;
  double objective = 0;
  double w_update_sq = 0;
  double theta_update_sq = 0;
  double t1 = 0;
  double t2 = 0;
  double loss = 0;
};

std::string metrics_csv_header();
std::string to_csv(const MetricsRow& r);
nlohmann::json to_json(const MetricsRow& r);

/// Epoch phases, recorded in execution order.
enum class Phase { Prediction, ConstraintLearning, Grounding, NetworkTraining, Annealing };
const char* to_string(Phase p) noexcept;

/// Everything the loop needs to continue from an epoch boundary.
struct TrainState {
  int epoch = 0;
  std::vector<LearnerState> learners;
  std::vector<int> learner_b;  // sweep value per learner (0 in learned mode)
  std::optional<GroundingBatch> grounding;
  std::optional<MlpModel> model;
  RngState rng;
  double prev_objective = 0;
  int stable_epochs = 0;
  bool converged = false;
};

/// Fixed, per-dataset view used by the loop: the known part of every row,
/// which coordinates come from the network or from grounding, and the
/// per-cell perception inputs.
struct TaskBinding {
  Matrix base;                      // N x d, known values (0 where unknown)
  std::vector<char> perceived;      // coordinates produced by the network
  std::vector<char> auxiliary;      // coordinates with no observation at all
  std::vector<char> free;           // grounded coordinates
  Matrix cell_inputs;               // R x input, one row per perceived cell
  std::vector<std::pair<int, int>> cell_rows;  // (sample, first latent coordinate)
  int cell_output = 0;
  HeadKind head = HeadKind::Softmax;
  bool uses_perception = false;

  bool static_batch() const { return !uses_perception && free.empty(); }
};

TaskBinding bind_task(const Dataset& ds, const TrainConfig& cfg);

TrainState init_training(const TrainConfig& cfg, const Dataset& ds, const TaskBinding& tb);

/// One epoch; appends the phases it ran to `trace` when given.
MetricsRow train_epoch(TrainState& state, const TrainConfig& cfg, const Dataset& ds, const TaskBinding& tb,
                       std::vector<Phase>* trace = nullptr);

/// Rows of the current constraint-learning batch (predictions, grounding and observations).
Matrix current_batch(const TrainState& state, const TaskBinding& tb, bool round = false);

struct Provenance {
  int b = 0;
  int learner = 0;
};

struct TrainResult {
  CardinalitySystem system;
  std::vector<Provenance> provenance;  // parallel to system.constraints
  std::optional<MlpModel> model;
  std::vector<MetricsRow> metrics;
  TrainState state;
  long raw_rank = 0;      // rank of the stacked binarized W before filtering
  long final_rank = 0;    // rank of the learned system's weight matrix
};

/// Binarizes every learner, estimates bounds, filters and deduplicates.
TrainResult finish_training(TrainState state, const TrainConfig& cfg, const Dataset& ds, const TaskBinding& tb,
                            std::vector<MetricsRow> metrics);

/// init + epochs until K or convergence + finish.
TrainResult run_training(const TrainConfig& cfg, const Dataset& ds);

/// Same, starting from a loaded state.
TrainResult resume_training(TrainState state, const TrainConfig& cfg, const Dataset& ds,
                            std::vector<MetricsRow> metrics = {});

struct EvalReport {
  long samples = 0;
  double perception_acc = 0;  // boards whose perceived cells are all correct
  double solving_acc = 0;     // boards whose reasoner output matches the truth
  double total_acc = 0;       // both
  double cell_perception_acc = 0;
  double cell_solving_acc = 0;
  long budget_exceeded = 0;
  long infeasible = 0;
};

nlohmann::json to_json(const EvalReport& r);

/// Inference problem for one test sample: observed bits fixed, perceived
/// symbols as soft preferences. Also scores perception when z is known.
struct SampleProblem {
  InferenceProblem problem;
  bool perceived_ok = true;
  long cells_seen = 0;
  long cells_right = 0;
};

SampleProblem sample_problem(const CardinalitySystem& system, const std::optional<MlpModel>& model,
                             const Dataset& test, std::size_t index, const SearchLimits& limits = {});

EvalReport evaluate(const CardinalitySystem& system, const std::optional<MlpModel>& model, const Dataset& test,
                    const SearchLimits& limits = {});

/// Versioned JSON checkpoint with the full training state and config.
nlohmann::json checkpoint_to_json(const TrainState& state, const TrainConfig& cfg);
TrainState checkpoint_state_from_json(const nlohmann::json& j);
void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::string& path);
std::pair<TrainState, TrainConfig> load_checkpoint(const std::string& path);

/// Writes `text` to `path` through a temporary file and rename.
void atomic_write(const std::string& path, const std::string& text);

}  // namespace nesy
