#pragma once

// Small perception network: a multilayer perceptron with rectifier hidden
// layers, optionally applied independently to every cell of a board with
// shared weights. Trained by plain gradient descent on squared error.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "nesy/numkit.hpp"

namespace nesy {

enum class HeadKind { Softmax, Logistic };

struct MlpModel {
  int cells = 1;   // independent applications of the shared classifier
  int input = 0;   // per-cell input width
  int output = 0;  // per-cell output width
  HeadKind head = HeadKind::Softmax;
  std::vector<Matrix> weights;  // layer l maps width_l -> width_{l+1}; stored out x in
  std::vector<Vector> biases;

  int input_dim() const { return cells * input; }
  int output_dim() const { return cells * output; }
  void validate() const;
};

/// He-uniform weights, zero biases.
MlpModel init_mlp(RngState& rng, int cells, int input, const std::vector<int>& hidden, int output, HeadKind head);

struct MlpGradient {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  double squared_norm() const;
};

MlpGradient zero_gradient(const MlpModel& model);

/// Per-sample prediction, length output_dim().
Vector forward(const MlpModel& model, const Vector& x);

/// Rows are samples (N x input_dim) -> (N x output_dim).
Matrix forward_batch(const MlpModel& model, const Matrix& X);

/// Gradient of ||f(x) - target||^2 for one sample.
MlpGradient backward_mse(const MlpModel& model, const Vector& x, const Vector& target);

/// Gradient of the mean over rows of ||f(x_n) - target_n||^2; returns the loss through `loss`.
MlpGradient batch_gradient(const MlpModel& model, const Matrix& X, const Matrix& targets, double* loss = nullptr);

/// theta <- theta - eta * grad
MlpModel sgd_step(MlpModel model, const MlpGradient& grad, double eta);

/// Mean over rows of ||f(x_n) - target_n||^2.
double mse_loss(const MlpModel& model, const Matrix& X, const Matrix& targets);

/// Largest relative error |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// over every parameter, using central differences with step h.
double gradient_check(const MlpModel& model, const Vector& x, const Vector& target, double h = 1e-5,
                      double floor = 1e-6);

/// gradient_check over `nets` random networks (random cells, widths, depth,
/// head and nonzero biases) with random inputs and targets; one error per net.
std::vector<double> gradient_suite(std::uint64_t seed, int nets);

nlohmann::json to_json(const MlpModel& model);
MlpModel mlp_from_json(const nlohmann::json& j);

struct IdxImages {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image
};

IdxImages load_idx_images(const std::string& path);
std::vector<std::uint8_t> load_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

}  // namespace nesy
