#pragma once

#include "hetfuse/dataset.hpp"
#include "hetfuse/kernels.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace hetfuse {

using kernels::Activation;

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view text);

struct BatchNormState {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;
  double epsilon = 1e-8;

  static BatchNormState identity(Eigen::Index width);
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
  Activation activation = Activation::identity;
  std::optional<BatchNormState> batchnorm;  // applied between affine and activation

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

struct DenseNet {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  bool has_batchnorm() const;
  bool is_classifier() const;  // softmax output layer
  std::size_t parameter_count() const;
  // Throws ShapeMismatch / InvalidArgument / NonFiniteInput on a broken net.
  void check() const;
};

struct MlpSpec {
  Eigen::Index input_dim = 1;
  Eigen::Index output_dim = 1;
  std::vector<Eigen::Index> hidden{64, 64};
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::identity;
  bool batchnorm = false;  // on hidden layers
  std::uint64_t seed = 0;
};

// Uniform He initialization, zero biases.
DenseNet make_mlp(const MlpSpec& spec);

enum class Mode { train, eval };
enum class Exec { serial, parallel };

// Eval mode: running batch-norm statistics, rows evaluated independently.
Matrix forward(const DenseNet& net, const Matrix& batch, Exec exec = Exec::parallel);
// Train mode uses batch statistics and updates the running statistics.
Matrix forward(DenseNet& net, const Matrix& batch, Mode mode);
// Eval-mode output before a softmax output layer (identical to `forward`
// for other nets).
Matrix logits(const DenseNet& net, const Matrix& batch);
std::vector<int> predict_labels(const DenseNet& net, const Matrix& batch);

Matrix batchnorm_forward(BatchNormState& state, const Matrix& batch, Mode mode);

// Mean over rows of ||d f(x) / d x||_F^2 in eval mode; classifiers are
// differentiated at the logits.
double jacobian_norm(const DenseNet& net, const Matrix& batch);

enum class Optimizer { sgd, adam };

std::string_view to_string(Optimizer o);
Optimizer parse_optimizer(std::string_view text);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double jacobian_coeff = 0.0;
  double task_weight = 1.0;
  // Learns s in exp(-s) * task + s / 2 instead of using task_weight.
  bool adaptive_task_weight = false;
  Optimizer optimizer = Optimizer::adam;
};

struct EpochLoss {
  double task = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
};

struct LossReport {
  std::vector<EpochLoss> epochs;
  std::optional<double> log_variance;  // final s in adaptive mode
};

struct Trained {
  DenseNet net;
  LossReport report;
};

Trained train_regressor(DenseNet net, const Matrix& x, const Matrix& y, const TrainConfig& cfg);
Trained train_classifier(DenseNet net, const Matrix& x, const std::vector<int>& y, const TrainConfig& cfg);

double mse(const Matrix& prediction, const Matrix& target);
double cross_entropy(const Matrix& probabilities, const std::vector<int>& labels);
double accuracy(const Matrix& probabilities, const std::vector<int>& labels);

enum class LossKind { mse, ce, mse_jacobian, ce_jacobian };

struct GradCheckBatch {
  Matrix x;
  Matrix targets;           // mse kinds
  std::vector<int> labels;  // ce kinds
  double jacobian_coeff = 1.0;
  double step = 1e-5;
};

// Max over parameters of |analytic - numeric| / max(|analytic| + |numeric|,
// 1e-6), numeric from central differences. Batch-norm layers run in train
// mode.
double grad_check(const DenseNet& net, LossKind loss, const GradCheckBatch& batch);

}  // namespace hetfuse
