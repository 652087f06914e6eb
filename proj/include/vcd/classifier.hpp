#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vcd/core.hpp"
#include "vcd/features.hpp"

namespace vcd {

/// Mean-pooled features -> tanh hidden layer -> softmax over the label set.
/// Inputs are mapped through (x - input_shift) * input_scale before the first
/// layer; the identity mapping unless training standardized the inputs.
struct ClassifierModel {
  LabelSet labels;
  Matrix w1;  // F x H
  Vector b1;  // H
  Matrix w2;  // H x C
  Vector b2;  // C
  Vector input_shift;  // F
  Vector input_scale;  // F

  Eigen::Index feature_dim() const { return w1.rows(); }
  Eigen::Index hidden_dim() const { return w1.cols(); }
  Eigen::Index num_classes() const { return w2.cols(); }
};

void validate(const ClassifierModel& model);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases, identity input map.
ClassifierModel init_model(LabelSet labels, Eigen::Index feature_dim, Eigen::Index hidden_dim,
                           std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 6;
  int batch_size = 32;
  int hidden_dim = 128;
  double momentum = 0.9;
  /// Standardize pooled inputs with training-set mean / std.
  bool standardize = true;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

/// Epochs used when the caller does not choose: 6 on natural data only,
/// 3 once derived (resynthesized or augmented) records are present.
int default_epochs(const Dataset& train_set);

struct TrainResult {
  ClassifierModel model;
  /// Mean training loss before the first update (index 0) and after each epoch.
  std::vector<double> loss_trace;
};

/// Arithmetic mean over frames.
Vector pool(const FeatureSequence& feat);

/// Pools the features of every record, in dataset order (rows of the result).
Matrix pool_dataset(const Dataset& data, const FeatureTable& features);

TrainResult train(const Dataset& data, const FeatureTable& features, const TrainConfig& cfg);
/// Same on already pooled inputs; `targets[i]` indexes `labels`.
TrainResult train_pooled(const Matrix& inputs, std::span<const std::size_t> targets,
                         const LabelSet& labels, const TrainConfig& cfg);

struct Prediction {
  std::size_t index = 0;
  std::string label;
  Vector probabilities;
};

Vector logits(const ClassifierModel& model, const Vector& pooled);
/// Softmax of `z`, shifted by max(z) for stability.
Vector softmax(const Vector& z);
Prediction predict_pooled(const ClassifierModel& model, const Vector& pooled);
Prediction predict(const ClassifierModel& model, const FeatureSequence& feat);

struct Gradients {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
};

/// Cross-entropy of one pooled sample; fills `grad` when non-null.
double loss_and_gradients(const ClassifierModel& model, const Vector& pooled, std::size_t label,
                          Gradients* grad);

/// Max relative error between analytic gradients and central differences
/// (step 1e-5) over a seeded random subset of up to 100 parameters.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
double grad_check(const ClassifierModel& model, const Vector& pooled, std::size_t label,
                  std::uint64_t seed = 0);

// "MD01" model file: label list, dims, then little-endian float64 weights.
std::vector<unsigned char> encode_model(const ClassifierModel& model);
ClassifierModel decode_model(std::span<const unsigned char> bytes);
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

/// Two columns per line: epoch, mean loss.
void save_loss_trace(std::span<const double> trace, const std::filesystem::path& path);

}  // namespace vcd
