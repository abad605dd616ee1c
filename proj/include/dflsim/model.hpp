#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dflsim/sample.hpp"

namespace dflsim {

// Fixed MLP architecture: 22 -> 128 -> 32 -> 2 (ReLU between layers,
// softmax head). Index 0 of the output is Benign, index 1 Malicious.
inline constexpr std::array<int, 4> kMlpDims{kFeatureCount, 128, 32, 2};

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 32;
  int local_epochs = 1;
  std::uint64_t seed = 0;
};

struct Prediction {
  Eigen::Vector2d prob;  // (P[Benign], P[Malicious]), sums to 1

  // Argmax with ties resolved toward Benign.
  Label predicted() const {
    return prob[1] > prob[0] ? Label::kMalicious : Label::kBenign;
  }
};

struct ModelParams {
  struct Layer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
  };
  std::vector<Layer> layers;

  bool same_shape(const ModelParams& other) const;
  bool all_finite() const;
};

// Symmetric uniform init scaled by 1/sqrt(fan_in); biases zero.
ModelParams init_model(std::uint64_t seed);

Prediction forward(const ModelParams& model, const Eigen::VectorXd& features);

// Columns are samples; returns a 2 x n matrix of class probabilities.
Eigen::MatrixXd forward_batch(const ModelParams& model, const Eigen::MatrixXd& features);

// Analytic gradient of the mean softmax cross-entropy over the batch,
// returned in the same shape as the model.
ModelParams gradients(const ModelParams& model, std::span<const Sample> batch);

double mean_cross_entropy(const ModelParams& model, std::span<const Sample> data);

// Mini-batch SGD; batch order is a seeded shuffle per epoch. The input
// model is left untouched.
ModelParams train_local(const ModelParams& model, const std::vector<Sample>& data,
                        const TrainConfig& cfg);

double accuracy(const ModelParams& model, std::span<const Sample> data);

// Flat layout: for each layer in order, weights row-major then bias.
Eigen::VectorXd to_flat(const ModelParams& model);
ModelParams from_flat(const Eigen::VectorXd& flat);

void save_model_json(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_model_json(const std::filesystem::path& path);

}  // namespace dflsim
