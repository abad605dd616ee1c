#include "dflsim/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "dflsim/rng.hpp"

namespace dflsim {

namespace {

using json = nlohmann::json;

void check_feature_dim(const Eigen::VectorXd& features) {
  if (features.size() != kFeatureCount)
    throw std::invalid_argument("forward: expected " + std::to_string(kFeatureCount) +
                                " features, got " + std::to_string(features.size()));
}

void check_model_shape(const ModelParams& model) {
  if (model.layers.size() != kMlpDims.size() - 1)
    throw std::invalid_argument("model must have exactly 3 layers");
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (layer.weights.rows() != kMlpDims[l + 1] || layer.weights.cols() != kMlpDims[l] ||
        layer.bias.size() != kMlpDims[l + 1])
      throw std::invalid_argument("model layer " + std::to_string(l) + " has wrong dimensions");
  }
}

// Keeps the pre-activations needed for backprop.
struct ForwardTrace {
  Eigen::MatrixXd z1, a1, z2, a2, probs;
};

ForwardTrace forward_trace(const ModelParams& m, const Eigen::MatrixXd& x) {
  ForwardTrace t;
  t.z1 = (m.layers[0].weights * x).colwise() + m.layers[0].bias;
  t.a1 = t.z1.cwiseMax(0.0);
  t.z2 = (m.layers[1].weights * t.a1).colwise() + m.layers[1].bias;
  t.a2 = t.z2.cwiseMax(0.0);
  Eigen::MatrixXd logits = (m.layers[2].weights * t.a2).colwise() + m.layers[2].bias;
  // Softmax with per-column max subtraction.
  const Eigen::RowVectorXd max = logits.colwise().maxCoeff();
  Eigen::MatrixXd shifted = (logits.rowwise() - max).array().exp();
  const Eigen::RowVectorXd sums = shifted.colwise().sum();
  t.probs = shifted.array().rowwise() / sums.array();
  return t;
}

Eigen::MatrixXd batch_features(std::span<const Sample> batch) {
  Eigen::MatrixXd x(kFeatureCount, static_cast<Eigen::Index>(batch.size()));
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    check_feature_dim(batch[static_cast<std::size_t>(i)].features);
    x.col(i) = batch[static_cast<std::size_t>(i)].features;
  }
  return x;
}

ModelParams gradients_impl(const ModelParams& model, std::span<const Sample> batch) {
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  const Eigen::MatrixXd x = batch_features(batch);
  const ForwardTrace t = forward_trace(model, x);

  Eigen::MatrixXd g3 = t.probs;  // d(mean CE)/d(logits) = (p - y) / n
  for (Eigen::Index i = 0; i < n; ++i)
    g3(static_cast<int>(batch[static_cast<std::size_t>(i)].label), i) -= 1.0;
  g3 /= static_cast<double>(n);

  ModelParams grad;
  grad.layers.resize(3);
  grad.layers[2].weights = g3 * t.a2.transpose();
  grad.layers[2].bias = g3.rowwise().sum();

  Eigen::MatrixXd g2 = (model.layers[2].weights.transpose() * g3).array() *
                       (t.z2.array() > 0.0).cast<double>();
  grad.layers[1].weights = g2 * t.a1.transpose();
  grad.layers[1].bias = g2.rowwise().sum();

  Eigen::MatrixXd g1 = (model.layers[1].weights.transpose() * g2).array() *
                       (t.z1.array() > 0.0).cast<double>();
  grad.layers[0].weights = g1 * x.transpose();
  grad.layers[0].bias = g1.rowwise().sum();
  return grad;
}

}  // namespace

bool ModelParams::same_shape(const ModelParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weights.rows() != other.layers[l].weights.rows() ||
        layers[l].weights.cols() != other.layers[l].weights.cols() ||
        layers[l].bias.size() != other.layers[l].bias.size())
      return false;
  }
  return true;
}

bool ModelParams::all_finite() const {
  for (const auto& layer : layers)
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

ModelParams init_model(std::uint64_t seed) {
  Rng rng(seed);
  ModelParams m;
  m.layers.resize(3);
  for (std::size_t l = 0; l < 3; ++l) {
    const int fan_in = kMlpDims[l];
    const int fan_out = kMlpDims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    auto& layer = m.layers[l];
    layer.weights.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = rng.uniform(-scale, scale);
    layer.bias = Eigen::VectorXd::Zero(fan_out);
  }
  return m;
}

Prediction forward(const ModelParams& model, const Eigen::VectorXd& features) {
  check_feature_dim(features);
  check_model_shape(model);
  const Eigen::MatrixXd probs = forward_batch(model, features);
  return Prediction{probs.col(0)};
}

Eigen::MatrixXd forward_batch(const ModelParams& model, const Eigen::MatrixXd& features) {
  if (features.rows() != kFeatureCount)
    throw std::invalid_argument("forward_batch: feature matrix must have " +
                                std::to_string(kFeatureCount) + " rows");
  check_model_shape(model);
  return forward_trace(model, features).probs;
}

ModelParams gradients(const ModelParams& model, std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
  check_model_shape(model);
  return gradients_impl(model, batch);
}

double mean_cross_entropy(const ModelParams& model, std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("mean_cross_entropy: empty data");
  const Eigen::MatrixXd x = batch_features(data);
  Eigen::MatrixXd logits = x;
  logits = (model.layers[0].weights * logits).colwise() + model.layers[0].bias;
  logits = logits.cwiseMax(0.0);
  logits = (model.layers[1].weights * logits).colwise() + model.layers[1].bias;
  logits = logits.cwiseMax(0.0);
  logits = (model.layers[2].weights * logits).colwise() + model.layers[2].bias;

  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const double zmax = logits.col(i).maxCoeff();
    const double lse = zmax + std::log((logits.col(i).array() - zmax).exp().sum());
    total += lse - logits(static_cast<int>(data[static_cast<std::size_t>(i)].label), i);
  }
  return total / static_cast<double>(logits.cols());
}

ModelParams train_local(const ModelParams& model, const std::vector<Sample>& data,
                        const TrainConfig& cfg) {
  if (data.empty()) throw std::runtime_error("train_local: no training data");
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("learning_rate must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (cfg.local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
  check_model_shape(model);

  ModelParams current = model;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);
      const ModelParams grad = gradients_impl(current, batch);
      for (std::size_t l = 0; l < current.layers.size(); ++l) {
        current.layers[l].weights -= cfg.learning_rate * grad.layers[l].weights;
        current.layers[l].bias -= cfg.learning_rate * grad.layers[l].bias;
      }
    }
  }
  return current;
}

double accuracy(const ModelParams& model, std::span<const Sample> data) {
  if (data.empty()) throw std::invalid_argument("accuracy: empty data");
  const Eigen::MatrixXd probs = forward_batch(model, batch_features(data));
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < probs.cols(); ++i) {
    const Label pred = probs(1, i) > probs(0, i) ? Label::kMalicious : Label::kBenign;
    if (pred == data[static_cast<std::size_t>(i)].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probs.cols());
}

Eigen::VectorXd to_flat(const ModelParams& model) {
  check_model_shape(model);
  Eigen::Index total = 0;
  for (const auto& layer : model.layers) total += layer.weights.size() + layer.bias.size();
  Eigen::VectorXd flat(total);
  Eigen::Index pos = 0;
  for (const auto& layer : model.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) flat[pos++] = layer.weights(r, c);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) flat[pos++] = layer.bias[i];
  }
  return flat;
}

ModelParams from_flat(const Eigen::VectorXd& flat) {
  ModelParams m;
  m.layers.resize(3);
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    auto& layer = m.layers[l];
    layer.weights.resize(kMlpDims[l + 1], kMlpDims[l]);
    layer.bias.resize(kMlpDims[l + 1]);
    if (pos + layer.weights.size() + layer.bias.size() > flat.size())
      throw std::invalid_argument("from_flat: vector too short");
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = flat[pos++];
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = flat[pos++];
  }
  if (pos != flat.size()) throw std::invalid_argument("from_flat: vector too long");
  return m;
}

void save_model_json(const ModelParams& model, const std::filesystem::path& path) {
  const Eigen::VectorXd flat = to_flat(model);
  json j;
  j["dims"] = kMlpDims;
  j["values"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path.string());
  out << j.dump();
}

ModelParams load_model_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read model file: " + path.string());
  json j;
  in >> j;
  const auto dims = j.at("dims").get<std::vector<int>>();
  if (!std::equal(dims.begin(), dims.end(), kMlpDims.begin(), kMlpDims.end()))
    throw std::runtime_error("model file has unexpected dimensions");
  const auto values = j.at("values").get<std::vector<double>>();
  Eigen::VectorXd flat =
      Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return from_flat(flat);
}

}  // namespace dflsim
