#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dflsim/model.hpp"
#include "dflsim/rng.hpp"

using namespace dflsim;

namespace {

Sample make_sample(const Eigen::VectorXd& features, Label label) {
  Sample s;
  s.features = features;
  s.label = label;
  return s;
}

std::vector<Sample> random_samples(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd f(kFeatureCount);
    for (int k = 0; k < kFeatureCount; ++k) f[k] = rng.normal();
    out.push_back(make_sample(f, rng.bernoulli(0.5) ? Label::kMalicious : Label::kBenign));
  }
  return out;
}

// Two linearly separable blobs along feature 0.
std::vector<Sample> separable_toy_set(int per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < 2 * per_class; ++i) {
    const Label label = i < per_class ? Label::kBenign : Label::kMalicious;
    Eigen::VectorXd f(kFeatureCount);
    for (int k = 0; k < kFeatureCount; ++k) f[k] = 0.3 * rng.normal();
    f[0] += label == Label::kMalicious ? 2.0 : -2.0;
    out.push_back(make_sample(f, label));
  }
  return out;
}

bool models_equal(const ModelParams& a, const ModelParams& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].weights != b.layers[l].weights) return false;
    if (a.layers[l].bias != b.layers[l].bias) return false;
  }
  return true;
}

// Test-side logistic regression oracle: confirms the toy set is separable
// before we require the MLP to fit it.
double logistic_regression_accuracy(const std::vector<Sample>& data, int epochs, double rate) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(kFeatureCount);
  double b = 0.0;
  for (int e = 0; e < epochs; ++e) {
    for (const auto& s : data) {
      const double z = w.dot(s.features) + b;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double y = s.label == Label::kMalicious ? 1.0 : 0.0;
      w -= rate * (p - y) * s.features;
      b -= rate * (p - y);
    }
  }
  int correct = 0;
  for (const auto& s : data) {
    const bool malicious = w.dot(s.features) + b > 0.0;
    if (malicious == (s.label == Label::kMalicious)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("init_model is seed-deterministic with zero biases") {
  const ModelParams a = init_model(7);
  const ModelParams b = init_model(7);
  const ModelParams c = init_model(8);
  CHECK(models_equal(a, b));
  CHECK_FALSE(models_equal(a, c));
  for (const auto& layer : a.layers) CHECK(layer.bias.isZero(0.0));
  CHECK(a.all_finite());
  // Weight scale respects 1/sqrt(fan_in).
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(kMlpDims[l]));
    CHECK(a.layers[l].weights.cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("all-zero model predicts (0.5, 0.5)") {
  ModelParams zero = init_model(1);
  for (auto& layer : zero.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  const Prediction p = forward(zero, Eigen::VectorXd::Random(kFeatureCount));
  CHECK(p.prob[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.prob[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.predicted() == Label::kBenign);  // tie goes to B
}

TEST_CASE("softmax outputs are normalized for random inputs") {
  const ModelParams m = init_model(3);
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd f(kFeatureCount);
    for (int k = 0; k < kFeatureCount; ++k) f[k] = 5.0 * rng.normal();
    const Prediction p = forward(m, f);
    CHECK(std::abs(p.prob.sum() - 1.0) < 1e-9);
    CHECK(p.prob.minCoeff() >= 0.0);
  }
}

TEST_CASE("forward matches a hand-evaluated single-active-path network") {
  // Only weight chain w1 -> w2 -> w3 into the benign logit is nonzero, so
  // the composition reduces to softmax(w3 * relu(w2 * relu(w1 * x)), 0).
  ModelParams m = init_model(2);
  for (auto& layer : m.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  const double w1 = 0.75, w2 = -1.25, w3 = 2.0, x0 = 1.5;
  m.layers[0].weights(0, 0) = w1;
  m.layers[1].weights(0, 0) = w2;
  m.layers[2].weights(0, 0) = w3;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(kFeatureCount);
  x[0] = x0;
  const double h1 = std::max(0.0, w1 * x0);
  const double h2 = std::max(0.0, w2 * h1);
  const double zb = w3 * h2;
  const double expected_b = std::exp(zb) / (std::exp(zb) + 1.0);

  const Prediction p = forward(m, x);
  CHECK(p.prob[0] == doctest::Approx(expected_b).epsilon(1e-12));

  // Same chain with a positive second weight keeps the path alive.
  m.layers[1].weights(0, 0) = 1.25;
  const double h2b = std::max(0.0, 1.25 * h1);
  const double zb2 = w3 * h2b;
  const double expected_b2 = std::exp(zb2) / (std::exp(zb2) + 1.0);
  CHECK(forward(m, x).prob[0] == doctest::Approx(expected_b2).epsilon(1e-12));
}

TEST_CASE("forward rejects wrong dimensions") {
  const ModelParams m = init_model(1);
  CHECK_THROWS_AS(forward(m, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
  // Also covers the single-sample case demanded by the module contract.
  Rng rng(123);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams m = init_model(1000 + static_cast<std::uint64_t>(trial));
    const std::vector<Sample> batch = random_samples(trial == 0 ? 1 : 3, 77 + trial);
    const ModelParams grad = gradients(m, batch);

    // Probe a subset of coordinates in every layer.
    for (int probe = 0; probe < 12; ++probe) {
      const std::size_t layer = rng.uniform_int(3);
      ModelParams plus = m, minus = m;
      const Eigen::Index rows = m.layers[layer].weights.rows();
      const Eigen::Index cols = m.layers[layer].weights.cols();
      const bool use_bias = rng.bernoulli(0.2);
      const double h = 1e-4;
      double analytic = 0.0;
      if (use_bias) {
        const Eigen::Index r = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(rows)));
        plus.layers[layer].bias[r] += h;
        minus.layers[layer].bias[r] -= h;
        analytic = grad.layers[layer].bias[r];
      } else {
        const Eigen::Index r = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(rows)));
        const Eigen::Index c = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(cols)));
        plus.layers[layer].weights(r, c) += h;
        minus.layers[layer].weights(r, c) -= h;
        analytic = grad.layers[layer].weights(r, c);
      }
      const double numeric =
          (mean_cross_entropy(plus, batch) - mean_cross_entropy(minus, batch)) / (2.0 * h);
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient of a duplicated sample equals the single-sample gradient") {
  const ModelParams m = init_model(4);
  const std::vector<Sample> one = random_samples(1, 5);
  std::vector<Sample> twice = {one[0], one[0]};
  const ModelParams g1 = gradients(m, one);
  const ModelParams g2 = gradients(m, twice);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK((g1.layers[l].weights - g2.layers[l].weights).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((g1.layers[l].bias - g2.layers[l].bias).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("two-sample gradient is the mean of per-sample gradients") {
  const ModelParams m = init_model(6);
  const std::vector<Sample> pair = random_samples(2, 9);
  const ModelParams g = gradients(m, pair);
  const ModelParams ga = gradients(m, std::span<const Sample>(&pair[0], 1));
  const ModelParams gb = gradients(m, std::span<const Sample>(&pair[1], 1));
  for (std::size_t l = 0; l < 3; ++l) {
    const Eigen::MatrixXd mean_w = 0.5 * (ga.layers[l].weights + gb.layers[l].weights);
    CHECK((g.layers[l].weights - mean_w).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gradients reject an empty batch") {
  const ModelParams m = init_model(1);
  CHECK_THROWS_AS(gradients(m, std::span<const Sample>{}), std::invalid_argument);
}

TEST_CASE("zero learning rate leaves the model unchanged") {
  const ModelParams m = init_model(10);
  const std::vector<Sample> data = random_samples(16, 21);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.local_epochs = 3;
  const ModelParams trained = train_local(m, data, cfg);
  CHECK(models_equal(m, trained));
}

TEST_CASE("training is deterministic and leaves the input untouched") {
  const ModelParams m = init_model(11);
  const ModelParams before = m;
  const std::vector<Sample> data = random_samples(40, 22);
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.local_epochs = 2;
  const ModelParams a = train_local(m, data, cfg);
  const ModelParams b = train_local(m, data, cfg);
  CHECK(models_equal(a, b));
  CHECK(models_equal(m, before));
  CHECK_FALSE(models_equal(a, m));
  CHECK(a.all_finite());
}

TEST_CASE("training rejects an empty dataset") {
  const ModelParams m = init_model(1);
  CHECK_THROWS_WITH_AS(train_local(m, {}, TrainConfig{}), "train_local: no training data",
                       std::runtime_error);
}

TEST_CASE("separable toy set is fit to >= 0.99 train accuracy") {
  const std::vector<Sample> data = separable_toy_set(40, 33);
  // Oracle first: plain logistic regression separates this set.
  CHECK(logistic_regression_accuracy(data, 200, 0.1) >= 0.99);

  TrainConfig cfg;
  cfg.local_epochs = 200;
  cfg.seed = 3;
  const ModelParams trained = train_local(init_model(12), data, cfg);
  CHECK(accuracy(trained, data) >= 0.99);
}

TEST_CASE("one small full-batch step does not increase the loss") {
  const std::vector<Sample> data = random_samples(24, 55);
  const ModelParams m = init_model(13);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = static_cast<int>(data.size());
  const double before = mean_cross_entropy(m, data);
  const ModelParams after = train_local(m, data, cfg);
  CHECK(mean_cross_entropy(after, data) <= before);
}

TEST_CASE("flat serialization round-trips") {
  const ModelParams m = init_model(77);
  const Eigen::VectorXd flat = to_flat(m);
  CHECK(flat.size() == 22 * 128 + 128 + 128 * 32 + 32 + 32 * 2 + 2);
  CHECK(models_equal(m, from_flat(flat)));

  const auto path = std::filesystem::temp_directory_path() / "dflsim_model_test.json";
  save_model_json(m, path);
  CHECK(models_equal(m, load_model_json(path)));
  std::filesystem::remove(path);
}
