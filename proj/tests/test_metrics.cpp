#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dflsim/metrics.hpp"
#include "dflsim/rng.hpp"

using namespace dflsim;

namespace {

// A model that always predicts the given label, built from zeroed weights
// and an output bias.
ModelParams constant_model(Label label) {
  ModelParams m = init_model(1);
  for (auto& layer : m.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  m.layers[2].bias[static_cast<int>(label)] = 5.0;
  return m;
}

Sample sample_with_label(Label label, double x) {
  Sample s;
  s.features = Eigen::VectorXd::Constant(kFeatureCount, x);
  s.label = label;
  return s;
}

}  // namespace

TEST_CASE("confusion counts and row probabilities") {
  // Constant-B classifier: of 4 M samples all 4 predicted B.
  const ModelParams b_model = constant_model(Label::kBenign);
  std::vector<Sample> test;
  for (int i = 0; i < 4; ++i) test.push_back(sample_with_label(Label::kMalicious, i));
  for (int i = 0; i < 2; ++i) test.push_back(sample_with_label(Label::kBenign, i));
  const ConfusionStats s = confusion(b_model, test);
  CHECK(s.counts[1][0] == 4);
  CHECK(s.counts[0][0] == 2);
  CHECK(s.p_bm() == 1.0);
  CHECK(s.p_mm() == 0.0);
  CHECK(s.p_bb() == 1.0);
  CHECK(s.total() == 6);
  CHECK(s.p_bm() + s.p_mm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.p_bb() + s.p_mb() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("partial misclassification rates") {
  // Hand-built counts: 4 M samples, 3 predicted B.
  ConfusionStats s;
  s.counts[1][0] = 3;
  s.counts[1][1] = 1;
  CHECK(s.p_bm() == 0.75);
  CHECK(s.p_mm() == 0.25);
}

TEST_CASE("empty test set is rejected") {
  const ModelParams m = init_model(1);
  CHECK_THROWS_AS(confusion(m, std::vector<Sample>{}), std::invalid_argument);
}

TEST_CASE("network_average of identical stats is unchanged") {
  ConfusionStats s;
  s.counts[1][0] = 2;
  s.counts[1][1] = 8;
  s.counts[0][0] = 9;
  s.counts[0][1] = 1;
  const std::vector<ConfusionStats> stats{s, s, s};
  const AveragedStats avg = network_average(stats);
  CHECK(avg.p_mm == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(avg.p_bm == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(avg.pooled.counts[1][1] == 24);
}

TEST_CASE("network_average mixes rates unweighted and is order-invariant") {
  ConfusionStats zero, one;
  zero.counts[1][0] = 5;  // P(M|M) = 0
  one.counts[1][1] = 50;  // P(M|M) = 1, ten times the test size
  const std::vector<ConfusionStats> ab{zero, one};
  const std::vector<ConfusionStats> ba{one, zero};
  CHECK(network_average(ab).p_mm == 0.5);  // mean of rates, not pooled
  CHECK(network_average(ba).p_mm == 0.5);
  CHECK(network_average(ab).pooled.p_mm() == doctest::Approx(50.0 / 55.0));

  const std::vector<ConfusionStats> single{one};
  CHECK(network_average(single).p_mm == 1.0);
}

TEST_CASE("improvement deltas") {
  ConfusionStats defended, undefended;
  defended.counts[1][1] = 9;
  defended.counts[1][0] = 1;  // P(M|M)=0.9
  undefended.counts[1][1] = 5;
  undefended.counts[1][0] = 5;  // 0.5
  CHECK(improvement(defended, undefended) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(improvement(defended, defended) == 0.0);
  CHECK(relative_improvement(0.9, 0.5) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(std::isnan(relative_improvement(0.9, 0.0)));
}

TEST_CASE("argmax tie predicts benign") {
  ModelParams zero = init_model(1);
  for (auto& layer : zero.layers) {
    layer.weights.setZero();
    layer.bias.setZero();
  }
  std::vector<Sample> test{sample_with_label(Label::kMalicious, 1.0)};
  const ConfusionStats s = confusion(zero, test);
  CHECK(s.counts[1][0] == 1);  // predicted B on the exact tie
}
