#include "dflsim/metrics.hpp"

#include <limits>
#include <stdexcept>

namespace dflsim {

ConfusionStats confusion(const ModelParams& model, std::span<const Sample> test) {
  if (test.empty()) throw std::invalid_argument("confusion: empty test set");
  Eigen::MatrixXd features(kFeatureCount, static_cast<Eigen::Index>(test.size()));
  for (Eigen::Index i = 0; i < features.cols(); ++i)
    features.col(i) = test[static_cast<std::size_t>(i)].features;
  const Eigen::MatrixXd probs = forward_batch(model, features);

  ConfusionStats stats;
  for (Eigen::Index i = 0; i < probs.cols(); ++i) {
    const Label pred = probs(1, i) > probs(0, i) ? Label::kMalicious : Label::kBenign;
    const Label truth = test[static_cast<std::size_t>(i)].label;
    ++stats.counts[static_cast<int>(truth)][static_cast<int>(pred)];
  }
  return stats;
}

AveragedStats network_average(std::span<const ConfusionStats> per_node) {
  if (per_node.empty()) throw std::invalid_argument("network_average: empty node set");
  AveragedStats avg;
  for (const auto& s : per_node) {
    avg.p_bm += s.p_bm();
    avg.p_bb += s.p_bb();
    avg.p_mm += s.p_mm();
    avg.p_mb += s.p_mb();
    for (int t = 0; t < 2; ++t)
      for (int p = 0; p < 2; ++p) avg.pooled.counts[t][p] += s.counts[t][p];
  }
  const auto n = static_cast<double>(per_node.size());
  avg.p_bm /= n;
  avg.p_bb /= n;
  avg.p_mm /= n;
  avg.p_mb /= n;
  return avg;
}

double improvement(const ConfusionStats& defended, const ConfusionStats& undefended) {
  return defended.p_mm() - undefended.p_mm();
}

double improvement(double defended_p_mm, double undefended_p_mm) {
  return defended_p_mm - undefended_p_mm;
}

double relative_improvement(double defended_p_mm, double undefended_p_mm) {
  if (undefended_p_mm == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (defended_p_mm - undefended_p_mm) / undefended_p_mm;
}

}  // namespace dflsim
