#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dflsim/model.hpp"
#include "dflsim/sample.hpp"

namespace dflsim {

// 2x2 confusion counts indexed (true label, predicted label) with
// row-normalized conditional probabilities P(pred | true).
struct ConfusionStats {
  std::int64_t counts[2][2] = {{0, 0}, {0, 0}};

  std::int64_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }

  double p(Label truth, Label pred) const {
    const auto t = static_cast<int>(truth);
    const std::int64_t row = counts[t][0] + counts[t][1];
    if (row == 0) return 0.0;
    return static_cast<double>(counts[t][static_cast<int>(pred)]) / static_cast<double>(row);
  }

  double p_bm() const { return p(Label::kMalicious, Label::kBenign); }   // P(B|M)
  double p_bb() const { return p(Label::kBenign, Label::kBenign); }      // P(B|B)
  double p_mm() const { return p(Label::kMalicious, Label::kMalicious); }// P(M|M)
  double p_mb() const { return p(Label::kBenign, Label::kMalicious); }   // P(M|B)
};

// Argmax prediction per sample (ties predict Benign).
ConfusionStats confusion(const ModelParams& model, std::span<const Sample> test);

// Unweighted mean of per-node probabilities (the headline) plus the
// pooled-count variant.
struct AveragedStats {
  double p_bm = 0.0, p_bb = 0.0, p_mm = 0.0, p_mb = 0.0;
  ConfusionStats pooled;
};

AveragedStats network_average(std::span<const ConfusionStats> per_node);

// Absolute percentage-point delta in P(M|M).
double improvement(const ConfusionStats& defended, const ConfusionStats& undefended);
double improvement(double defended_p_mm, double undefended_p_mm);
double relative_improvement(double defended_p_mm, double undefended_p_mm);

}  // namespace dflsim
