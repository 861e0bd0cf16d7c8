#pragma once

#include <span>

#include "curriseg/grid.hpp"
#include "curriseg/model.hpp"
#include "curriseg/synthdata.hpp"

namespace curriseg {

inline constexpr double kDefaultBetaSq = 0.3;

/// Mean |p - y|.
double mae(const Grid2D& prediction_probs, const BitMask& target);

/// F-measure of the prediction binarized at 0.5; 0 when undefined.
double f_beta(const Grid2D& prediction_probs, const BitMask& target, double beta_sq = kDefaultBetaSq);

/// 2|A & B| / (|A| + |B|) on the binarized prediction; both empty gives 1.
double dice(const Grid2D& prediction_probs, const BitMask& target);

/// IoU of the binarized prediction.
double binary_iou(const Grid2D& prediction_probs, const BitMask& target);

struct MetricReport {
  double mae = 0.0;
  double iou = 0.0;
  double dice = 0.0;
  double f_beta = 0.0;
  std::size_t n_samples = 0;
};

Grid2D probabilities(const Grid2D& logits);

/// Dataset means of per-sample metrics for `params` on `samples`.
MetricReport evaluate(const ConvNetParams& params, std::span<const Sample> samples);

}  // namespace curriseg
