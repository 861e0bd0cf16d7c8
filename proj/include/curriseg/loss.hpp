#pragma once

#include "curriseg/grid.hpp"

namespace curriseg {

inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kIouSmoothing = 1.0;

double sigmoid(double logit);

struct LossValue {
  double value = 0.0;
  Grid2D grad;  // d value / d logits
};

/// Weight-normalized BCE: sum W * bce(p, y) / sum W, with p = sigmoid(logit)
/// clamped to [1e-7, 1 - 1e-7]. The gradient is exact for the clamped form.
LossValue weighted_bce(const Grid2D& logits, const BitMask& target, const Grid2D& pixel_weights);

/// 1 - (sum W p y + 1) / (sum W (p + y - p y) + 1) on soft probabilities.
LossValue weighted_iou(const Grid2D& logits, const BitMask& target, const Grid2D& pixel_weights);

struct LossBreakdown {
  double bce = 0.0;
  double iou = 0.0;
  double total = 0.0;
  double sample_weight_applied = 1.0;
};

struct CurriculumLoss {
  LossBreakdown breakdown;
  Grid2D grad;
};

/// sample_weight * (weighted BCE + weighted IoU); gradient scaled likewise.
CurriculumLoss curriculum_loss(const Grid2D& logits, const BitMask& target, const Grid2D& pixel_weights,
                               double sample_weight);

/// Unweighted BCE + IoU on predictions for low-pass filtered inputs.
CurriculumLoss anti_loss(const Grid2D& logits_on_filtered_input, const BitMask& target);

}  // namespace curriseg
