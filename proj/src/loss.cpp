#include "curriseg/loss.hpp"

#include <algorithm>
#include <cmath>

namespace curriseg {

double sigmoid(double logit) {
  if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

namespace {

void check_shapes(const Grid2D& logits, const BitMask& target, const Grid2D& weights) {
  if (logits.height() != target.height() || logits.width() != target.width() || !logits.same_shape(weights))
    throw DomainError("loss: logits, target and weights must share a shape");
}

}  // namespace

LossValue weighted_bce(const Grid2D& logits, const BitMask& target, const Grid2D& pixel_weights) {
  check_shapes(logits, target, pixel_weights);
  const double weight_sum = pixel_weights.sum();
  if (!(weight_sum > 0.0)) throw DomainError("weighted_bce: pixel weights sum to zero");
  LossValue out{0.0, Grid2D(logits.height(), logits.width())};
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double raw = sigmoid(logits[i]);
    const bool clamped = raw < kProbabilityClamp || raw > 1.0 - kProbabilityClamp;
    const double p = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double y = target[i] ? 1.0 : 0.0;
    const double w = pixel_weights[i];
    acc += w * (y > 0.0 ? -std::log(p) : -std::log(1.0 - p));
    // d/dz of [-y log p - (1-y) log(1-p)] is p - y where the clamp is inactive.
    out.grad[i] = clamped ? 0.0 : w * (p - y) / weight_sum;
  }
  out.value = acc / weight_sum;
  return out;
}

LossValue weighted_iou(const Grid2D& logits, const BitMask& target, const Grid2D& pixel_weights) {
  check_shapes(logits, target, pixel_weights);
  const std::size_t n = logits.size();
  std::vector<double> probs(n);
  double inter = kIouSmoothing;
  double uni = kIouSmoothing;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = sigmoid(logits[i]);
    const double y = target[i] ? 1.0 : 0.0;
    const double w = pixel_weights[i];
    probs[i] = p;
    inter += w * p * y;
    uni += w * (p + y - p * y);
  }
  LossValue out{1.0 - inter / uni, Grid2D(logits.height(), logits.width())};
  const double uni_sq = uni * uni;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = probs[i];
    const double y = target[i] ? 1.0 : 0.0;
    const double w = pixel_weights[i];
    // dI/dp = w y, dU/dp = w (1 - y)
    const double dloss_dp = -(w * y * uni - inter * w * (1.0 - y)) / uni_sq;
    out.grad[i] = dloss_dp * p * (1.0 - p);
  }
  return out;
}

CurriculumLoss curriculum_loss(const Grid2D& logits, const BitMask& target, const Grid2D& pixel_weights,
                               double sample_weight) {
  if (!(sample_weight >= 0.0 && sample_weight <= 1.0) || !std::isfinite(sample_weight))
    throw DomainError("curriculum_loss: sample weight must lie in [0, 1]");
  auto bce = weighted_bce(logits, target, pixel_weights);
  auto soft_iou = weighted_iou(logits, target, pixel_weights);
  CurriculumLoss out;
  out.breakdown.bce = bce.value;
  out.breakdown.iou = soft_iou.value;
  out.breakdown.sample_weight_applied = sample_weight;
  out.breakdown.total = sample_weight * (bce.value + soft_iou.value);
  out.grad = std::move(bce.grad);
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] = sample_weight * (out.grad[i] + soft_iou.grad[i]);
  return out;
}

CurriculumLoss anti_loss(const Grid2D& logits_on_filtered_input, const BitMask& target) {
  const Grid2D uniform(logits_on_filtered_input.height(), logits_on_filtered_input.width(), 1.0);
  return curriculum_loss(logits_on_filtered_input, target, uniform, 1.0);
}

}  // namespace curriseg
