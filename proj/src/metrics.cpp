#include "curriseg/metrics.hpp"

#include <cmath>

#include "curriseg/loss.hpp"

namespace curriseg {

namespace {

void check(const Grid2D& p, const BitMask& y) {
  if (p.height() != y.height() || p.width() != y.width()) throw DomainError("metric: shape mismatch");
}

struct Counts {
  std::size_t tp = 0;
  std::size_t pred = 0;
  std::size_t truth = 0;
};

Counts count(const Grid2D& p, const BitMask& y) {
  check(p, y);
  Counts c;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool on = p[i] >= 0.5;
    c.tp += (on && y[i]) ? 1 : 0;
    c.pred += on ? 1 : 0;
    c.truth += y[i] ? 1 : 0;
  }
  return c;
}

}  // namespace

double mae(const Grid2D& p, const BitMask& y) {
  check(p, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - (y[i] ? 1.0 : 0.0));
  return acc / static_cast<double>(p.size());
}

double f_beta(const Grid2D& p, const BitMask& y, double beta_sq) {
  const auto c = count(p, y);
  const double precision = c.pred ? static_cast<double>(c.tp) / static_cast<double>(c.pred) : 0.0;
  const double recall = c.truth ? static_cast<double>(c.tp) / static_cast<double>(c.truth) : 0.0;
  const double denom = beta_sq * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + beta_sq) * precision * recall / denom;
}

double dice(const Grid2D& p, const BitMask& y) {
  const auto c = count(p, y);
  if (c.pred + c.truth == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(c.pred + c.truth);
}

double binary_iou(const Grid2D& p, const BitMask& y) {
  const auto c = count(p, y);
  const std::size_t uni = c.pred + c.truth - c.tp;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(uni);
}

Grid2D probabilities(const Grid2D& logits) {
  Grid2D p(logits.height(), logits.width());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

MetricReport evaluate(const ConvNetParams& params, std::span<const Sample> samples) {
  MetricReport r;
  for (const auto& s : samples) {
    const Grid2D p = probabilities(forward(params, s.image));
    r.mae += mae(p, s.mask);
    r.iou += binary_iou(p, s.mask);
    r.dice += dice(p, s.mask);
    r.f_beta += f_beta(p, s.mask);
  }
  r.n_samples = samples.size();
  if (r.n_samples > 0) {
    const double n = static_cast<double>(r.n_samples);
    r.mae /= n;
    r.iou /= n;
    r.dice /= n;
    r.f_beta /= n;
  }
  return r;
}

}  // namespace curriseg
