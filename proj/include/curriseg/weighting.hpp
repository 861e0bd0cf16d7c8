#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <string_view>

#include "curriseg/grid.hpp"

namespace curriseg {

/// Ring of the most recent difficulty scores for one sample.
class DifficultyBuffer {
 public:
  explicit DifficultyBuffer(std::size_t capacity = 10);

  /// Appends a score in [0,1], evicting the oldest entry at capacity.
  void push(double difficulty);

  std::size_t capacity() const { return capacity_; }
  std::size_t count() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<double>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<double> entries_;
};

struct TemporalStats {
  double mu = 0.0;
  double var = 0.0;
};

/// Population mean and variance of the buffer. Throws on an empty buffer.
TemporalStats temporal_stats(const DifficultyBuffer& buffer);

enum class SigmaVariant { gaussian, triangular, quadratic };

SigmaVariant parse_sigma_variant(std::string_view name);
std::string_view to_string(SigmaVariant v);

struct SampleWeightConfig {
  double sigma_star = 0.5;
  double gamma = 0.2;
  double w_min_s = 0.1;
  SigmaVariant sigma_variant = SigmaVariant::gaussian;
  bool drop_mu = false;
  bool drop_sigma = false;
  bool drop_out = false;
};

struct SampleWeightStats {
  double mu = 0.0;
  double var = 0.0;
  double mu_norm = 0.0;
  double var_norm = 0.0;
  double w_mu = 1.0;
  double w_sigma = 1.0;
  double w_out = 1.0;
  double w = 1.0;
};

/// Weight factors for already-normalized statistics.
SampleWeightStats weight_from_normalized(double mu_norm, double var_norm, const SampleWeightConfig& config);

/// Min-max normalizes the cohort's statistics and converts them to weights.
/// A statistic with zero spread across the cohort takes its neutral value
/// (mu_norm = 0, var_norm = sigma_star).
std::map<int, SampleWeightStats> sample_weights(const std::map<int, TemporalStats>& cohort,
                                                const SampleWeightConfig& config);

/// Binary entropy in bits with 0 log 0 = 0.
double pixel_entropy(double probability);

enum class BetaVariant { linear, exponential };

BetaVariant parse_beta_variant(std::string_view name);
std::string_view to_string(BetaVariant v);

struct PixelWeightConfig {
  double w_min = 0.1;
  int t_c = 50;
  BetaVariant beta_variant = BetaVariant::linear;
};

/// Curriculum coefficient: 1 - t/T_c (linear) or exp(-t/T_c).
double beta_coefficient(int t, const PixelWeightConfig& config);

/// W = W_min + (1 - W_min) (1 - beta(t) H(p)) per pixel.
Grid2D pixel_weight_matrix(const Grid2D& probabilities, int t, const PixelWeightConfig& config);

}  // namespace curriseg
