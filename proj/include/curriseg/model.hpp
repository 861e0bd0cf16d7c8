#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "curriseg/grid.hpp"

namespace curriseg {

/// Three 3x3 convolutions (stride 1, zero padding 1): 1 -> 8 -> 8 -> 1
/// channels with ReLU between layers. The parameters live in one flat
/// vector; the layer accessors below are views into it. The same type
/// doubles as the gradient container.
class ConvNetParams {
 public:
  static constexpr std::size_t kHidden = 8;
  static constexpr std::size_t kTaps = 9;

  struct LayerShape {
    std::size_t in_channels;
    std::size_t out_channels;
  };
  static constexpr LayerShape kLayers[3] = {{1, kHidden}, {kHidden, kHidden}, {kHidden, 1}};

  static constexpr std::size_t weight_count(std::size_t layer) {
    return kLayers[layer].in_channels * kLayers[layer].out_channels * kTaps;
  }
  static constexpr std::size_t bias_count(std::size_t layer) { return kLayers[layer].out_channels; }
  // 1*8*9 + 8 + 8*8*9 + 8 + 8*1*9 + 1
  static constexpr std::size_t kParameterCount = 737;

  static constexpr const char* kArchitecture = "fcn3-conv3x3-1x8x8x1-relu";

  /// All-zero parameters.
  ConvNetParams();
  explicit ConvNetParams(std::vector<double> flat);

  /// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
  static ConvNetParams initialize(std::uint64_t seed);

  /// Weights laid out [out][in][ky][kx].
  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::size_t size() const { return values_.size(); }

  bool all_finite() const;
  void fill(double v);
  /// this += scale * other
  void add_scaled(const ConvNetParams& other, double scale);

  friend bool operator==(const ConvNetParams&, const ConvNetParams&) = default;

 private:
  static std::size_t weight_offset(std::size_t layer);
  static std::size_t bias_offset(std::size_t layer);

  std::vector<double> values_;
};

/// Activations retained by a forward pass for the backward pass.
struct ForwardCache {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> input;
  std::vector<double> hidden1;  // post-ReLU, kHidden x H x W
  std::vector<double> hidden2;  // post-ReLU
  Grid2D logits;
};

/// Pre-sigmoid logits with the input's spatial size.
Grid2D forward(const ConvNetParams& params, const Grid2D& image);
ForwardCache forward_cached(const ConvNetParams& params, const Grid2D& image);

/// Gradient of a scalar loss w.r.t. every parameter, given dLoss/dLogits.
ConvNetParams backward(const ConvNetParams& params, const Grid2D& image, const Grid2D& loss_grad_wrt_logits);
ConvNetParams backward(const ConvNetParams& params, const ForwardCache& cache, const Grid2D& loss_grad_wrt_logits);
/// Accumulating variant: gradient += dL/dtheta.
void accumulate_backward(const ConvNetParams& params, const ForwardCache& cache, const Grid2D& loss_grad_wrt_logits,
                         ConvNetParams& gradient);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  ConvNetParams first_moment;
  ConvNetParams second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update in place; increments state.step.
void adam_step(ConvNetParams& params, const ConvNetParams& grads, AdamState& state, double lr);

/// Checkpoint file: JSON object with "architecture", "parameter_count",
/// "step" and "parameters" (flat array in ConvNetParams layout).
struct Checkpoint {
  ConvNetParams params;
  std::uint64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace curriseg
