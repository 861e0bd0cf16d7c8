#include "curriseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace curriseg {

std::size_t ConvNetParams::weight_offset(std::size_t layer) {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += weight_count(l) + bias_count(l);
  return off;
}

std::size_t ConvNetParams::bias_offset(std::size_t layer) { return weight_offset(layer) + weight_count(layer); }

ConvNetParams::ConvNetParams() : values_(kParameterCount, 0.0) {}

ConvNetParams::ConvNetParams(std::vector<double> flat) : values_(std::move(flat)) {
  if (values_.size() != kParameterCount)
    throw DomainError("ConvNetParams: expected " + std::to_string(kParameterCount) + " parameters, got " +
                      std::to_string(values_.size()));
}

ConvNetParams ConvNetParams::initialize(std::uint64_t seed) {
  ConvNetParams p;
  SeededRng rng(seed, 0x1A17);
  for (std::size_t layer = 0; layer < 3; ++layer) {
    const double fan_in = static_cast<double>(kLayers[layer].in_channels * kTaps);
    const double fan_out = static_cast<double>(kLayers[layer].out_channels * kTaps);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& w : p.weights(layer)) w = rng.uniform(-limit, limit);
  }
  return p;
}

std::span<double> ConvNetParams::weights(std::size_t layer) {
  return std::span<double>(values_).subspan(weight_offset(layer), weight_count(layer));
}
std::span<const double> ConvNetParams::weights(std::size_t layer) const {
  return std::span<const double>(values_).subspan(weight_offset(layer), weight_count(layer));
}
std::span<double> ConvNetParams::biases(std::size_t layer) {
  return std::span<double>(values_).subspan(bias_offset(layer), bias_count(layer));
}
std::span<const double> ConvNetParams::biases(std::size_t layer) const {
  return std::span<const double>(values_).subspan(bias_offset(layer), bias_count(layer));
}

bool ConvNetParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void ConvNetParams::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void ConvNetParams::add_scaled(const ConvNetParams& other, double scale) {
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
}

namespace {

// Valid output range along one axis for kernel tap k (0..2) with padding 1.
struct TapRange {
  std::size_t begin;
  std::size_t end;
};

inline TapRange tap_range(std::size_t k, std::size_t n) {
  // output index o reads input o + k - 1; need 0 <= o + k - 1 < n
  return {k == 0 ? 1u : 0u, k == 2 ? n - 1 : n};
}

// out[co] = bias[co] + sum_ci conv(in[ci], w[co][ci])
void conv3x3(const double* in, std::size_t cin, std::size_t cout, std::size_t h, std::size_t w,
             std::span<const double> weights, std::span<const double> bias, double* out) {
  const std::size_t plane = h * w;
  for (std::size_t co = 0; co < cout; ++co) {
    double* o = out + co * plane;
    std::fill(o, o + plane, bias[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* x = in + ci * plane;
      const double* k = weights.data() + (co * cin + ci) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const auto ry = tap_range(ky, h);
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wv = k[ky * 3 + kx];
          if (wv == 0.0) continue;
          const auto rx = tap_range(kx, w);
          for (std::size_t y = ry.begin; y < ry.end; ++y) {
            double* orow = o + y * w;
            const double* xrow = x + (y + ky - 1) * w + kx;
            for (std::size_t xx = rx.begin; xx < rx.end; ++xx) orow[xx] += wv * xrow[xx - 1];
          }
        }
      }
    }
  }
}

// Given dL/dout, accumulate dL/dweights, dL/dbias and (optionally) dL/din.
void conv3x3_backward(const double* in, const double* grad_out, std::size_t cin, std::size_t cout, std::size_t h,
                      std::size_t w, std::span<const double> weights, std::span<double> grad_weights,
                      std::span<double> grad_bias, double* grad_in) {
  const std::size_t plane = h * w;
  for (std::size_t co = 0; co < cout; ++co) {
    const double* g = grad_out + co * plane;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) bsum += g[i];
    grad_bias[co] += bsum;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* x = in + ci * plane;
      const double* k = weights.data() + (co * cin + ci) * 9;
      double* gk = grad_weights.data() + (co * cin + ci) * 9;
      double* gx = grad_in ? grad_in + ci * plane : nullptr;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const auto ry = tap_range(ky, h);
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const auto rx = tap_range(kx, w);
          double acc = 0.0;
          for (std::size_t y = ry.begin; y < ry.end; ++y) {
            const double* grow = g + y * w;
            const double* xrow = x + (y + ky - 1) * w + kx;
            for (std::size_t xx = rx.begin; xx < rx.end; ++xx) acc += grow[xx] * xrow[xx - 1];
          }
          gk[ky * 3 + kx] += acc;
          if (gx) {
            const double wv = k[ky * 3 + kx];
            if (wv == 0.0) continue;
            for (std::size_t y = ry.begin; y < ry.end; ++y) {
              const double* grow = g + y * w;
              double* gxrow = gx + (y + ky - 1) * w + kx;
              for (std::size_t xx = rx.begin; xx < rx.end; ++xx) gxrow[xx - 1] += wv * grow[xx];
            }
          }
        }
      }
    }
  }
}

void relu_inplace(std::vector<double>& v) {
  for (auto& x : v) x = x > 0.0 ? x : 0.0;
}

void check_inputs(const ConvNetParams& params, const Grid2D& image) {
  if (image.height() < 3 || image.width() < 3) throw DomainError("forward: image must be at least 3x3");
  if (!params.all_finite()) throw DomainError("forward: non-finite parameter");
}

}  // namespace

ForwardCache forward_cached(const ConvNetParams& params, const Grid2D& image) {
  check_inputs(params, image);
  constexpr std::size_t C = ConvNetParams::kHidden;
  ForwardCache cache;
  cache.height = image.height();
  cache.width = image.width();
  const std::size_t plane = cache.height * cache.width;
  cache.input.assign(image.values().begin(), image.values().end());
  cache.hidden1.resize(C * plane);
  cache.hidden2.resize(C * plane);
  std::vector<double> out(plane);

  conv3x3(cache.input.data(), 1, C, cache.height, cache.width, params.weights(0), params.biases(0),
          cache.hidden1.data());
  relu_inplace(cache.hidden1);
  conv3x3(cache.hidden1.data(), C, C, cache.height, cache.width, params.weights(1), params.biases(1),
          cache.hidden2.data());
  relu_inplace(cache.hidden2);
  conv3x3(cache.hidden2.data(), C, 1, cache.height, cache.width, params.weights(2), params.biases(2), out.data());
  cache.logits = Grid2D(cache.height, cache.width, std::move(out));
  return cache;
}

Grid2D forward(const ConvNetParams& params, const Grid2D& image) { return forward_cached(params, image).logits; }

void accumulate_backward(const ConvNetParams& params, const ForwardCache& cache, const Grid2D& loss_grad,
                         ConvNetParams& gradient) {
  if (loss_grad.height() != cache.height || loss_grad.width() != cache.width)
    throw DomainError("backward: loss gradient shape does not match forward output");
  constexpr std::size_t C = ConvNetParams::kHidden;
  const std::size_t h = cache.height;
  const std::size_t w = cache.width;
  const std::size_t plane = h * w;

  std::vector<double> grad_h2(C * plane, 0.0);
  conv3x3_backward(cache.hidden2.data(), loss_grad.values().data(), C, 1, h, w, params.weights(2),
                   gradient.weights(2), gradient.biases(2), grad_h2.data());
  for (std::size_t i = 0; i < grad_h2.size(); ++i)
    if (cache.hidden2[i] <= 0.0) grad_h2[i] = 0.0;

  std::vector<double> grad_h1(C * plane, 0.0);
  conv3x3_backward(cache.hidden1.data(), grad_h2.data(), C, C, h, w, params.weights(1), gradient.weights(1),
                   gradient.biases(1), grad_h1.data());
  for (std::size_t i = 0; i < grad_h1.size(); ++i)
    if (cache.hidden1[i] <= 0.0) grad_h1[i] = 0.0;

  conv3x3_backward(cache.input.data(), grad_h1.data(), 1, C, h, w, params.weights(0), gradient.weights(0),
                   gradient.biases(0), nullptr);
}

ConvNetParams backward(const ConvNetParams& params, const ForwardCache& cache, const Grid2D& loss_grad) {
  ConvNetParams gradient;
  accumulate_backward(params, cache, loss_grad, gradient);
  return gradient;
}

ConvNetParams backward(const ConvNetParams& params, const Grid2D& image, const Grid2D& loss_grad) {
  if (!loss_grad.same_shape(image)) throw DomainError("backward: loss gradient shape does not match input");
  return backward(params, forward_cached(params, image), loss_grad);
}

void adam_step(ConvNetParams& params, const ConvNetParams& grads, AdamState& state, double lr) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw DomainError("adam_step: shape mismatch");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  auto theta = params.flat();
  const auto g = grads.flat();
  auto m = state.first_moment.flat();
  auto v = state.second_moment.flat();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * g[i];
    v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    theta[i] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::kEpsilon);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json j;
  j["architecture"] = ConvNetParams::kArchitecture;
  j["parameter_count"] = ConvNetParams::kParameterCount;
  j["step"] = checkpoint.step;
  j["parameters"] = std::vector<double>(checkpoint.params.flat().begin(), checkpoint.params.flat().end());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("architecture", std::string{}) != ConvNetParams::kArchitecture)
    throw IoError("checkpoint " + path.string() + " has an unknown architecture");
  Checkpoint ck{ConvNetParams(j.at("parameters").get<std::vector<double>>()), j.value("step", std::uint64_t{0})};
  return ck;
}

}  // namespace curriseg
