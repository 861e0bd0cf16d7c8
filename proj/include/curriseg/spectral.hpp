#pragma once

#include <complex>
#include <string_view>
#include <vector>

#include "curriseg/grid.hpp"

namespace curriseg {

/// Centered 2-D spectrum. Storage index (i, j) holds frequency
/// (u, v) = (i - H/2, j - W/2) with integer division, so u spans
/// [-floor(H/2), ceil(H/2) - 1]; the DC term sits at (H/2, W/2).
class SpectrumGrid {
 public:
  SpectrumGrid(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  std::complex<double>& at_index(std::size_t i, std::size_t j) { return coeffs_[i * width_ + j]; }
  const std::complex<double>& at_index(std::size_t i, std::size_t j) const { return coeffs_[i * width_ + j]; }
  /// Lookup by centered frequency coordinate.
  const std::complex<double>& at(long u, long v) const;

  long u_of(std::size_t i) const { return static_cast<long>(i) - static_cast<long>(height_ / 2); }
  long v_of(std::size_t j) const { return static_cast<long>(j) - static_cast<long>(width_ / 2); }

  std::vector<std::complex<double>>& coefficients() { return coeffs_; }
  const std::vector<std::complex<double>>& coefficients() const { return coeffs_; }

  /// Zeroes every coefficient whose mask bit is 0. Mask uses the same centered layout.
  void apply_mask(const BitMask& mask);

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<std::complex<double>> coeffs_;
};

/// Unnormalized forward DFT, re-indexed to centered coordinates.
SpectrumGrid dft2(const Grid2D& image);

struct InverseResult {
  Grid2D image;
  double max_imag_residue = 0.0;
};

/// Inverse DFT (divides by H*W); reports the largest discarded imaginary part.
InverseResult idft2_with_residue(const SpectrumGrid& spectrum);
Grid2D idft2(const SpectrumGrid& spectrum);

/// Ideal circular low-pass: bit set iff sqrt(u^2 + v^2) <= r * min(H,W) / 2.
BitMask circular_lowpass_mask(std::size_t height, std::size_t width, double r);

/// Square low-pass: bit set iff max(|u|, |v|) <= r * min(H,W) / 2.
BitMask square_lowpass_mask(std::size_t height, std::size_t width, double r);

/// Smallest radius ratio whose circular mask covers every coordinate.
double full_passband_ratio(std::size_t height, std::size_t width);

/// Low-pass filter inputs in the frequency domain with the circular mask.
Grid2D sbft(const Grid2D& image, double r);

enum class FilterKind { circular, square, progressive };

FilterKind parse_filter_kind(std::string_view name);
std::string_view to_string(FilterKind kind);

/// Mask used by `kind` at a given point of fine-tuning. The progressive
/// filter shrinks its radius ratio linearly from the full passband at
/// epoch_fraction 0 down to r at epoch_fraction 1.
BitMask filter_mask(std::size_t height, std::size_t width, FilterKind kind, double r, double epoch_fraction);

/// Square or progressive filters used by the ablations; circular is sbft.
Grid2D ablation_filter(const Grid2D& image, FilterKind kind, double r, double epoch_fraction);

/// Sum of |F(u,v)|^2 over coordinates whose mask bit is 0.
double energy_outside(const Grid2D& image, const BitMask& mask);

}  // namespace curriseg
