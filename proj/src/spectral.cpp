#include "curriseg/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace curriseg {

namespace {

using cplx = std::complex<double>;

// Twiddle table exp(sign * 2*pi*i*k/n) for k in [0, n).
std::vector<cplx> twiddles(std::size_t n, double sign) {
  std::vector<cplx> tw(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    tw[k] = cplx(std::cos(angle), std::sin(angle));
  }
  return tw;
}

// Exact separable DFT over natural (uncentered) indices, in place.
void dft_rows_cols(std::vector<cplx>& data, std::size_t h, std::size_t w, double sign) {
  const auto tw_w = twiddles(w, sign);
  const auto tw_h = twiddles(h, sign);
  std::vector<cplx> buf(std::max(h, w));
  for (std::size_t r = 0; r < h; ++r) {
    cplx* row = data.data() + r * w;
    for (std::size_t k = 0; k < w; ++k) {
      cplx acc = 0.0;
      std::size_t idx = 0;
      for (std::size_t n = 0; n < w; ++n) {
        acc += row[n] * tw_w[idx];
        idx += k;
        if (idx >= w) idx -= w;
      }
      buf[k] = acc;
    }
    std::copy_n(buf.begin(), w, row);
  }
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t k = 0; k < h; ++k) {
      cplx acc = 0.0;
      std::size_t idx = 0;
      for (std::size_t n = 0; n < h; ++n) {
        acc += data[n * w + c] * tw_h[idx];
        idx += k;
        if (idx >= h) idx -= h;
      }
      buf[k] = acc;
    }
    for (std::size_t k = 0; k < h; ++k) data[k * w + c] = buf[k];
  }
}

// Natural index of frequency u in a length-n transform.
std::size_t natural_index(long u, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((u % m) + m) % m);
}

}  // namespace

SpectrumGrid::SpectrumGrid(std::size_t height, std::size_t width)
    : height_(height), width_(width), coeffs_(height * width) {
  if (height == 0 || width == 0) throw DomainError("SpectrumGrid: dimensions must be positive");
}

const std::complex<double>& SpectrumGrid::at(long u, long v) const {
  const long i = u + static_cast<long>(height_ / 2);
  const long j = v + static_cast<long>(width_ / 2);
  if (i < 0 || j < 0 || i >= static_cast<long>(height_) || j >= static_cast<long>(width_))
    throw DomainError("SpectrumGrid::at: frequency outside the centered range");
  return coeffs_[static_cast<std::size_t>(i) * width_ + static_cast<std::size_t>(j)];
}

void SpectrumGrid::apply_mask(const BitMask& mask) {
  if (mask.height() != height_ || mask.width() != width_)
    throw DomainError("SpectrumGrid::apply_mask: mask dimensions differ");
  for (std::size_t i = 0; i < coeffs_.size(); ++i)
    if (!mask[i]) coeffs_[i] = 0.0;
}

SpectrumGrid dft2(const Grid2D& image) {
  if (!image.all_finite()) throw DomainError("dft2: non-finite input");
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  std::vector<cplx> data(image.values().begin(), image.values().end());
  dft_rows_cols(data, h, w, -1.0);
  SpectrumGrid out(h, w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      out.at_index(i, j) = data[natural_index(out.u_of(i), h) * w + natural_index(out.v_of(j), w)];
  return out;
}

InverseResult idft2_with_residue(const SpectrumGrid& spectrum) {
  const std::size_t h = spectrum.height();
  const std::size_t w = spectrum.width();
  std::vector<cplx> data(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      data[natural_index(spectrum.u_of(i), h) * w + natural_index(spectrum.v_of(j), w)] = spectrum.at_index(i, j);
  dft_rows_cols(data, h, w, +1.0);
  const double scale = 1.0 / static_cast<double>(h * w);
  std::vector<double> real(h * w);
  double residue = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    real[k] = data[k].real() * scale;
    residue = std::max(residue, std::abs(data[k].imag() * scale));
  }
  return {Grid2D(h, w, std::move(real)), residue};
}

Grid2D idft2(const SpectrumGrid& spectrum) { return idft2_with_residue(spectrum).image; }

namespace {

template <typename Inside>
BitMask centered_mask(std::size_t height, std::size_t width, Inside inside) {
  BitMask mask(height, width);
  const long h2 = static_cast<long>(height / 2);
  const long w2 = static_cast<long>(width / 2);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j)
      mask.set(i, j, inside(static_cast<long>(i) - h2, static_cast<long>(j) - w2));
  return mask;
}

void check_ratio(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("filter radius ratio must be positive and finite");
}

}  // namespace

BitMask circular_lowpass_mask(std::size_t height, std::size_t width, double r) {
  check_ratio(r);
  const double radius = r * static_cast<double>(std::min(height, width)) / 2.0;
  // Relative slack so lattice points exactly on the boundary survive rounding.
  const double radius_sq = radius * radius * (1.0 + 1e-12);
  return centered_mask(height, width, [radius_sq](long u, long v) {
    return static_cast<double>(u * u + v * v) <= radius_sq;
  });
}

BitMask square_lowpass_mask(std::size_t height, std::size_t width, double r) {
  check_ratio(r);
  const double half = r * static_cast<double>(std::min(height, width)) / 2.0 * (1.0 + 1e-12);
  return centered_mask(height, width, [half](long u, long v) {
    return static_cast<double>(std::max(std::labs(u), std::labs(v))) <= half;
  });
}

double full_passband_ratio(std::size_t height, std::size_t width) {
  return std::sqrt(2.0) * static_cast<double>(std::max(height, width)) / static_cast<double>(std::min(height, width));
}

Grid2D sbft(const Grid2D& image, double r) {
  return ablation_filter(image, FilterKind::circular, r, 1.0);
}

FilterKind parse_filter_kind(std::string_view name) {
  if (name == "circular") return FilterKind::circular;
  if (name == "square") return FilterKind::square;
  if (name == "progressive") return FilterKind::progressive;
  throw DomainError("unknown filter kind '" + std::string(name) + "'");
}

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::circular: return "circular";
    case FilterKind::square: return "square";
    case FilterKind::progressive: return "progressive";
  }
  return "?";
}

BitMask filter_mask(std::size_t height, std::size_t width, FilterKind kind, double r, double epoch_fraction) {
  switch (kind) {
    case FilterKind::circular: return circular_lowpass_mask(height, width, r);
    case FilterKind::square: return square_lowpass_mask(height, width, r);
    case FilterKind::progressive: {
      check_ratio(r);
      if (!(epoch_fraction >= 0.0 && epoch_fraction <= 1.0))
        throw DomainError("progressive filter: epoch_fraction must lie in [0, 1]");
      const double start = full_passband_ratio(height, width);
      return circular_lowpass_mask(height, width, start + (r - start) * epoch_fraction);
    }
  }
  throw DomainError("unknown filter kind");
}

Grid2D ablation_filter(const Grid2D& image, FilterKind kind, double r, double epoch_fraction) {
  auto spectrum = dft2(image);
  spectrum.apply_mask(filter_mask(image.height(), image.width(), kind, r, epoch_fraction));
  return idft2(spectrum);
}

double energy_outside(const Grid2D& image, const BitMask& mask) {
  const auto spectrum = dft2(image);
  if (mask.height() != spectrum.height() || mask.width() != spectrum.width())
    throw DomainError("energy_outside: mask dimensions differ");
  double energy = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i]) energy += std::norm(spectrum.coefficients()[i]);
  return energy;
}

}  // namespace curriseg
