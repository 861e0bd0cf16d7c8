#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace curriseg {

/// Raised when an operation receives arguments outside its domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised on unreadable or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major H x W raster of doubles.
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(std::size_t height, std::size_t width, double fill = 0.0);
  /// Validates size and finiteness.
  Grid2D(std::size_t height, std::size_t width, std::vector<double> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t row, std::size_t col) { return values_[row * width_ + col]; }
  double operator()(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const Grid2D& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const;
  double sum() const;
  double mean() const;

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

/// Row-major binary mask.
class BitMask {
 public:
  BitMask() = default;
  BitMask(std::size_t height, std::size_t width, bool fill = false);
  BitMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool operator()(std::size_t row, std::size_t col) const { return bits_[row * width_ + col] != 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t row, std::size_t col, bool on) { bits_[row * width_ + col] = on ? 1 : 0; }
  void set(std::size_t i, bool on) { bits_[i] = on ? 1 : 0; }

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::size_t count() const;
  bool same_shape(const BitMask& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const BitMask&, const BitMask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Reproducible random stream identified by (seed, stream id). Distinct
/// stream ids give independent sequences under the same master seed.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

/// Nearest-rank percentile: ascending sort, element at ceil(p*N) - 1.
double percentile_threshold(std::span<const double> scores, double p);

/// Min-max normalization. Returns nullopt when max == min (degenerate cohort).
std::optional<std::vector<double>> minmax_normalize(std::span<const double> values);

/// |a & b| / |a | b|; two empty masks give 1.
double iou(const BitMask& a, const BitMask& b);

/// Foreground where value >= threshold.
BitMask binarize(const Grid2D& values, double threshold);

// PGM I/O. Grids are assumed to lie in [0,1] and are quantized to 0..255;
// masks are written as 0/255 and read back with a 128 threshold.
void write_pgm(const std::filesystem::path& path, const Grid2D& grid);
void write_pgm(const std::filesystem::path& path, const BitMask& mask);
Grid2D read_pgm(const std::filesystem::path& path);
BitMask read_pgm_mask(const std::filesystem::path& path);

}  // namespace curriseg
