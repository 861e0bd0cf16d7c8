#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "curriseg/grid.hpp"

namespace curriseg {

/// Parameters of the synthetic camouflage scenes. Textures are white noise
/// restricted to the annulus band_low <= |f| / (size/2) <= band_high.
struct SceneSpec {
  int size = 48;
  double alpha = 0.8;  // camouflage strength; 1 = no intensity cue
  double band_low = 0.15;
  double band_high = 1.2;
  double intensity_gap = 0.4;
};

void validate(const SceneSpec& spec);

enum class CorruptionKind { none, outlier_label, ambiguous_boundary };

std::string_view to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(std::string_view name);

struct Sample {
  int id = 0;
  Grid2D image;
  BitMask mask;
  bool is_corrupted = false;
  CorruptionKind corruption_kind = CorruptionKind::none;
};

inline constexpr double kMinMaskArea = 0.05;
inline constexpr double kMaxMaskArea = 0.50;

/// Band-limited noise rescaled to [0,1].
Grid2D band_limited_noise(int size, double band_low, double band_high, SeededRng& rng);

/// Random rotated ellipse covering 5-50% of the image (bounded retries).
BitMask random_ellipse(int size, SeededRng& rng);

/// Deterministic in (n, spec, seed); sample i draws from its own RNG stream.
std::vector<Sample> generate_dataset(int n, const SceneSpec& spec, std::uint64_t seed);

/// Replaces exactly round(n * outlier_fraction) masks with ellipses placed
/// away from the object, and perturbs exactly round(n * ambiguous_fraction)
/// other masks by a 1-3 pixel dilation or erosion.
std::vector<Sample> corrupt_labels(std::vector<Sample> samples, double outlier_fraction, double ambiguous_fraction,
                                   std::uint64_t seed);

BitMask dilate(const BitMask& mask, int radius);
BitMask erode(const BitMask& mask, int radius);

enum class DegradationKind { blur, low_light, haze, noise };

std::string_view to_string(DegradationKind kind);
DegradationKind parse_degradation_kind(std::string_view name);

struct DegradationSpec {
  DegradationKind kind = DegradationKind::blur;
  double strength = 0.0;
  double ratio = 1.0;  // fraction of a dataset affected
};

Grid2D degrade(const Grid2D& image, const DegradationSpec& spec, SeededRng& rng);

/// Applies `spec` to exactly round(ratio * n) samples chosen by `seed`.
std::vector<Sample> degrade_dataset(std::vector<Sample> samples, const DegradationSpec& spec, std::uint64_t seed);

/// Rounds image values to the 8-bit levels used by PGM export.
std::vector<Sample> quantize_images(std::vector<Sample> samples);

struct DatasetInfo {
  SceneSpec spec;
  std::uint64_t seed = 0;
  double outlier_fraction = 0.0;
  double ambiguous_fraction = 0.0;
};

/// Writes images/ and masks/ as PGM plus manifest.json; returns the manifest text.
std::string export_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                           const DatasetInfo& info);

struct LoadedDataset {
  DatasetInfo info;
  std::vector<Sample> samples;
  std::string manifest_text;
};

LoadedDataset import_dataset(const std::filesystem::path& dir);

}  // namespace curriseg
