#include "curriseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "curriseg/spectral.hpp"

namespace curriseg {

namespace {

constexpr int kEllipseRetries = 200;

// RNG stream layout under one master seed.
constexpr std::uint64_t kStreamScene = 1;
constexpr std::uint64_t kStreamCorrupt = 2;
constexpr std::uint64_t kStreamDegrade = 3;

std::uint64_t sample_stream(std::uint64_t kind, int id) { return (static_cast<std::uint64_t>(id) << 8) | kind; }

}  // namespace

void validate(const SceneSpec& spec) {
  if (spec.size < 8) throw DomainError("SceneSpec: size must be at least 8");
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) throw DomainError("SceneSpec: alpha must lie in [0, 1]");
  if (!(spec.band_low >= 0.0 && spec.band_low < spec.band_high))
    throw DomainError("SceneSpec: texture band needs 0 <= low < high");
  if (!std::isfinite(spec.intensity_gap)) throw DomainError("SceneSpec: intensity gap must be finite");
}

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::none: return "none";
    case CorruptionKind::outlier_label: return "outlier_label";
    case CorruptionKind::ambiguous_boundary: return "ambiguous_boundary";
  }
  return "?";
}

CorruptionKind parse_corruption_kind(std::string_view name) {
  if (name == "none") return CorruptionKind::none;
  if (name == "outlier_label") return CorruptionKind::outlier_label;
  if (name == "ambiguous_boundary") return CorruptionKind::ambiguous_boundary;
  throw DomainError("unknown corruption kind '" + std::string(name) + "'");
}

Grid2D band_limited_noise(int size, double band_low, double band_high, SeededRng& rng) {
  const auto n = static_cast<std::size_t>(size);
  Grid2D white(n, n);
  for (auto& v : white.values()) v = rng.normal();
  auto spectrum = dft2(white);
  const double half = static_cast<double>(size) / 2.0;
  const double lo = band_low * half;
  const double hi = band_high * half;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double u = static_cast<double>(spectrum.u_of(i));
      const double v = static_cast<double>(spectrum.v_of(j));
      const double dist = std::sqrt(u * u + v * v);
      if (dist < lo || dist > hi) spectrum.at_index(i, j) = 0.0;
    }
  }
  Grid2D tex = idft2(spectrum);
  const auto [mn, mx] = std::minmax_element(tex.values().begin(), tex.values().end());
  const double lo_v = *mn;
  const double range = *mx - *mn;
  for (auto& v : tex.values()) v = range > 0.0 ? (v - lo_v) / range : 0.5;
  return tex;
}

BitMask random_ellipse(int size, SeededRng& rng) {
  const double s = static_cast<double>(size);
  const auto n = static_cast<std::size_t>(size);
  for (int attempt = 0; attempt < kEllipseRetries; ++attempt) {
    const double cy = rng.uniform(0.25, 0.75) * s;
    const double cx = rng.uniform(0.25, 0.75) * s;
    const double a = rng.uniform(0.12, 0.32) * s;
    const double b = rng.uniform(0.12, 0.32) * s;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double c = std::cos(theta);
    const double sn = std::sin(theta);
    BitMask mask(n, n);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double p = (dx * c + dy * sn) / a;
        const double q = (-dx * sn + dy * c) / b;
        mask.set(y, x, p * p + q * q <= 1.0);
      }
    }
    const double area = static_cast<double>(mask.count()) / static_cast<double>(mask.size());
    if (area >= kMinMaskArea && area <= kMaxMaskArea) return mask;
  }
  throw DomainError("random_ellipse: could not satisfy the mask area bounds");
}

std::vector<Sample> generate_dataset(int n, const SceneSpec& spec, std::uint64_t seed) {
  if (n < 1) throw DomainError("generate_dataset: n must be at least 1");
  validate(spec);
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  const double offset = (1.0 - spec.alpha) * spec.intensity_gap;
  for (int id = 0; id < n; ++id) {
    SeededRng rng(seed, sample_stream(kStreamScene, id));
    const Grid2D background = band_limited_noise(spec.size, spec.band_low, spec.band_high, rng);
    BitMask mask = random_ellipse(spec.size, rng);
    const Grid2D foreground = band_limited_noise(spec.size, spec.band_low, spec.band_high, rng);
    Grid2D image(background);
    for (std::size_t i = 0; i < image.size(); ++i)
      if (mask[i]) image[i] = std::clamp(foreground[i] + offset, 0.0, 1.0);
    samples.push_back(Sample{id, std::move(image), std::move(mask), false, CorruptionKind::none});
  }
  return samples;
}

namespace {

template <typename Keep>
BitMask morph(const BitMask& mask, int radius, Keep keep) {
  const auto h = static_cast<long>(mask.height());
  const auto w = static_cast<long>(mask.width());
  BitMask out(mask.height(), mask.width());
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      bool any = false;
      bool all = true;
      for (long dy = -radius; dy <= radius; ++dy) {
        for (long dx = -radius; dx <= radius; ++dx) {
          if (dy * dy + dx * dx > radius * radius) continue;
          const long yy = y + dy;
          const long xx = x + dx;
          // Outside the image counts as background.
          const bool on = yy >= 0 && yy < h && xx >= 0 && xx < w && mask(static_cast<std::size_t>(yy),
                                                                          static_cast<std::size_t>(xx));
          any = any || on;
          all = all && on;
        }
      }
      out.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), keep(any, all));
    }
  }
  return out;
}

double area_fraction(const BitMask& m) { return static_cast<double>(m.count()) / static_cast<double>(m.size()); }

bool area_ok(const BitMask& m) {
  const double a = area_fraction(m);
  return a >= kMinMaskArea && a <= kMaxMaskArea;
}

std::size_t fraction_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

BitMask dilate(const BitMask& mask, int radius) {
  return morph(mask, radius, [](bool any, bool) { return any; });
}

BitMask erode(const BitMask& mask, int radius) {
  return morph(mask, radius, [](bool, bool all) { return all; });
}

std::vector<Sample> corrupt_labels(std::vector<Sample> samples, double outlier_fraction, double ambiguous_fraction,
                                   std::uint64_t seed) {
  if (!(outlier_fraction >= 0.0 && ambiguous_fraction >= 0.0 && outlier_fraction + ambiguous_fraction <= 1.0 + 1e-12))
    throw DomainError("corrupt_labels: fractions must be non-negative and sum to at most 1");
  const std::size_t n = samples.size();
  const std::size_t n_out = fraction_count(n, outlier_fraction);
  const std::size_t n_amb = std::min(n - n_out, fraction_count(n, ambiguous_fraction));
  if (n_out == 0 && n_amb == 0) return samples;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng pick(seed, kStreamCorrupt);
  std::shuffle(order.begin(), order.end(), pick.engine());

  for (std::size_t k = 0; k < n_out + n_amb; ++k) {
    Sample& s = samples[order[k]];
    SeededRng rng(seed, sample_stream(kStreamCorrupt, s.id));
    const int size = static_cast<int>(s.mask.height());
    if (k < n_out) {
      // Keep the candidate that overlaps the true object least.
      BitMask best = random_ellipse(size, rng);
      double best_iou = iou(best, s.mask);
      for (int attempt = 0; attempt < 64 && best_iou > 0.0; ++attempt) {
        BitMask cand = random_ellipse(size, rng);
        const double v = iou(cand, s.mask);
        if (v < best_iou) {
          best_iou = v;
          best = std::move(cand);
        }
      }
      s.mask = std::move(best);
      s.corruption_kind = CorruptionKind::outlier_label;
    } else {
      const int radius = static_cast<int>(rng.integer(1, 3));
      const bool grow = rng.uniform() < 0.5;
      BitMask changed = grow ? dilate(s.mask, radius) : erode(s.mask, radius);
      if (!area_ok(changed)) changed = grow ? erode(s.mask, radius) : dilate(s.mask, radius);
      if (!area_ok(changed)) changed = grow ? dilate(s.mask, 1) : erode(s.mask, 1);
      if (area_ok(changed)) s.mask = std::move(changed);
      s.corruption_kind = CorruptionKind::ambiguous_boundary;
    }
    s.is_corrupted = true;
  }
  return samples;
}

std::string_view to_string(DegradationKind kind) {
  switch (kind) {
    case DegradationKind::blur: return "blur";
    case DegradationKind::low_light: return "low_light";
    case DegradationKind::haze: return "haze";
    case DegradationKind::noise: return "noise";
  }
  return "?";
}

DegradationKind parse_degradation_kind(std::string_view name) {
  if (name == "blur") return DegradationKind::blur;
  if (name == "low_light") return DegradationKind::low_light;
  if (name == "haze") return DegradationKind::haze;
  if (name == "noise") return DegradationKind::noise;
  throw DomainError("unknown degradation kind '" + std::string(name) + "'");
}

Grid2D degrade(const Grid2D& image, const DegradationSpec& spec, SeededRng& rng) {
  if (!(spec.strength >= 0.0) || !std::isfinite(spec.strength)) throw DomainError("degrade: strength must be >= 0");
  if (spec.strength == 0.0) return image;
  Grid2D out(image);
  switch (spec.kind) {
    case DegradationKind::blur: {
      // Normalized box kernel of width 2s+1, edges replicated.
      const long r = std::lround(spec.strength);
      if (r == 0) return image;
      const long h = static_cast<long>(image.height());
      const long w = static_cast<long>(image.width());
      const double norm = 1.0 / static_cast<double>((2 * r + 1) * (2 * r + 1));
      for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
          double acc = 0.0;
          for (long dy = -r; dy <= r; ++dy) {
            const auto yy = static_cast<std::size_t>(std::clamp(y + dy, 0L, h - 1));
            for (long dx = -r; dx <= r; ++dx)
              acc += image(yy, static_cast<std::size_t>(std::clamp(x + dx, 0L, w - 1)));
          }
          out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc * norm;
        }
      }
      return out;
    }
    case DegradationKind::low_light: {
      const double scale = 1.0 / (1.0 + spec.strength);
      for (auto& v : out.values()) v *= scale;
      return out;
    }
    case DegradationKind::haze: {
      const double f = spec.strength / (1.0 + spec.strength);
      for (auto& v : out.values()) v = (1.0 - f) * v + f * 0.8;
      return out;
    }
    case DegradationKind::noise: {
      for (auto& v : out.values()) v = std::clamp(v + rng.uniform(-spec.strength, spec.strength), 0.0, 1.0);
      return out;
    }
  }
  throw DomainError("degrade: unknown kind");
}

std::vector<Sample> degrade_dataset(std::vector<Sample> samples, const DegradationSpec& spec, std::uint64_t seed) {
  if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0)) throw DomainError("degrade_dataset: ratio must lie in [0, 1]");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng pick(seed, kStreamDegrade);
  std::shuffle(order.begin(), order.end(), pick.engine());
  const std::size_t count = fraction_count(samples.size(), spec.ratio);
  for (std::size_t k = 0; k < count; ++k) {
    Sample& s = samples[order[k]];
    SeededRng rng(seed, sample_stream(kStreamDegrade, s.id));
    s.image = degrade(s.image, spec, rng);
  }
  return samples;
}

std::vector<Sample> quantize_images(std::vector<Sample> samples) {
  for (auto& s : samples)
    for (auto& v : s.image.values()) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
  return samples;
}

namespace {

std::string sample_name(int id) {
  std::ostringstream os;
  os.width(5);
  os.fill('0');
  os << id;
  return os.str() + ".pgm";
}

}  // namespace

std::string export_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                           const DatasetInfo& info) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  nlohmann::json manifest;
  manifest["format"] = "curriseg-dataset-v1";
  manifest["seed"] = info.seed;
  manifest["n"] = samples.size();
  manifest["spec"] = {{"size", info.spec.size},
                      {"alpha", info.spec.alpha},
                      {"band_low", info.spec.band_low},
                      {"band_high", info.spec.band_high},
                      {"intensity_gap", info.spec.intensity_gap}};
  manifest["outlier_fraction"] = info.outlier_fraction;
  manifest["ambiguous_fraction"] = info.ambiguous_fraction;
  std::size_t corrupted = 0;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& s : samples) {
    const auto name = sample_name(s.id);
    write_pgm(dir / "images" / name, s.image);
    write_pgm(dir / "masks" / name, s.mask);
    corrupted += s.is_corrupted ? 1 : 0;
    entries.push_back({{"id", s.id},
                       {"image", "images/" + name},
                       {"mask", "masks/" + name},
                       {"is_corrupted", s.is_corrupted},
                       {"corruption_kind", std::string(to_string(s.corruption_kind))}});
  }
  manifest["corrupted_count"] = corrupted;
  manifest["samples"] = std::move(entries);
  const std::string text = manifest.dump(2) + "\n";
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << text;
  return text;
}

LoadedDataset import_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
  std::stringstream buf;
  buf << in.rdbuf();
  LoadedDataset out;
  out.manifest_text = buf.str();
  try {
    const auto j = nlohmann::json::parse(out.manifest_text);
    const auto& spec = j.at("spec");
    out.info.spec.size = spec.at("size").get<int>();
    out.info.spec.alpha = spec.at("alpha").get<double>();
    out.info.spec.band_low = spec.at("band_low").get<double>();
    out.info.spec.band_high = spec.at("band_high").get<double>();
    out.info.spec.intensity_gap = spec.at("intensity_gap").get<double>();
    out.info.seed = j.at("seed").get<std::uint64_t>();
    out.info.outlier_fraction = j.value("outlier_fraction", 0.0);
    out.info.ambiguous_fraction = j.value("ambiguous_fraction", 0.0);
    for (const auto& e : j.at("samples")) {
      Sample s;
      s.id = e.at("id").get<int>();
      s.image = read_pgm(dir / e.at("image").get<std::string>());
      s.mask = read_pgm_mask(dir / e.at("mask").get<std::string>());
      s.is_corrupted = e.value("is_corrupted", false);
      s.corruption_kind = parse_corruption_kind(e.value("corruption_kind", std::string("none")));
      out.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset manifest in " + dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace curriseg
