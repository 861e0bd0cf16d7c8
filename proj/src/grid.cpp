#include "curriseg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace curriseg {

Grid2D::Grid2D(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), values_(height * width, fill) {
  if (height == 0 || width == 0) throw DomainError("Grid2D: dimensions must be positive");
  if (!std::isfinite(fill)) throw DomainError("Grid2D: non-finite fill value");
}

Grid2D::Grid2D(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height == 0 || width == 0) throw DomainError("Grid2D: dimensions must be positive");
  if (values_.size() != height * width) throw DomainError("Grid2D: value count does not match shape");
  if (!all_finite()) throw DomainError("Grid2D: non-finite value");
}

bool Grid2D::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Grid2D::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

double Grid2D::mean() const { return values_.empty() ? 0.0 : sum() / static_cast<double>(values_.size()); }

BitMask::BitMask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {
  if (height == 0 || width == 0) throw DomainError("BitMask: dimensions must be positive");
}

BitMask::BitMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  if (height == 0 || width == 0) throw DomainError("BitMask: dimensions must be positive");
  if (bits_.size() != height * width) throw DomainError("BitMask: bit count does not match shape");
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BitMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  engine_.seed(seq);
}

double SeededRng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double SeededRng::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

std::int64_t SeededRng::integer(std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
}

double percentile_threshold(std::span<const double> scores, double p) {
  if (scores.empty()) throw DomainError("percentile_threshold: empty score list");
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("percentile_threshold: p must lie in (0, 1]");
  std::vector<double> sorted(scores.begin(), scores.end());
  if (!std::all_of(sorted.begin(), sorted.end(), [](double v) { return std::isfinite(v); }))
    throw DomainError("percentile_threshold: non-finite score");
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

std::optional<std::vector<double>> minmax_normalize(std::span<const double> values) {
  if (values.empty()) throw DomainError("minmax_normalize: empty input");
  if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); }))
    throw DomainError("minmax_normalize: non-finite value");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (range == 0.0) return std::nullopt;
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [min = *lo, range](double v) { return std::clamp((v - min) / range, 0.0, 1.0); });
  return out;
}

double iou(const BitMask& a, const BitMask& b) {
  if (!a.same_shape(b)) throw DomainError("iou: mask dimensions differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  const auto ab = a.bits();
  const auto bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    inter += ab[i] & bb[i];
    uni += ab[i] | bb[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BitMask binarize(const Grid2D& values, double threshold) {
  BitMask out(values.height(), values.width());
  for (std::size_t i = 0; i < values.size(); ++i) out.set(i, values[i] >= threshold);
  return out;
}

namespace {

void write_raw_pgm(const std::filesystem::path& path, std::size_t h, std::size_t w,
                   const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// Skips whitespace and '#' comments in a PGM header.
void skip_header_space(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

struct RawPgm {
  std::size_t height = 0;
  std::size_t width = 0;
  unsigned maxval = 255;
  std::vector<unsigned> samples;
};

RawPgm read_raw_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (!in || (magic != "P2" && magic != "P5")) throw IoError(path.string() + ": not a PGM file");
  RawPgm pgm;
  skip_header_space(in);
  in >> pgm.width;
  skip_header_space(in);
  in >> pgm.height;
  skip_header_space(in);
  in >> pgm.maxval;
  if (!in || pgm.width == 0 || pgm.height == 0 || pgm.maxval == 0 || pgm.maxval > 65535)
    throw IoError(path.string() + ": malformed PGM header");
  const std::size_t n = pgm.width * pgm.height;
  pgm.samples.resize(n);
  if (magic == "P2") {
    for (auto& s : pgm.samples) {
      skip_header_space(in);
      if (!(in >> s)) throw IoError(path.string() + ": truncated PGM data");
    }
  } else {
    in.get();  // single whitespace after maxval
    const std::size_t bytes_per = pgm.maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * bytes_per);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError(path.string() + ": truncated PGM data");
    for (std::size_t i = 0; i < n; ++i)
      pgm.samples[i] = bytes_per == 2 ? (unsigned{raw[2 * i]} << 8 | raw[2 * i + 1]) : raw[i];
  }
  for (auto s : pgm.samples)
    if (s > pgm.maxval) throw IoError(path.string() + ": sample exceeds maxval");
  return pgm;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Grid2D& grid) {
  std::vector<unsigned char> bytes(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(grid[i], 0.0, 1.0) * 255.0));
  write_raw_pgm(path, grid.height(), grid.width(), bytes);
}

void write_pgm(const std::filesystem::path& path, const BitMask& mask) {
  std::vector<unsigned char> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  write_raw_pgm(path, mask.height(), mask.width(), bytes);
}

Grid2D read_pgm(const std::filesystem::path& path) {
  const auto pgm = read_raw_pgm(path);
  std::vector<double> values(pgm.samples.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<double>(pgm.samples[i]) / static_cast<double>(pgm.maxval);
  return Grid2D(pgm.height, pgm.width, std::move(values));
}

BitMask read_pgm_mask(const std::filesystem::path& path) {
  const auto pgm = read_raw_pgm(path);
  std::vector<std::uint8_t> bits(pgm.samples.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = 2 * pgm.samples[i] >= pgm.maxval ? 1 : 0;
  return BitMask(pgm.height, pgm.width, std::move(bits));
}

}  // namespace curriseg
