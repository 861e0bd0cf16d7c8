#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "curriseg/spectral.hpp"
#include "curriseg/synthdata.hpp"
#include "oracles.hpp"

using namespace curriseg;

namespace {

// Mean foreground minus mean background intensity, pooled over samples.
double intensity_gap(const std::vector<Sample>& samples) {
  double fg = 0.0, bg = 0.0;
  std::size_t nf = 0, nb = 0;
  for (const auto& s : samples)
    for (std::size_t i = 0; i < s.image.size(); ++i) {
      if (s.mask[i]) {
        fg += s.image[i];
        ++nf;
      } else {
        bg += s.image[i];
        ++nb;
      }
    }
  return fg / double(nf) - bg / double(nb);
}

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("generation invariants") {
  const SceneSpec spec;
  const auto data = generate_dataset(40, spec, 9);
  REQUIRE(data.size() == 40);
  for (const auto& s : data) {
    CHECK(s.image.height() == 48);
    const double area = double(s.mask.count()) / double(s.mask.size());
    CHECK(area >= kMinMaskArea);
    CHECK(area <= kMaxMaskArea);
    for (double v : s.image.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK_FALSE(s.is_corrupted);
  }
  const auto again = generate_dataset(40, spec, 9);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(data[i].image == again[i].image);
    CHECK(data[i].mask == again[i].mask);
  }
  const auto other = generate_dataset(40, spec, 10);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK_FALSE(data[i].image == other[i].image);
}

TEST_CASE("camouflage knob") {
  SceneSpec easy;
  easy.alpha = 0.0;
  CHECK(intensity_gap(generate_dataset(100, easy, 1)) >= 0.3 * easy.intensity_gap);
  SceneSpec hard;
  hard.alpha = 1.0;
  CHECK(std::abs(intensity_gap(generate_dataset(100, hard, 1))) < 0.05);
}

TEST_CASE("spec validation") {
  SceneSpec s;
  s.alpha = 1.5;
  CHECK_THROWS_AS(generate_dataset(3, s, 0), DomainError);
  s = SceneSpec{};
  s.band_low = 0.8;
  s.band_high = 0.5;
  CHECK_THROWS_AS(generate_dataset(3, s, 0), DomainError);
  CHECK_THROWS_AS(generate_dataset(0, SceneSpec{}, 0), DomainError);
}

TEST_CASE("label corruption") {
  SceneSpec spec;
  const auto clean = generate_dataset(100, spec, 4);
  const auto same = corrupt_labels(clean, 0.0, 0.0, 1);
  for (std::size_t i = 0; i < clean.size(); ++i) CHECK(same[i].mask == clean[i].mask);

  const auto bad = corrupt_labels(clean, 0.2, 0.1, 1);
  int outliers = 0, ambiguous = 0;
  double iou_sum = 0.0;
  for (std::size_t i = 0; i < bad.size(); ++i) {
    if (bad[i].corruption_kind == CorruptionKind::outlier_label) {
      ++outliers;
      iou_sum += iou(bad[i].mask, clean[i].mask);
    }
    if (bad[i].corruption_kind == CorruptionKind::ambiguous_boundary) {
      ++ambiguous;
      CHECK_FALSE(bad[i].mask == clean[i].mask);
      CHECK(iou(bad[i].mask, clean[i].mask) > 0.3);
    }
    CHECK(bad[i].is_corrupted == (bad[i].corruption_kind != CorruptionKind::none));
    CHECK(bad[i].image == clean[i].image);
  }
  CHECK(outliers == 20);
  CHECK(ambiguous == 10);
  CHECK(iou_sum / outliers < 0.1);
  CHECK_THROWS_AS(corrupt_labels(clean, 0.7, 0.5, 1), DomainError);
}

TEST_CASE("morphology") {
  BitMask dot(7, 7);
  dot.set(3, 3, true);
  CHECK(dilate(dot, 1).count() == 5);
  CHECK(erode(dilate(dot, 1), 1).count() == 1);
  CHECK(dilate(dot, 0) == dot);
}

TEST_CASE("degradations") {
  std::mt19937_64 gen(6);
  SeededRng rng(1, 1);
  const auto img = oracle::random_grid(24, 24, gen);
  for (auto kind : {DegradationKind::blur, DegradationKind::low_light, DegradationKind::haze, DegradationKind::noise})
    CHECK(degrade(img, {kind, 0.0, 1.0}, rng) == img);

  const Grid2D flat(10, 10, 0.3);
  const auto blurred = degrade(flat, {DegradationKind::blur, 2.0, 1.0}, rng);
  for (double v : blurred.values()) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(degrade(flat, {DegradationKind::low_light, 1.0, 1.0}, rng)[0] == doctest::Approx(0.15));
  CHECK(degrade(flat, {DegradationKind::haze, 1.0, 1.0}, rng)[0] == doctest::Approx(0.55));

  double change = 0.0;
  std::size_t count = 0;
  for (int k = 0; k < 20; ++k) {
    const auto mid = oracle::random_grid(24, 24, gen, 0.3, 0.7);
    const auto noisy = degrade(mid, {DegradationKind::noise, 0.2, 1.0}, rng);
    for (std::size_t i = 0; i < mid.size(); ++i, ++count) change += std::abs(noisy[i] - mid[i]);
  }
  CHECK(change / double(count) == doctest::Approx(0.1).epsilon(0.03));

  const auto mask = circular_lowpass_mask(24, 24, 0.5);
  const double base = energy_outside(img, mask);
  for (auto kind : {DegradationKind::blur, DegradationKind::low_light, DegradationKind::haze})
    CHECK(energy_outside(degrade(img, {kind, 1.0, 1.0}, rng), mask) < base);
  const auto mid = oracle::random_grid(24, 24, gen, 0.4, 0.6);
  double noisy_energy = 0.0;
  for (int k = 0; k < 10; ++k) noisy_energy += energy_outside(degrade(mid, {DegradationKind::noise, 0.2, 1.0}, rng), mask);
  CHECK(noisy_energy / 10.0 > energy_outside(mid, mask));

  CHECK_THROWS_AS(degrade(img, {DegradationKind::blur, -1.0, 1.0}, rng), DomainError);
  CHECK_THROWS_AS(parse_degradation_kind("fog"), DomainError);
}

TEST_CASE("degrade dataset ratio") {
  const auto data = generate_dataset(10, SceneSpec{}, 2);
  const auto half = degrade_dataset(data, {DegradationKind::low_light, 1.0, 0.5}, 3);
  int changed = 0;
  for (std::size_t i = 0; i < data.size(); ++i) changed += !(half[i].image == data[i].image);
  CHECK(changed == 5);
}

TEST_CASE("export and import") {
  const auto dir = std::filesystem::temp_directory_path() / "curriseg_synth_test";
  std::filesystem::remove_all(dir);
  SceneSpec spec;
  spec.size = 16;
  const auto data = corrupt_labels(generate_dataset(12, spec, 8), 0.25, 0.0, 8);
  const auto text = export_dataset(dir, data, {spec, 8, 0.25, 0.0});
  const auto loaded = import_dataset(dir);
  CHECK(loaded.manifest_text == text);
  CHECK(loaded.info.seed == 8);
  CHECK(loaded.info.spec.size == 16);
  REQUIRE(loaded.samples.size() == data.size());
  const auto quantized = quantize_images(data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded.samples[i].mask == data[i].mask);
    CHECK(loaded.samples[i].image == quantized[i].image);
    CHECK(loaded.samples[i].corruption_kind == data[i].corruption_kind);
  }
  CHECK_THROWS_AS(import_dataset(dir / "missing"), IoError);
  std::filesystem::remove_all(dir);
}

}
