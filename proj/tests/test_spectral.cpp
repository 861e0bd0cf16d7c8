#include <doctest.h>

#include <cmath>
#include <random>

#include "curriseg/spectral.hpp"
#include "oracles.hpp"

using namespace curriseg;

namespace {

double max_abs_diff(const Grid2D& a, const Grid2D& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("dft matches the direct sum") {
  std::mt19937_64 rng(3);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 4}, {5, 7}, {6, 3}, {1, 5}}) {
    const auto x = oracle::random_grid(h, w, rng, -1.0, 1.0);
    const auto ref = oracle::naive_dft(std::vector<double>(x.values().begin(), x.values().end()), h, w);
    const auto s = dft2(x);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const long u = s.u_of(i), v = s.v_of(j);
        const auto expect = ref[std::size_t((u + long(h)) % long(h)) * w + std::size_t((v + long(w)) % long(w))];
        CHECK(std::abs(s.at_index(i, j) - expect) < 1e-10);
        CHECK(std::abs(s.at(u, v) - expect) < 1e-10);
      }
  }
}

TEST_CASE("constant image is DC only") {
  const Grid2D c(6, 6, 0.3);
  const auto s = dft2(c);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const bool dc = s.u_of(i) == 0 && s.v_of(j) == 0;
      CHECK(std::abs(s.at_index(i, j) - std::complex<double>(dc ? 0.3 * 36 : 0.0)) < 1e-12);
    }
}

TEST_CASE("unit impulse has a flat spectrum") {
  const Grid2D x(2, 2, std::vector<double>{1, 0, 0, 0});
  const auto s = dft2(x);
  for (const auto& c : s.coefficients()) CHECK(std::abs(c - std::complex<double>(1.0)) < 1e-15);
}

TEST_CASE("round trip and imaginary residue") {
  std::mt19937_64 rng(8);
  const auto x = oracle::random_grid(9, 12, rng);
  const auto back = idft2_with_residue(dft2(x));
  CHECK(max_abs_diff(back.image, x) <= 1e-9);
  CHECK(back.max_imag_residue < 1e-9);
}

TEST_CASE("circular mask counts") {
  const auto m = circular_lowpass_mask(8, 8, 0.5);
  CHECK(m.count() == 13);
  for (long u = -4; u < 4; ++u)
    for (long v = -4; v < 4; ++v) {
      const bool expect = u * u + v * v <= 4;
      CHECK(m(std::size_t(u + 4), std::size_t(v + 4)) == expect);
    }
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t h = 1 + rng() % 20, w = 1 + rng() % 20;
    const double r = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
    CHECK(circular_lowpass_mask(h, w, r).count() == oracle::circular_passband_count(long(h), long(w), r));
    CHECK(circular_lowpass_mask(h, w, r)(h / 2, w / 2));
  }
  CHECK(circular_lowpass_mask(6, 10, full_passband_ratio(6, 10)).count() == 60);
  CHECK_THROWS_AS(circular_lowpass_mask(4, 4, 0.0), DomainError);
}

TEST_CASE("square mask counts") {
  CHECK(square_lowpass_mask(8, 8, 0.5).count() == 25);
  CHECK(square_lowpass_mask(8, 8, 1.0).count() == 64);
}

TEST_CASE("masks are monotone in r") {
  for (double r = 0.05; r < 1.6; r += 0.05) {
    const auto small = circular_lowpass_mask(12, 10, r);
    const auto big = circular_lowpass_mask(12, 10, r + 0.05);
    for (std::size_t i = 0; i < small.size(); ++i)
      if (small[i]) CHECK(big[i]);
  }
}

TEST_CASE("sbft properties") {
  const Grid2D c(8, 8, 0.7);
  CHECK(max_abs_diff(sbft(c, 0.3), c) < 1e-12);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = oracle::random_grid(16, 16, rng);
    const auto once = sbft(x, 0.6);
    CHECK(max_abs_diff(sbft(once, 0.6), once) <= 1e-6);
    double e_in = 0.0, e_out = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      e_in += x[i] * x[i];
      e_out += once[i] * once[i];
    }
    CHECK(e_out <= e_in);
    CHECK(energy_outside(once, circular_lowpass_mask(16, 16, 0.6)) < 1e-18 * 256 * 256 + 1e-16);
  }
}

TEST_CASE("ablation filters") {
  std::mt19937_64 rng(6);
  const auto x = oracle::random_grid(10, 10, rng);
  CHECK(max_abs_diff(ablation_filter(x, FilterKind::progressive, 0.5, 0.0), x) <= 1e-6);
  CHECK(max_abs_diff(ablation_filter(x, FilterKind::progressive, 0.5, 1.0), sbft(x, 0.5)) <= 1e-12);
  CHECK(max_abs_diff(ablation_filter(x, FilterKind::circular, 0.5, 0.3), sbft(x, 0.5)) <= 1e-12);
  const auto sq = ablation_filter(x, FilterKind::square, 0.5, 0.0);
  CHECK(energy_outside(sq, square_lowpass_mask(10, 10, 0.5)) < 1e-16);
  CHECK(parse_filter_kind("square") == FilterKind::square);
  CHECK_THROWS_AS(parse_filter_kind("butterworth"), DomainError);
  // Passband only shrinks as fine-tuning proceeds.
  std::size_t last = 101;
  for (double f = 0.0; f <= 1.0; f += 0.1) {
    const auto n = filter_mask(10, 10, FilterKind::progressive, 0.5, f).count();
    CHECK(n <= last);
    last = n;
  }
}

}
