#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "curriseg/model.hpp"
#include "oracles.hpp"

using namespace curriseg;

namespace {

std::vector<double> reference_forward(const ConvNetParams& p, const Grid2D& img) {
  oracle::Planes x{std::vector<double>(img.values().begin(), img.values().end())};
  x = oracle::conv_layer(x, p.weights(0), p.biases(0), img.height(), img.width(), true);
  x = oracle::conv_layer(x, p.weights(1), p.biases(1), img.height(), img.width(), true);
  x = oracle::conv_layer(x, p.weights(2), p.biases(2), img.height(), img.width(), false);
  return x[0];
}

ConvNetParams random_params(std::mt19937_64& rng) {
  auto p = ConvNetParams::initialize(rng());
  // Non-zero biases exercise every gradient path.
  std::normal_distribution<double> d(0.0, 0.1);
  for (std::size_t l = 0; l < 3; ++l)
    for (auto& b : p.biases(l)) b = d(rng);
  return p;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("parameter layout") {
  CHECK(ConvNetParams::kParameterCount == 1 * 8 * 9 + 8 + 8 * 8 * 9 + 8 + 8 * 1 * 9 + 1);
  ConvNetParams p;
  CHECK(p.size() == ConvNetParams::kParameterCount);
  std::size_t total = 0;
  for (std::size_t l = 0; l < 3; ++l) total += p.weights(l).size() + p.biases(l).size();
  CHECK(total == p.size());
  CHECK_THROWS_AS(ConvNetParams(std::vector<double>(10)), DomainError);
}

TEST_CASE("initialization is seeded") {
  const auto a = ConvNetParams::initialize(4), b = ConvNetParams::initialize(4), c = ConvNetParams::initialize(5);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (std::size_t l = 0; l < 3; ++l) {
    const auto& shape = ConvNetParams::kLayers[l];
    const double limit = std::sqrt(6.0 / double(9 * (shape.in_channels + shape.out_channels)));
    for (double w : a.weights(l)) CHECK(std::abs(w) <= limit);
    for (double bias : a.biases(l)) CHECK(bias == 0.0);
  }
}

TEST_CASE("forward matches direct convolution") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_params(rng);
    const auto img = oracle::random_grid(5 + rng() % 5, 4 + rng() % 6, rng);
    const auto logits = forward(p, img);
    const auto ref = reference_forward(p, img);
    REQUIRE(logits.same_shape(img));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(logits[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward edge cases") {
  std::mt19937_64 rng(1);
  const auto img = oracle::random_grid(6, 6, rng);
  ConvNetParams zero;
  const auto z = forward(zero, img);
  for (double v : z.values()) CHECK(v == 0.0);

  ConvNetParams bias_only;
  bias_only.biases(2)[0] = 0.75;
  const auto biased = forward(bias_only, Grid2D(3, 3, 0.4));
  for (double v : biased.values()) CHECK(v == 0.75);

  const auto p = ConvNetParams::initialize(9);
  CHECK(forward(p, img) == forward(p, img));
  CHECK_THROWS_AS(forward(p, Grid2D(2, 5)), DomainError);
  auto bad = p;
  bad.flat()[17] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(forward(bad, img), DomainError);
}

TEST_CASE("backward matches central differences") {
  std::mt19937_64 rng(77);
  const double h = 1e-4;
  std::size_t checked = 0, failures = 0;
  for (int instance = 0; instance < 20;) {
    const auto p = random_params(rng);
    const auto img = oracle::random_grid(8, 8, rng);
    // Central differences straddling a ReLU kink measure the average of two
    // slopes, so instances with a pre-activation near zero are redrawn.
    if (oracle::kink_margin(p, img) < 1e-3) continue;
    ++instance;
    const auto g = oracle::random_grid(8, 8, rng, -1.0, 1.0);
    const auto grad = backward(p, img, g);
    auto loss = [&](const std::vector<double>& flat) {
      const auto out = forward(ConvNetParams(flat), img);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += g[i] * out[i];
      return s;
    };
    const std::vector<double> base(p.flat().begin(), p.flat().end());
    for (std::size_t k = 0; k < base.size(); ++k) {
      const double fd = oracle::central_difference(base, k, h, loss);
      ++checked;
      if (oracle::relative_error(grad.flat()[k], fd, 1e-6) > 1e-4) ++failures;
    }
  }
  CHECK(checked == 20 * ConvNetParams::kParameterCount);
  CHECK(failures == 0);
}

TEST_CASE("backward linearity") {
  std::mt19937_64 rng(4);
  const auto p = random_params(rng);
  const auto img = oracle::random_grid(7, 7, rng);
  const auto g = oracle::random_grid(7, 7, rng, -1.0, 1.0);
  const auto zero = backward(p, img, Grid2D(7, 7));
  for (double v : zero.flat()) CHECK(v == 0.0);

  const auto cache = forward_cached(p, img);
  ConvNetParams twice;
  accumulate_backward(p, cache, g, twice);
  accumulate_backward(p, cache, g, twice);
  const auto once = backward(p, img, g);
  for (std::size_t k = 0; k < once.size(); ++k) CHECK(twice.flat()[k] == 2.0 * once.flat()[k]);
  CHECK_THROWS_AS(backward(p, img, Grid2D(6, 7)), DomainError);
}

TEST_CASE("adam") {
  std::mt19937_64 rng(12);
  auto p = ConvNetParams::initialize(3);
  const auto start = p;
  AdamState state{ConvNetParams(), ConvNetParams(), 0};
  ConvNetParams g;
  for (auto& v : g.flat()) v = std::normal_distribution<double>(0.0, 1.0)(rng);
  const double lr = 0.01;
  adam_step(p, g, state, lr);
  CHECK(state.step == 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double s = g.flat()[k] > 0 ? 1.0 : -1.0;
    CHECK(std::abs((p.flat()[k] - start.flat()[k]) - (-lr * s)) <= 1e-6);
  }

  // Zero gradient: no movement at step one, moments decay afterwards.
  auto q = ConvNetParams::initialize(3);
  AdamState fresh{ConvNetParams(), ConvNetParams(), 0};
  adam_step(q, ConvNetParams(), fresh, lr);
  CHECK(q == ConvNetParams::initialize(3));
  const auto m_before = state.first_moment;
  adam_step(p, ConvNetParams(), state, lr);
  for (std::size_t k = 0; k < p.size(); ++k)
    CHECK(state.first_moment.flat()[k] == doctest::Approx(0.9 * m_before.flat()[k]).epsilon(1e-15));

  // At step one the update is lr * sign(g), so doubling lr doubles it; at
  // step two the moments carry history and the equivalence breaks.
  auto a = ConvNetParams::initialize(8), b = a;
  AdamState sa{ConvNetParams(), ConvNetParams(), 0}, sb = sa;
  adam_step(a, g, sa, 2 * lr);
  adam_step(b, g, sb, lr);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double da = a.flat()[k] - ConvNetParams::initialize(8).flat()[k];
    const double db = b.flat()[k] - ConvNetParams::initialize(8).flat()[k];
    CHECK(da == doctest::Approx(2 * db).epsilon(1e-9));
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "curriseg_model_test";
  std::filesystem::create_directories(dir);
  const Checkpoint c{ConvNetParams::initialize(31), 42};
  save_checkpoint(dir / "c.json", c);
  const auto back = load_checkpoint(dir / "c.json");
  CHECK(back.params == c.params);
  CHECK(back.step == 42);
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"architecture": "other", "parameter_count": 737, "step": 0, "parameters": []})";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "none.json"), IoError);
  std::filesystem::remove_all(dir);
}

}
