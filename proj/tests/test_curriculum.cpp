#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "curriseg/curriculum.hpp"
#include "curriseg/loss.hpp"
#include "curriseg/model.hpp"
#include "curriseg/synthdata.hpp"
#include "oracles.hpp"

using namespace curriseg;

TEST_SUITE("curriculum") {

TEST_CASE("difficulty score") {
  BitMask left(4, 4), top(4, 4);
  Grid2D pred_left(4, 4, -5.0), pred_top(4, 4, -5.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      left.set(r, c, c < 2);
      top.set(r, c, r < 2);
      if (c < 2) pred_left(r, c) = 5.0;
      if (r < 2) pred_top(r, c) = 5.0;
    }
  CHECK(difficulty_score(pred_left, left) == 0.0);
  CHECK(difficulty_score(pred_top, left) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  Grid2D pred_right(4, 4, 5.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 2; ++c) pred_right(r, c) = -5.0;
  CHECK(difficulty_score(pred_right, left) == 1.0);
  // p = 0.5 exactly counts as foreground.
  CHECK(difficulty_score(Grid2D(4, 4, 0.0), BitMask(4, 4, true)) == 0.0);
  CHECK_THROWS_AS(difficulty_score(Grid2D(3, 4), left), DomainError);
}

TEST_CASE("selection fraction") {
  ScheduleVariant s{ScheduleKind::linear, 0.6, 60};
  CHECK(selection_fraction(1, s) == 0.6);
  CHECK(selection_fraction(60, s) == 1.0);
  CHECK(std::abs(selection_fraction(30, s) - (0.6 + 0.4 * 29.0 / 59.0)) < 1e-12);
  CHECK(std::abs(selection_fraction(30, s) - 0.7966) < 5e-5);
  CHECK_THROWS_AS(selection_fraction(0, s), DomainError);
  CHECK_THROWS_AS(selection_fraction(61, s), DomainError);
  CHECK(selection_fraction(1, {ScheduleKind::sqrt, 0.6, 1}) == 1.0);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 60; ++trial) {
    const int t_c = 2 + int(rng() % 80);
    const int t = 1 + int(rng() % std::uint64_t(t_c));
    const double p_min = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    const ScheduleKind kinds[] = {ScheduleKind::linear, ScheduleKind::quadratic, ScheduleKind::sqrt};
    const double exps[] = {1.0, 2.0, 0.5};
    const int k = trial % 3;
    CHECK(std::abs(selection_fraction(t, {kinds[k], p_min, t_c}) - oracle::selection_fraction(t, t_c, p_min, exps[k])) <
          1e-9);
  }
}

TEST_CASE("schedule variants are ordered") {
  for (int t = 2; t < 50; ++t) {
    const double lin = selection_fraction(t, {ScheduleKind::linear, 0.6, 50});
    const double quad = selection_fraction(t, {ScheduleKind::quadratic, 0.6, 50});
    const double root = selection_fraction(t, {ScheduleKind::sqrt, 0.6, 50});
    CHECK(root > lin);
    CHECK(lin > quad);
  }
}

TEST_CASE("active subset") {
  DifficultyTable t;
  const double d[] = {0.1, 0.2, 0.3, 0.4, 0.5};
  for (int i = 0; i < 5; ++i) t.scores[10 + i] = d[i];
  CHECK(active_subset(t, 0.6) == std::set<int>{10, 11, 12});
  CHECK(active_subset(t, 1.0).size() == 5);
  DifficultyTable ties;
  for (int i = 0; i < 7; ++i) ties.scores[i] = 0.42;
  CHECK(active_subset(ties, 0.1).size() == 7);
  CHECK_THROWS_AS(active_subset(t, 0.0), DomainError);
}

TEST_CASE("evaluate difficulties") {
  SceneSpec spec;
  spec.size = 16;
  const auto data = generate_dataset(6, spec, 3);
  const ConvNetParams zero;
  const auto a = evaluate_difficulties(zero, data);
  const auto b = evaluate_difficulties(zero, data);
  CHECK(a.scores == b.scores);
  // Zero logits give p = 0.5, binarized as foreground everywhere.
  for (const auto& s : data) {
    const double area = double(s.mask.count()) / double(s.mask.size());
    CHECK(a.scores.at(s.id) == doctest::Approx(1.0 - area).epsilon(1e-12));
  }
}

TEST_CASE("a checkpoint fitted to one sample finds it easiest") {
  SceneSpec spec;
  spec.size = 16;
  spec.alpha = 0.3;
  const auto data = generate_dataset(8, spec, 5);
  auto params = ConvNetParams::initialize(2);
  AdamState adam{ConvNetParams(), ConvNetParams(), 0};
  const Grid2D uniform(16, 16, 1.0);
  for (int step = 0; step < 400; ++step) {
    const auto cache = forward_cached(params, data[0].image);
    const auto loss = curriculum_loss(cache.logits, data[0].mask, uniform, 1.0);
    adam_step(params, backward(params, cache, loss.grad), adam, 0.01);
  }
  const auto table = evaluate_difficulties(params, data);
  double mean = 0.0;
  for (const auto& [id, d] : table.scores) mean += d;
  mean /= double(table.scores.size());
  CHECK(table.scores.at(data[0].id) < mean);
}

TEST_CASE("difficulty csv") {
  const auto path = std::filesystem::temp_directory_path() / "curriseg_diff.csv";
  std::filesystem::remove(path);
  DifficultyTable t;
  t.epoch = 12;
  t.scores = {{0, 0.25}, {1, 0.5}};
  append_difficulty_csv(path, t);
  append_difficulty_csv(path, t);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  std::getline(in, line);
  CHECK(line == "epoch,sample_id,d");
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 4);
  std::filesystem::remove(path);
}

}
