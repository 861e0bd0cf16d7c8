#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string_view>

#include "curriseg/grid.hpp"
#include "curriseg/model.hpp"
#include "curriseg/synthdata.hpp"

namespace curriseg {

/// Probability threshold used to binarize predictions; p == 0.5 is foreground.
inline constexpr double kBinarizeThreshold = 0.5;

/// 1 - IoU(binarized sigmoid(logits), ground truth).
double difficulty_score(const Grid2D& prediction_logits, const BitMask& ground_truth);

struct DifficultyTable {
  int epoch = 0;
  int checkpoint_epoch = 0;
  std::map<int, double> scores;
};

/// Scores every sample with a frozen checkpoint. Results are keyed by id
/// and do not depend on evaluation order.
DifficultyTable evaluate_difficulties(const ConvNetParams& checkpoint, std::span<const Sample> dataset);

enum class ScheduleKind { linear, quadratic, sqrt };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);

struct ScheduleVariant {
  ScheduleKind kind = ScheduleKind::linear;
  double p_min = 0.6;
  int t_c = 50;  // length of the curriculum window
};

/// p(t) = p_min + (1 - p_min) * ((t-1)/(T_c-1))^e with e = 1, 2 or 0.5.
/// A one-epoch window admits everything.
double selection_fraction(int t, const ScheduleVariant& schedule);

/// Ids with score <= nearest-rank percentile threshold at p.
std::set<int> active_subset(const DifficultyTable& table, double p);

/// Appends rows "epoch,sample_id,d" (header written when the file is new).
void append_difficulty_csv(const std::filesystem::path& path, const DifficultyTable& table);

}  // namespace curriseg
