#include "curriseg/curriculum.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "curriseg/loss.hpp"

namespace curriseg {

double difficulty_score(const Grid2D& prediction_logits, const BitMask& ground_truth) {
  if (prediction_logits.height() != ground_truth.height() || prediction_logits.width() != ground_truth.width())
    throw DomainError("difficulty_score: shape mismatch");
  BitMask predicted(ground_truth.height(), ground_truth.width());
  for (std::size_t i = 0; i < prediction_logits.size(); ++i)
    predicted.set(i, sigmoid(prediction_logits[i]) >= kBinarizeThreshold);
  return 1.0 - iou(predicted, ground_truth);
}

DifficultyTable evaluate_difficulties(const ConvNetParams& checkpoint, std::span<const Sample> dataset) {
  if (!checkpoint.all_finite()) throw DomainError("evaluate_difficulties: non-finite checkpoint");
  DifficultyTable table;
  for (const auto& s : dataset) table.scores[s.id] = difficulty_score(forward(checkpoint, s.image), s.mask);
  return table;
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "quadratic") return ScheduleKind::quadratic;
  if (name == "sqrt") return ScheduleKind::sqrt;
  throw DomainError("unknown schedule '" + std::string(name) + "'");
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::quadratic: return "quadratic";
    case ScheduleKind::sqrt: return "sqrt";
  }
  return "?";
}

double selection_fraction(int t, const ScheduleVariant& schedule) {
  if (schedule.t_c < 1) throw DomainError("selection_fraction: T_c must be positive");
  if (!(schedule.p_min > 0.0 && schedule.p_min <= 1.0)) throw DomainError("selection_fraction: p_min outside (0, 1]");
  if (t < 1 || t > schedule.t_c) throw DomainError("selection_fraction: t outside [1, T_c]");
  if (schedule.t_c == 1) return 1.0;
  const double frac = static_cast<double>(t - 1) / static_cast<double>(schedule.t_c - 1);
  double shaped = frac;
  if (schedule.kind == ScheduleKind::quadratic) shaped = frac * frac;
  if (schedule.kind == ScheduleKind::sqrt) shaped = std::sqrt(frac);
  return schedule.p_min + (1.0 - schedule.p_min) * shaped;
}

std::set<int> active_subset(const DifficultyTable& table, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("active_subset: p outside (0, 1]");
  std::set<int> ids;
  if (table.scores.empty()) return ids;
  std::vector<double> scores;
  scores.reserve(table.scores.size());
  for (const auto& [id, d] : table.scores) scores.push_back(d);
  const double threshold = percentile_threshold(scores, p);
  for (const auto& [id, d] : table.scores)
    if (d <= threshold) ids.insert(id);
  return ids;
}

void append_difficulty_csv(const std::filesystem::path& path, const DifficultyTable& table) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  if (fresh) out << "epoch,sample_id,d\n";
  out.precision(17);
  for (const auto& [id, d] : table.scores) out << table.epoch << ',' << id << ',' << d << '\n';
}

}  // namespace curriseg
