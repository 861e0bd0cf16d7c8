#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "curriseg/curriculum.hpp"
#include "curriseg/metrics.hpp"
#include "curriseg/model.hpp"
#include "curriseg/spectral.hpp"
#include "curriseg/synthdata.hpp"
#include "curriseg/weighting.hpp"

namespace curriseg {

/// Contradictory or out-of-range training configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TrainMode { baseline, curriseg, reversed };
enum class SbftSubset { all, hard, random };
enum class Phase { warmup, curriculum, anti, plain };

TrainMode parse_train_mode(std::string_view name);
SbftSubset parse_sbft_subset(std::string_view name);
std::string_view to_string(TrainMode m);
std::string_view to_string(SbftSubset s);
std::string_view to_string(Phase p);

struct TrainConfig {
  int K = 10;
  double p_min = 0.6;
  double sigma_star = 0.5;
  double gamma = 0.2;
  double w_min_s = 0.1;
  double w_min = 0.1;
  double r = 0.95;
  int t_c = 60;
  int t = 70;
  int warmup_epochs = 10;

  double lr = 3e-3;
  int batch_size = 10;  // 0 = full batch

  TrainMode mode = TrainMode::curriseg;
  ScheduleKind schedule = ScheduleKind::linear;
  SigmaVariant sigma_variant = SigmaVariant::gaussian;
  BetaVariant beta_variant = BetaVariant::linear;
  FilterKind filter = FilterKind::circular;
  SbftSubset sbft_subset = SbftSubset::all;
  bool drop_mu = false;
  bool drop_sigma = false;
  bool drop_out = false;

  std::uint64_t seed = 0;
  int threads = 0;        // 0 = sequential
  int eval_interval = 1;  // test metrics every n epochs (0 = final epoch only)
  bool diagnostics = false;
};

/// Throws ConfigError on contradictions such as T_c >= T.
void validate(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

struct EpochLog {
  int epoch = 0;
  Phase phase = Phase::plain;
  std::size_t active_count = 0;
  double mean_sample_weight = 1.0;
  double mean_pixel_weight = 1.0;
  double train_loss = 0.0;
  std::optional<MetricReport> test;
  std::uint64_t gradient_evaluations = 0;  // cumulative
  int checkpoint_epoch = -1;               // evaluator used, -1 outside the curriculum
  double wall_seconds = 0.0;
};

/// Per-epoch dump of sample weights, written when diagnostics are on.
struct WeightSnapshot {
  int epoch = 0;
  std::map<int, SampleWeightStats> weights;
};

/// Epoch-loop state shared by the training phases. Each run_* call
/// continues from the last completed epoch.
class Trainer {
 public:
  using DifficultyEvaluator = std::function<DifficultyTable(const ConvNetParams& checkpoint, int checkpoint_epoch)>;

  Trainer(TrainConfig config, std::vector<Sample> train, std::vector<Sample> test, ConvNetParams init);

  /// Replaces the checkpoint-based difficulty evaluation (used by tests).
  void set_difficulty_evaluator(DifficultyEvaluator evaluator) { evaluator_ = std::move(evaluator); }

  /// All samples, unit weights; leaves the warm-up checkpoint behind.
  void run_warmup();
  /// Robust curriculum selection for `epochs` epochs (defaults to T_c - warmup).
  void run_phase1(std::optional<int> epochs = std::nullopt);
  /// Anti-curriculum fine-tuning on low-pass filtered inputs (defaults to T - T_c).
  void run_phase2(std::optional<int> epochs = std::nullopt);
  /// Plain training on all samples.
  void run_plain(int epochs);

  int epoch() const { return epoch_; }
  const TrainConfig& config() const { return config_; }
  const ConvNetParams& params() const { return params_; }
  const AdamState& adam() const { return adam_; }
  const std::vector<EpochLog>& logs() const { return logs_; }
  std::uint64_t gradient_evaluations() const { return gradient_evals_; }
  /// Parameters saved at every multiple of K and at the final epoch.
  const std::map<int, ConvNetParams>& checkpoints() const { return checkpoints_; }
  const std::map<int, DifficultyBuffer>& buffers() const { return buffers_; }
  const std::optional<DifficultyTable>& last_difficulties() const { return last_table_; }
  const std::map<int, SampleWeightStats>& last_sample_weights() const { return last_weights_; }
  const std::vector<WeightSnapshot>& weight_history() const { return weight_history_; }
  /// Per-epoch difficulty tables of the curriculum (diagnostics only).
  const std::vector<DifficultyTable>& difficulty_history() const { return difficulty_history_; }
  /// Ids that received a gradient, per epoch.
  const std::vector<std::set<int>>& trained_ids() const { return trained_ids_; }

 private:
  struct Item {
    const Sample* sample;
    const Grid2D* input;
    double sample_weight;
    std::optional<int> pixel_clock;  // curriculum t for pixel weighting
  };
  struct EpochTotals {
    double loss = 0.0;
    double pixel_weight = 0.0;
  };

  EpochTotals train_epoch(std::vector<Item> items);
  void finish_epoch(EpochLog log, double seconds);
  DifficultyTable difficulties_for(int checkpoint_epoch);

  TrainConfig config_;
  std::vector<Sample> train_;
  std::vector<Sample> test_;
  ConvNetParams params_;
  AdamState adam_;
  int epoch_ = 0;
  int pixel_window_ = 1;
  std::uint64_t gradient_evals_ = 0;
  std::vector<EpochLog> logs_;
  std::map<int, ConvNetParams> checkpoints_;
  std::map<int, DifficultyBuffer> buffers_;
  std::optional<std::pair<int, ConvNetParams>> evaluator_checkpoint_;
  std::optional<DifficultyTable> cached_table_;
  std::optional<DifficultyTable> last_table_;
  std::map<int, SampleWeightStats> last_weights_;
  std::vector<WeightSnapshot> weight_history_;
  std::vector<DifficultyTable> difficulty_history_;
  std::vector<std::set<int>> trained_ids_;
  DifficultyEvaluator evaluator_;
};

ConvNetParams run_warmup(const TrainConfig& config, const std::vector<Sample>& dataset, const ConvNetParams& params);
ConvNetParams run_phase1(const TrainConfig& config, const std::vector<Sample>& dataset, const ConvNetParams& params);
ConvNetParams run_phase2(const TrainConfig& config, const std::vector<Sample>& dataset, const ConvNetParams& params);

struct ExperimentResult {
  std::vector<EpochLog> logs;
  ConvNetParams final_params;
  std::uint64_t adam_steps = 0;
  std::uint64_t gradient_evaluations = 0;
  std::map<int, ConvNetParams> checkpoints;
  /// Sample weights of the final curriculum epoch (empty for baseline).
  std::map<int, SampleWeightStats> final_sample_weights;
  std::optional<DifficultyTable> last_difficulties;
  std::vector<WeightSnapshot> weight_history;
  std::vector<DifficultyTable> difficulty_history;
};

/// Runs the configured mode end to end. Initialization is seeded from config.seed.
ExperimentResult run_experiment(const TrainConfig& config, const std::vector<Sample>& train,
                                const std::vector<Sample>& test);

void write_epoch_csv(const std::filesystem::path& path, const std::vector<EpochLog>& logs);
void write_weight_csv(const std::filesystem::path& path, const std::vector<WeightSnapshot>& history);

}  // namespace curriseg
