#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "curriseg/spectral.hpp"
#include "curriseg/synthdata.hpp"
#include "curriseg/trainer.hpp"

namespace curriseg::cli {

/// Runs from different configurations (beyond seed and mode) were mixed.
class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command-line values that the parser itself cannot reject.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kDomain = 5,
  kAggregation = 6,
};

/// `git hash-object` of a byte string: sha1("blob <len>\0" + bytes), hex.
std::string git_blob_hash(const std::string& bytes);

struct GenerateOptions {
  int n = 200;
  SceneSpec spec;
  double outlier_fraction = 0.0;
  double ambiguous_fraction = 0.0;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

/// Writes the dataset directory and returns its manifest text.
std::string cmd_generate(const GenerateOptions& options);

/// Everything a training run depends on. Rerunning from the same manifest
/// reproduces the same logs.
struct RunManifest {
  TrainConfig config;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string dataset_hash;
  std::optional<std::filesystem::path> test_data;  // generated when absent
  int test_n = 100;
  std::uint64_t test_seed = 0;
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);
RunManifest load_manifest(const std::filesystem::path& path);

/// Held-out set generated from the training manifest's scene spec.
std::uint64_t default_test_seed(std::uint64_t dataset_seed);

/// Test-time degradations reported in every summary.
inline constexpr double kSummaryBlurStrength = 1.0;
inline constexpr double kSummaryNoiseStrength = 0.15;

/// Trains and writes manifest.json, epochs.csv, timing.csv, summary.json and
/// checkpoints/ (plus difficulties.csv and weights.csv for curriculum runs).
/// Returns the summary.
nlohmann::json cmd_train(const RunManifest& manifest);

struct FilterOptions {
  std::filesystem::path in;
  std::filesystem::path out;
  double r = 0.95;
  FilterKind kind = FilterKind::circular;
  double fraction = 1.0;  // progressive filter position
  std::optional<std::filesystem::path> dump_mask;
};

/// Returns the number of retained frequency bins.
std::size_t cmd_filter(const FilterOptions& options);

/// Per-mode mean and standard deviation of final metrics plus paired
/// curriseg - baseline deltas. Writes report.json and report.csv when `out`
/// is set.
nlohmann::json cmd_report(const std::vector<std::filesystem::path>& runs,
                          const std::optional<std::filesystem::path>& out);

/// Full command-line entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace curriseg::cli
