#include "curriseg/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "curriseg/metrics.hpp"

namespace curriseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string git_blob_hash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("git_blob_hash: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("git_blob_hash: digest failed");
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json report_json(const MetricReport& r) {
  return {{"mae", r.mae}, {"iou", r.iou}, {"dice", r.dice}, {"f_beta", r.f_beta}, {"n_samples", r.n_samples}};
}

std::vector<Sample> load_test_set(const RunManifest& m, const DatasetInfo& train_info) {
  if (m.test_data) return import_dataset(*m.test_data).samples;
  // Same quantization as a dataset that went through PGM export.
  return quantize_images(generate_dataset(m.test_n, train_info.spec, m.test_seed));
}

}  // namespace

std::string cmd_generate(const GenerateOptions& o) {
  if (o.n < 1) throw UsageError("--n must be at least 1");
  if (o.out.empty()) throw UsageError("--out is required");
  if (o.outlier_fraction < 0.0 || o.ambiguous_fraction < 0.0 || o.outlier_fraction + o.ambiguous_fraction > 1.0)
    throw UsageError("corruption fractions must be non-negative and sum to at most 1");
  validate(o.spec);
  auto samples = corrupt_labels(generate_dataset(o.n, o.spec, o.seed), o.outlier_fraction, o.ambiguous_fraction,
                                o.seed ^ 0xC0AA'0000'0000ULL);
  fs::create_directories(o.out);
  return export_dataset(o.out, samples, {o.spec, o.seed, o.outlier_fraction, o.ambiguous_fraction});
}

std::uint64_t default_test_seed(std::uint64_t dataset_seed) { return dataset_seed + 0x7E57'0000ULL; }

json to_json(const RunManifest& m) {
  json j{{"config", to_json(m.config)},
         {"data", m.data.string()},
         {"out", m.out.string()},
         {"dataset_hash", m.dataset_hash},
         {"test_n", m.test_n},
         {"test_seed", m.test_seed}};
  j["test_data"] = m.test_data ? json(m.test_data->string()) : json(nullptr);
  return j;
}

RunManifest manifest_from_json(const json& j) {
  try {
    RunManifest m;
    m.config = config_from_json(j.at("config"));
    m.data = j.at("data").get<std::string>();
    m.out = j.at("out").get<std::string>();
    m.dataset_hash = j.value("dataset_hash", std::string());
    m.test_n = j.value("test_n", 100);
    m.test_seed = j.value("test_seed", std::uint64_t{0});
    if (j.contains("test_data") && !j["test_data"].is_null()) m.test_data = j["test_data"].get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run manifest: ") + e.what());
  }
}

RunManifest load_manifest(const fs::path& path) {
  try {
    return manifest_from_json(json::parse(read_text(path)));
  } catch (const json::parse_error& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
}

json cmd_train(const RunManifest& manifest) {
  RunManifest m = manifest;
  validate(m.config);
  if (m.test_n < 1) throw UsageError("--test-n must be at least 1");
  if (m.out.empty()) throw UsageError("--out is required");
  const auto dataset = import_dataset(m.data);
  const std::string hash = git_blob_hash(dataset.manifest_text);
  if (!m.dataset_hash.empty() && m.dataset_hash != hash)
    throw ConfigError("dataset manifest hash " + hash + " does not match the run manifest's " + m.dataset_hash);
  m.dataset_hash = hash;
  const auto test = load_test_set(m, dataset.info);

  TrainConfig config = m.config;
  config.diagnostics = true;

  fs::create_directories(m.out / "checkpoints");
  for (const auto& stale : {"difficulties.csv", "weights.csv"}) fs::remove(m.out / stale);
  write_text(m.out / "manifest.json", to_json(m).dump(2) + "\n");

  const auto result = run_experiment(config, dataset.samples, test);

  write_epoch_csv(m.out / "epochs.csv", result.logs);
  {
    std::ostringstream timing;
    timing << "epoch,wall_seconds\n";
    for (const auto& l : result.logs) timing << l.epoch << ',' << l.wall_seconds << '\n';
    write_text(m.out / "timing.csv", timing.str());
  }
  for (const auto& [epoch, params] : result.checkpoints) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.json", epoch);
    save_checkpoint(m.out / "checkpoints" / name, {params, 0});
  }
  if (!result.weight_history.empty()) write_weight_csv(m.out / "weights.csv", result.weight_history);
  for (const auto& table : result.difficulty_history) append_difficulty_csv(m.out / "difficulties.csv", table);

  const MetricReport clean = evaluate(result.final_params, test);
  const MetricReport blurred = evaluate(
      result.final_params, degrade_dataset(test, {DegradationKind::blur, kSummaryBlurStrength, 1.0}, m.test_seed + 1));
  const MetricReport noisy =
      evaluate(result.final_params,
               degrade_dataset(test, {DegradationKind::noise, kSummaryNoiseStrength, 1.0}, m.test_seed + 2));
  json summary{{"config", to_json(m.config)},
               {"mode", std::string(to_string(m.config.mode))},
               {"seed", m.config.seed},
               {"epochs", result.logs.size()},
               {"dataset_hash", hash},
               {"parameter_count", ConvNetParams::kParameterCount},
               {"gradient_evaluations", result.gradient_evaluations},
               {"adam_steps", result.adam_steps},
               {"final", report_json(clean)},
               {"degraded",
                {{"blur", {{"strength", kSummaryBlurStrength}, {"metrics", report_json(blurred)}}},
                 {"noise", {{"strength", kSummaryNoiseStrength}, {"metrics", report_json(noisy)}}}}}};
  write_text(m.out / "summary.json", summary.dump(2) + "\n");
  return summary;
}

namespace {
constexpr int kFilterFixedPointPasses = 50;
}  // namespace

std::size_t cmd_filter(const FilterOptions& o) {
  if (!(o.r > 0.0)) throw UsageError("--r must be positive");
  if (!(o.fraction >= 0.0 && o.fraction <= 1.0)) throw UsageError("--fraction must lie in [0, 1]");
  const Grid2D image = read_pgm(o.in);
  const BitMask mask = filter_mask(image.height(), image.width(), o.kind, o.r, o.fraction);
  // Filter, clip and quantize to 8 bits, repeated until the raster stops
  // changing, so filtering the written file again reproduces it exactly.
  auto pass = [&](const Grid2D& in) {
    Grid2D out = in;
    if (mask.count() != mask.size()) {
      auto spectrum = dft2(in);
      spectrum.apply_mask(mask);
      out = idft2(spectrum);
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::round(std::clamp(out[i], 0.0, 1.0) * 255.0) / 255.0;
    return out;
  };
  Grid2D out = pass(image);
  for (int k = 0; k < kFilterFixedPointPasses; ++k) {
    Grid2D next = pass(out);
    if (next == out) break;
    out = std::move(next);
  }
  write_pgm(o.out, out);
  if (o.dump_mask) {
    // Rows follow the centered spectrum layout (DC at row H/2, column W/2).
    std::ostringstream text;
    for (std::size_t i = 0; i < mask.height(); ++i) {
      for (std::size_t k = 0; k < mask.width(); ++k) text << (mask(i, k) ? '1' : '0');
      text << '\n';
    }
    write_text(*o.dump_mask, text.str());
  }
  return mask.count();
}

namespace {

const std::vector<std::string> kReportMetrics = {"mae", "iou", "dice", "f_beta", "blur_iou", "noise_iou"};

struct RunRow {
  std::string mode;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
};

RunRow read_run(const fs::path& dir, json& config_out) {
  json s;
  try {
    s = json::parse(read_text(dir / "summary.json"));
    RunRow row;
    row.mode = s.at("mode").get<std::string>();
    row.seed = s.at("seed").get<std::uint64_t>();
    const auto& f = s.at("final");
    for (const char* k : {"mae", "iou", "dice", "f_beta"}) row.metrics[k] = f.at(k).get<double>();
    row.metrics["blur_iou"] = s.at("degraded").at("blur").at("metrics").at("iou").get<double>();
    row.metrics["noise_iou"] = s.at("degraded").at("noise").at("metrics").at("iou").get<double>();
    config_out = s.at("config");
    return row;
  } catch (const json::exception& e) {
    throw IoError("malformed summary in " + dir.string() + ": " + e.what());
  }
}

std::string csv_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

json cmd_report(const std::vector<fs::path>& runs, const std::optional<fs::path>& out) {
  if (runs.empty()) throw UsageError("report needs at least one run directory");
  std::vector<RunRow> rows;
  std::optional<json> reference;
  fs::path reference_dir;
  std::map<std::pair<std::string, std::uint64_t>, fs::path> seen;
  for (const auto& dir : runs) {
    json config;
    rows.push_back(read_run(dir, config));
    config.erase("seed");
    config.erase("mode");
    if (!reference) {
      reference = config;
      reference_dir = dir;
    } else if (config != *reference) {
      throw AggregationError("configuration of " + dir.string() + " differs from " + reference_dir.string() +
                             " beyond seed and mode");
    }
    const auto key = std::make_pair(rows.back().mode, rows.back().seed);
    if (auto [it, fresh] = seen.emplace(key, dir); !fresh)
      throw AggregationError("runs " + it->second.string() + " and " + dir.string() + " share mode " + key.first +
                             " and seed " + std::to_string(key.second));
  }

  std::map<std::string, std::vector<const RunRow*>> by_mode;
  for (const auto& r : rows) by_mode[r.mode].push_back(&r);

  json report;
  report["runs"] = json::array();
  for (const auto& r : rows) report["runs"].push_back({{"mode", r.mode}, {"seed", r.seed}, {"metrics", r.metrics}});
  report["modes"] = json::object();
  for (const auto& [mode, list] : by_mode) {
    json entry{{"n", list.size()}};
    for (const auto& metric : kReportMetrics) {
      double mean = 0.0;
      for (const auto* r : list) mean += r->metrics.at(metric);
      mean /= static_cast<double>(list.size());
      double ss = 0.0;
      for (const auto* r : list) ss += (r->metrics.at(metric) - mean) * (r->metrics.at(metric) - mean);
      const double sd = list.size() > 1 ? std::sqrt(ss / static_cast<double>(list.size() - 1)) : 0.0;
      entry["mean"][metric] = mean;
      entry["std"][metric] = sd;
    }
    report["modes"][mode] = entry;
  }
  report["deltas"] = json::array();
  std::map<std::uint64_t, const RunRow*> baseline;
  for (const auto& r : rows)
    if (r.mode == "baseline") baseline[r.seed] = &r;
  for (const auto& r : rows) {
    if (r.mode != "curriseg") continue;
    auto it = baseline.find(r.seed);
    if (it == baseline.end()) continue;
    json d{{"seed", r.seed}};
    for (const auto& metric : kReportMetrics) d["metrics"][metric] = r.metrics.at(metric) - it->second->metrics.at(metric);
    report["deltas"].push_back(d);
  }

  if (out) {
    fs::create_directories(*out);
    write_text(*out / "report.json", report.dump(2) + "\n");
    std::ostringstream csv;
    csv << "row,mode,seed";
    for (const auto& metric : kReportMetrics) csv << ',' << metric;
    csv << '\n';
    auto emit = [&](const std::string& kind, const std::string& mode, const std::string& seed, const json& values) {
      csv << kind << ',' << mode << ',' << seed;
      for (const auto& metric : kReportMetrics) csv << ',' << csv_number(values.at(metric).get<double>());
      csv << '\n';
    };
    for (const auto& r : report["runs"])
      emit("run", r["mode"], std::to_string(r["seed"].get<std::uint64_t>()), r["metrics"]);
    for (const auto& [mode, entry] : report["modes"].items()) {
      emit("mean", mode, "", entry["mean"]);
      emit("std", mode, "", entry["std"]);
    }
    for (const auto& d : report["deltas"])
      emit("delta", "curriseg-baseline", std::to_string(d["seed"].get<std::uint64_t>()), d["metrics"]);
    write_text(*out / "report.csv", csv.str());
  }
  return report;
}

namespace {

int threads_from_env() {
  const char* raw = std::getenv("CURRISEG_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 0 || v > 1024) throw UsageError("CURRISEG_THREADS must be an integer in [0, 1024]");
  return static_cast<int>(v);
}

int fail(ExitCode code, const char* kind, const std::string& message) {
  std::cerr << "curriseg: error[" << kind << "]: " << message << '\n';
  return code;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Dual-phase curriculum training for context-entangled segmentation on synthetic scenes."};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset directory");
  generate->add_option("--n", gen.n, "Number of samples")->capture_default_str();
  generate->add_option("--size", gen.spec.size, "Image side length")->capture_default_str();
  generate->add_option("--alpha", gen.spec.alpha, "Camouflage strength in [0, 1]")->capture_default_str();
  generate->add_option("--band-low", gen.spec.band_low, "Texture band inner radius ratio")->capture_default_str();
  generate->add_option("--band-high", gen.spec.band_high, "Texture band outer radius ratio")->capture_default_str();
  generate->add_option("--gap", gen.spec.intensity_gap, "Foreground intensity gap")->capture_default_str();
  generate->add_option("--outlier-frac", gen.outlier_fraction, "Fraction of outlier labels")->capture_default_str();
  generate->add_option("--ambiguous-frac", gen.ambiguous_fraction, "Fraction of ambiguous boundaries")
      ->capture_default_str();
  generate->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  generate->add_option("--out", gen.out, "Output directory")->required();

  RunManifest man;
  std::string manifest_path;
  std::string mode = "curriseg", schedule = "linear", sigma = "gaussian", beta = "linear", filter = "circular",
              subset = "all";
  std::vector<std::string> drops;
  std::string data, out, test_data;
  auto* train = app.add_subcommand("train", "Run one training experiment");
  TrainConfig& c = man.config;
  train->add_option("--manifest", manifest_path, "Rerun from an existing run manifest")->check(CLI::ExistingFile);
  train->add_option("--data", data, "Dataset directory");
  train->add_option("--out", out, "Run directory");
  train->add_option("--test-data", test_data, "Held-out dataset directory (generated when absent)");
  train->add_option("--test-n", man.test_n, "Size of the generated held-out set")->capture_default_str();
  train->add_option("--test-seed", man.test_seed, "Seed of the generated held-out set");
  train->add_option("--mode", mode)->check(CLI::IsMember({"baseline", "curriseg", "reversed"}))->capture_default_str();
  train->add_option("--schedule", schedule)->check(CLI::IsMember({"linear", "quadratic", "sqrt"}))->capture_default_str();
  train->add_option("--sigma-variant", sigma)
      ->check(CLI::IsMember({"gaussian", "triangular", "quadratic"}))
      ->capture_default_str();
  train->add_option("--beta-variant", beta)->check(CLI::IsMember({"linear", "exponential"}))->capture_default_str();
  train->add_option("--filter", filter)
      ->check(CLI::IsMember({"circular", "square", "progressive"}))
      ->capture_default_str();
  train->add_option("--sbft-subset", subset)->check(CLI::IsMember({"all", "hard", "random"}))->capture_default_str();
  train->add_option("--drop", drops, "Weight factors to ablate")
      ->delimiter(',')
      ->check(CLI::IsMember({"mu", "sigma", "out"}));
  train->add_option("--K", c.K)->capture_default_str();
  train->add_option("--p-min", c.p_min)->capture_default_str();
  train->add_option("--sigma-star", c.sigma_star)->capture_default_str();
  train->add_option("--gamma", c.gamma)->capture_default_str();
  train->add_option("--w-min-s", c.w_min_s)->capture_default_str();
  train->add_option("--w-min", c.w_min)->capture_default_str();
  train->add_option("--r", c.r)->capture_default_str();
  train->add_option("--t-c", c.t_c)->capture_default_str();
  train->add_option("--t", c.t)->capture_default_str();
  train->add_option("--warmup", c.warmup_epochs)->capture_default_str();
  train->add_option("--lr", c.lr)->capture_default_str();
  train->add_option("--batch-size", c.batch_size, "Mini-batch size (0 = full batch)")->capture_default_str();
  train->add_option("--eval-interval", c.eval_interval, "Test metrics every n epochs (0 = final only)")
      ->capture_default_str();
  train->add_option("--seed", c.seed)->capture_default_str();

  FilterOptions fopt;
  std::string fkind = "circular";
  std::string dump_mask;
  auto* filt = app.add_subcommand("filter", "Low-pass filter a PGM image in the frequency domain");
  filt->add_option("--in", fopt.in)->required()->check(CLI::ExistingFile);
  filt->add_option("--out", fopt.out)->required();
  filt->add_option("--r", fopt.r)->capture_default_str();
  filt->add_option("--filter", fkind)->check(CLI::IsMember({"circular", "square", "progressive"}))->capture_default_str();
  filt->add_option("--fraction", fopt.fraction, "Progressive filter position in [0, 1]")->capture_default_str();
  filt->add_option("--dump-mask", dump_mask, "Write the passband as rows of 0/1 in centered layout");

  std::vector<std::string> run_dirs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Aggregate final metrics across run directories");
  report->add_option("runs", run_dirs, "Run directories")->required();
  report->add_option("--out", report_out, "Write report.json and report.csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (*generate) {
      std::cout << cmd_generate(gen);
    } else if (*train) {
      c.threads = threads_from_env();
      if (!manifest_path.empty()) {
        const int threads = c.threads;
        man = load_manifest(manifest_path);
        man.config.threads = threads;
        if (!out.empty()) man.out = out;
      } else {
        if (data.empty()) throw UsageError("--data is required (or --manifest)");
        if (out.empty()) throw UsageError("--out is required");
        man.data = data;
        man.out = out;
        if (!test_data.empty()) man.test_data = test_data;
        c.mode = parse_train_mode(mode);
        c.schedule = parse_schedule_kind(schedule);
        c.sigma_variant = parse_sigma_variant(sigma);
        c.beta_variant = parse_beta_variant(beta);
        c.filter = parse_filter_kind(filter);
        c.sbft_subset = parse_sbft_subset(subset);
        for (const auto& d : drops) {
          c.drop_mu |= d == "mu";
          c.drop_sigma |= d == "sigma";
          c.drop_out |= d == "out";
        }
        validate(c);
        if (train->count("--test-seed") == 0) man.test_seed = default_test_seed(import_dataset(man.data).info.seed);
      }
      const auto summary = cmd_train(man);
      std::cout << summary.dump(2) << '\n';
    } else if (*filt) {
      fopt.kind = parse_filter_kind(fkind);
      if (!dump_mask.empty()) fopt.dump_mask = dump_mask;
      std::cout << "passband " << cmd_filter(fopt) << '\n';
    } else if (*report) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      std::optional<fs::path> dest;
      if (!report_out.empty()) dest = report_out;
      std::cout << cmd_report(dirs, dest).dump(2) << '\n';
    }
    return kOk;
  } catch (const UsageError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const ConfigError& e) {
    return fail(kConfig, "config", e.what());
  } catch (const AggregationError& e) {
    return fail(kAggregation, "aggregation", e.what());
  } catch (const IoError& e) {
    return fail(kIo, "io", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kIo, "io", e.what());
  } catch (const DomainError& e) {
    return fail(kDomain, "domain", e.what());
  } catch (const std::exception& e) {
    return fail(kInternal, "internal", e.what());
  }
}

}  // namespace curriseg::cli
