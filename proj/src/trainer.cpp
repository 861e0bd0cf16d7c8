#include "curriseg/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "curriseg/loss.hpp"

namespace curriseg {

namespace {

constexpr std::uint64_t kStreamShuffle = 0x5000;
constexpr std::uint64_t kStreamRandomSubset = 0x6000;

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
}

}  // namespace

TrainMode parse_train_mode(std::string_view name) {
  if (name == "baseline") return TrainMode::baseline;
  if (name == "curriseg") return TrainMode::curriseg;
  if (name == "reversed") return TrainMode::reversed;
  throw DomainError("unknown mode '" + std::string(name) + "'");
}

SbftSubset parse_sbft_subset(std::string_view name) {
  if (name == "all") return SbftSubset::all;
  if (name == "hard") return SbftSubset::hard;
  if (name == "random") return SbftSubset::random;
  throw DomainError("unknown SBFT subset '" + std::string(name) + "'");
}

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::curriseg: return "curriseg";
    case TrainMode::reversed: return "reversed";
  }
  return "?";
}

std::string_view to_string(SbftSubset s) {
  switch (s) {
    case SbftSubset::all: return "all";
    case SbftSubset::hard: return "hard";
    case SbftSubset::random: return "random";
  }
  return "?";
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::warmup: return "warmup";
    case Phase::curriculum: return "curriculum";
    case Phase::anti: return "anti";
    case Phase::plain: return "plain";
  }
  return "?";
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.K < 1) fail("K must be at least 1");
  if (!(c.p_min > 0.0 && c.p_min <= 1.0)) fail("p_min must lie in (0, 1]");
  if (!std::isfinite(c.sigma_star)) fail("sigma_star must be finite");
  if (!(c.gamma > 0.0)) fail("gamma must be positive");
  if (!(c.w_min_s > 0.0 && c.w_min_s < 1.0)) fail("w_min_s must lie in (0, 1)");
  if (!(c.w_min > 0.0 && c.w_min < 1.0)) fail("w_min must lie in (0, 1)");
  if (!(c.r > 0.0) || !std::isfinite(c.r)) fail("r must be positive");
  if (c.warmup_epochs < 0) fail("warmup_epochs must be non-negative");
  if (!(c.t_c < c.t)) fail("T_c must be below T");
  if (!(c.warmup_epochs < c.t_c)) fail("warmup_epochs must be below T_c");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) fail("learning rate must be positive");
  if (c.batch_size < 0) fail("batch size must be non-negative");
  if (c.threads < 0) fail("thread count must be non-negative");
  if (c.eval_interval < 0) fail("eval interval must be non-negative");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"K", c.K},
          {"p_min", c.p_min},
          {"sigma_star", c.sigma_star},
          {"gamma", c.gamma},
          {"w_min_s", c.w_min_s},
          {"w_min", c.w_min},
          {"r", c.r},
          {"t_c", c.t_c},
          {"t", c.t},
          {"warmup_epochs", c.warmup_epochs},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"mode", std::string(to_string(c.mode))},
          {"schedule", std::string(to_string(c.schedule))},
          {"sigma_variant", std::string(to_string(c.sigma_variant))},
          {"beta_variant", std::string(to_string(c.beta_variant))},
          {"filter", std::string(to_string(c.filter))},
          {"sbft_subset", std::string(to_string(c.sbft_subset))},
          {"drop_mu", c.drop_mu},
          {"drop_sigma", c.drop_sigma},
          {"drop_out", c.drop_out},
          {"seed", c.seed},
          {"eval_interval", c.eval_interval}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.K = j.value("K", c.K);
  c.p_min = j.value("p_min", c.p_min);
  c.sigma_star = j.value("sigma_star", c.sigma_star);
  c.gamma = j.value("gamma", c.gamma);
  c.w_min_s = j.value("w_min_s", c.w_min_s);
  c.w_min = j.value("w_min", c.w_min);
  c.r = j.value("r", c.r);
  c.t_c = j.value("t_c", c.t_c);
  c.t = j.value("t", c.t);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.mode = parse_train_mode(j.value("mode", std::string("curriseg")));
  c.schedule = parse_schedule_kind(j.value("schedule", std::string("linear")));
  c.sigma_variant = parse_sigma_variant(j.value("sigma_variant", std::string("gaussian")));
  c.beta_variant = parse_beta_variant(j.value("beta_variant", std::string("linear")));
  c.filter = parse_filter_kind(j.value("filter", std::string("circular")));
  c.sbft_subset = parse_sbft_subset(j.value("sbft_subset", std::string("all")));
  c.drop_mu = j.value("drop_mu", false);
  c.drop_sigma = j.value("drop_sigma", false);
  c.drop_out = j.value("drop_out", false);
  c.seed = j.value("seed", std::uint64_t{0});
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  return c;
}

Trainer::Trainer(TrainConfig config, std::vector<Sample> train, std::vector<Sample> test, ConvNetParams init)
    : config_(std::move(config)), train_(std::move(train)), test_(std::move(test)), params_(std::move(init)) {
  validate(config_);
  if (train_.empty()) throw ConfigError("training set is empty");
  std::sort(train_.begin(), train_.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < train_.size(); ++i)
    if (train_[i].id == train_[i - 1].id) throw ConfigError("duplicate sample id " + std::to_string(train_[i].id));
  for (const auto& s : train_) buffers_.emplace(s.id, DifficultyBuffer(static_cast<std::size_t>(config_.K)));
  evaluator_ = [this](const ConvNetParams& checkpoint, int) { return evaluate_difficulties(checkpoint, train_); };
}

Trainer::EpochTotals Trainer::train_epoch(std::vector<Item> items) {
  EpochTotals totals;
  if (items.empty()) {
    trained_ids_.emplace_back();
    return totals;
  }
  const int epoch = epoch_ + 1;
  SeededRng rng(config_.seed, kStreamShuffle + static_cast<std::uint64_t>(epoch));
  std::shuffle(items.begin(), items.end(), rng.engine());

  const std::size_t batch = config_.batch_size == 0 ? items.size() : static_cast<std::size_t>(config_.batch_size);
  const PixelWeightConfig pixel_cfg{config_.w_min, pixel_window_, config_.beta_variant};
  std::set<int> trained;

  for (std::size_t start = 0; start < items.size(); start += batch) {
    const std::size_t end = std::min(items.size(), start + batch);
    // Reduce in ascending id order so the sum is independent of scheduling.
    std::sort(items.begin() + static_cast<std::ptrdiff_t>(start), items.begin() + static_cast<std::ptrdiff_t>(end),
              [](const Item& a, const Item& b) { return a.sample->id < b.sample->id; });
    const std::size_t n = end - start;
    std::vector<ConvNetParams> grads(n);
    std::vector<double> losses(n);
    std::vector<double> mean_w(n);
    parallel_for(n, config_.threads, [&](std::size_t k) {
      const Item& item = items[start + k];
      const auto cache = forward_cached(params_, *item.input);
      Grid2D weights(cache.height, cache.width, 1.0);
      if (item.pixel_clock) weights = pixel_weight_matrix(probabilities(cache.logits), *item.pixel_clock, pixel_cfg);
      const auto loss = curriculum_loss(cache.logits, item.sample->mask, weights, item.sample_weight);
      accumulate_backward(params_, cache, loss.grad, grads[k]);
      losses[k] = loss.breakdown.total;
      mean_w[k] = weights.mean();
    });
    ConvNetParams total;
    for (std::size_t k = 0; k < n; ++k) {
      total.add_scaled(grads[k], 1.0 / static_cast<double>(n));
      totals.loss += losses[k];
      totals.pixel_weight += mean_w[k];
      trained.insert(items[start + k].sample->id);
    }
    gradient_evals_ += n;
    adam_step(params_, total, adam_, config_.lr);
  }
  totals.loss /= static_cast<double>(items.size());
  totals.pixel_weight /= static_cast<double>(items.size());
  trained_ids_.push_back(std::move(trained));
  return totals;
}

void Trainer::finish_epoch(EpochLog log, double seconds) {
  epoch_ = log.epoch;
  log.gradient_evaluations = gradient_evals_;
  log.wall_seconds = seconds;
  const bool last = epoch_ == config_.t;
  if (!test_.empty() && (last || (config_.eval_interval > 0 && epoch_ % config_.eval_interval == 0)))
    log.test = evaluate(params_, test_);
  if (epoch_ % config_.K == 0 || last) checkpoints_[epoch_] = params_;
  logs_.push_back(std::move(log));
}

void Trainer::run_warmup() {
  for (int k = 0; k < config_.warmup_epochs; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Item> items;
    for (const auto& s : train_) items.push_back({&s, &s.image, 1.0, std::nullopt});
    const auto totals = train_epoch(std::move(items));
    EpochLog log;
    log.epoch = epoch_ + 1;
    log.phase = Phase::warmup;
    log.active_count = train_.size();
    log.train_loss = totals.loss;
    log.mean_pixel_weight = totals.pixel_weight;
    finish_epoch(std::move(log), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
}

void Trainer::run_plain(int epochs) {
  for (int k = 0; k < epochs; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Item> items;
    for (const auto& s : train_) items.push_back({&s, &s.image, 1.0, std::nullopt});
    const auto totals = train_epoch(std::move(items));
    EpochLog log;
    log.epoch = epoch_ + 1;
    log.phase = Phase::plain;
    log.active_count = train_.size();
    log.train_loss = totals.loss;
    log.mean_pixel_weight = totals.pixel_weight;
    finish_epoch(std::move(log), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
}

DifficultyTable Trainer::difficulties_for(int checkpoint_epoch) {
  if (!cached_table_ || cached_table_->checkpoint_epoch != checkpoint_epoch) {
    cached_table_ = evaluator_(evaluator_checkpoint_->second, checkpoint_epoch);
    cached_table_->checkpoint_epoch = checkpoint_epoch;
  }
  return *cached_table_;
}

void Trainer::run_phase1(std::optional<int> epochs) {
  const int window = epochs.value_or(config_.t_c - config_.warmup_epochs);
  if (window < 1) return;
  const int first = epoch_ + 1;
  pixel_window_ = window;
  // The parameters entering the curriculum act as the base checkpoint.
  evaluator_checkpoint_ = std::make_pair(epoch_, params_);
  cached_table_.reset();
  const ScheduleVariant schedule{config_.schedule, config_.p_min, window};
  const SampleWeightConfig weight_cfg{config_.sigma_star, config_.gamma,     config_.w_min_s, config_.sigma_variant,
                                      config_.drop_mu,    config_.drop_sigma, config_.drop_out};
  std::map<int, const Sample*> by_id;
  for (const auto& s : train_) by_id.emplace(s.id, &s);

  for (int t = 1; t <= window; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    const int epoch = first + t - 1;
    // Checkpoints refresh at multiples of K: the evaluator for epoch e was
    // saved at K * floor((e - 1) / K), never earlier than the base.
    const int due = config_.K * ((epoch - 1) / config_.K);
    if (due > evaluator_checkpoint_->first) evaluator_checkpoint_ = std::make_pair(due, checkpoints_.at(due));

    auto table = difficulties_for(evaluator_checkpoint_->first);
    table.epoch = epoch;
    for (const auto& [id, d] : table.scores) buffers_.at(id).push(d);

    const double p = selection_fraction(t, schedule);
    const auto active = active_subset(table, p);
    std::map<int, TemporalStats> cohort;
    for (int id : active) cohort.emplace(id, temporal_stats(buffers_.at(id)));
    auto weights = cohort.empty() ? std::map<int, SampleWeightStats>{} : sample_weights(cohort, weight_cfg);

    std::vector<Item> items;
    double weight_sum = 0.0;
    for (int id : active) {
      const Sample* s = by_id.at(id);
      const double w = weights.at(id).w;
      weight_sum += w;
      items.push_back({s, &s->image, w, t});
    }
    const auto totals = train_epoch(std::move(items));

    EpochLog log;
    log.epoch = epoch;
    log.phase = Phase::curriculum;
    log.active_count = active.size();
    log.mean_sample_weight = active.empty() ? 1.0 : weight_sum / static_cast<double>(active.size());
    log.mean_pixel_weight = totals.pixel_weight;
    log.train_loss = totals.loss;
    log.checkpoint_epoch = evaluator_checkpoint_->first;
    if (config_.diagnostics) {
      weight_history_.push_back({epoch, weights});
      difficulty_history_.push_back(table);
    }
    last_weights_ = std::move(weights);
    last_table_ = std::move(table);
    finish_epoch(std::move(log), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
}

void Trainer::run_phase2(std::optional<int> epochs) {
  const int count = epochs.value_or(config_.t - config_.t_c);
  if (count < 1) return;
  const std::size_t h = train_.front().image.height();
  const std::size_t w = train_.front().image.width();

  // Filtered inputs; static filters are computed once.
  std::map<int, Grid2D> static_filtered;
  auto filtered_for = [&](const Sample& s, const BitMask& mask, bool identity, bool cacheable) -> Grid2D {
    if (identity) return s.image;
    if (cacheable) {
      auto it = static_filtered.find(s.id);
      if (it != static_filtered.end()) return it->second;
    }
    auto spectrum = dft2(s.image);
    spectrum.apply_mask(mask);
    Grid2D out = idft2(spectrum);
    if (cacheable) static_filtered.emplace(s.id, out);
    return out;
  };

  for (int k = 0; k < count; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const int epoch = epoch_ + 1;
    const double fraction = count == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    const BitMask mask = filter_mask(h, w, config_.filter, config_.r, fraction);
    const bool identity = mask.count() == mask.size();
    const bool cacheable = config_.filter != FilterKind::progressive;

    std::set<int> filtered_ids;
    if (config_.sbft_subset == SbftSubset::all) {
      for (const auto& s : train_) filtered_ids.insert(s.id);
    } else {
      std::vector<int> order;
      for (const auto& s : train_) order.push_back(s.id);
      if (config_.sbft_subset == SbftSubset::hard) {
        const auto table = last_table_ ? *last_table_ : evaluate_difficulties(params_, train_);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return table.scores.at(a) > table.scores.at(b); });
      } else {
        SeededRng rng(config_.seed, kStreamRandomSubset + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng.engine());
      }
      const std::size_t half = (order.size() + 1) / 2;
      filtered_ids.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
    }

    std::vector<Grid2D> inputs;
    inputs.reserve(train_.size());
    std::vector<Item> items;
    for (const auto& s : train_) {
      if (filtered_ids.count(s.id)) {
        inputs.push_back(filtered_for(s, mask, identity, cacheable));
        items.push_back({&s, &inputs.back(), 1.0, std::nullopt});
      } else {
        items.push_back({&s, &s.image, 1.0, std::nullopt});
      }
    }
    const auto totals = train_epoch(std::move(items));

    EpochLog log;
    log.epoch = epoch;
    log.phase = Phase::anti;
    log.active_count = train_.size();
    log.train_loss = totals.loss;
    log.mean_pixel_weight = totals.pixel_weight;
    finish_epoch(std::move(log), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
}

ConvNetParams run_warmup(const TrainConfig& config, const std::vector<Sample>& dataset, const ConvNetParams& params) {
  Trainer trainer(config, dataset, {}, params);
  trainer.run_warmup();
  return trainer.params();
}

ConvNetParams run_phase1(const TrainConfig& config, const std::vector<Sample>& dataset, const ConvNetParams& params) {
  Trainer trainer(config, dataset, {}, params);
  trainer.run_phase1();
  return trainer.params();
}

ConvNetParams run_phase2(const TrainConfig& config, const std::vector<Sample>& dataset, const ConvNetParams& params) {
  Trainer trainer(config, dataset, {}, params);
  trainer.run_phase2();
  return trainer.params();
}

ExperimentResult run_experiment(const TrainConfig& config, const std::vector<Sample>& train,
                                const std::vector<Sample>& test) {
  validate(config);
  Trainer trainer(config, train, test, ConvNetParams::initialize(config.seed));
  switch (config.mode) {
    case TrainMode::baseline:
      trainer.run_plain(config.t);
      break;
    case TrainMode::curriseg:
      trainer.run_warmup();
      trainer.run_phase1();
      trainer.run_phase2();
      break;
    case TrainMode::reversed:
      // Same phase durations, anti-curriculum first.
      trainer.run_phase2();
      trainer.run_warmup();
      trainer.run_phase1();
      break;
  }
  ExperimentResult result;
  result.logs = trainer.logs();
  result.final_params = trainer.params();
  result.adam_steps = trainer.adam().step;
  result.gradient_evaluations = trainer.gradient_evaluations();
  result.checkpoints = trainer.checkpoints();
  result.final_sample_weights = trainer.last_sample_weights();
  result.last_difficulties = trainer.last_difficulties();
  result.weight_history = trainer.weight_history();
  result.difficulty_history = trainer.difficulty_history();
  return result;
}

namespace {

// Shortest round-trip form, so values read back from the CSV are exact.
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_epoch_csv(const std::filesystem::path& path, const std::vector<EpochLog>& logs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,phase,active,mean_sample_weight,mean_pixel_weight,train_loss,test_mae,test_iou,test_dice,"
         "test_fbeta,gradient_evaluations,checkpoint_epoch\n";
  for (const auto& l : logs) {
    out << l.epoch << ',' << to_string(l.phase) << ',' << l.active_count << ',' << fmt_double(l.mean_sample_weight)
        << ',' << fmt_double(l.mean_pixel_weight) << ',' << fmt_double(l.train_loss) << ',';
    if (l.test)
      out << fmt_double(l.test->mae) << ',' << fmt_double(l.test->iou) << ',' << fmt_double(l.test->dice) << ','
          << fmt_double(l.test->f_beta);
    else
      out << ",,,";
    out << ',' << l.gradient_evaluations << ',' << l.checkpoint_epoch << '\n';
  }
}

void write_weight_csv(const std::filesystem::path& path, const std::vector<WeightSnapshot>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,sample_id,mu,var,mu_norm,var_norm,w\n";
  for (const auto& snap : history)
    for (const auto& [id, s] : snap.weights)
      out << snap.epoch << ',' << id << ',' << fmt_double(s.mu) << ',' << fmt_double(s.var) << ','
          << fmt_double(s.mu_norm) << ',' << fmt_double(s.var_norm) << ',' << fmt_double(s.w) << '\n';
}

}  // namespace curriseg
