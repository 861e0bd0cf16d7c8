#include "curriseg/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace curriseg {

DifficultyBuffer::DifficultyBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw DomainError("DifficultyBuffer: capacity must be positive");
}

void DifficultyBuffer::push(double difficulty) {
  if (!(difficulty >= 0.0 && difficulty <= 1.0)) throw DomainError("DifficultyBuffer: score outside [0, 1]");
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(difficulty);
}

TemporalStats temporal_stats(const DifficultyBuffer& buffer) {
  if (buffer.empty()) throw DomainError("temporal_stats: empty buffer");
  const auto& e = buffer.entries();
  // A constant history has exactly zero variance; summation round-off must not break that.
  if (std::all_of(e.begin(), e.end(), [&](double d) { return d == e.front(); })) return {e.front(), 0.0};
  const double n = static_cast<double>(e.size());
  double mu = 0.0;
  for (double d : e) mu += d;
  mu /= n;
  double var = 0.0;
  for (double d : e) var += (d - mu) * (d - mu);
  return {mu, var / n};
}

SigmaVariant parse_sigma_variant(std::string_view name) {
  if (name == "gaussian") return SigmaVariant::gaussian;
  if (name == "triangular") return SigmaVariant::triangular;
  if (name == "quadratic") return SigmaVariant::quadratic;
  throw DomainError("unknown sigma variant '" + std::string(name) + "'");
}

std::string_view to_string(SigmaVariant v) {
  switch (v) {
    case SigmaVariant::gaussian: return "gaussian";
    case SigmaVariant::triangular: return "triangular";
    case SigmaVariant::quadratic: return "quadratic";
  }
  return "?";
}

SampleWeightStats weight_from_normalized(double mu_norm, double var_norm, const SampleWeightConfig& config) {
  SampleWeightStats s;
  s.mu_norm = mu_norm;
  s.var_norm = var_norm;
  const double dev = var_norm - config.sigma_star;
  s.w_mu = config.drop_mu ? 1.0 : 1.0 - mu_norm;
  if (config.drop_sigma) {
    s.w_sigma = 1.0;
  } else {
    switch (config.sigma_variant) {
      case SigmaVariant::gaussian:
        s.w_sigma = std::exp(-(dev * dev) / (2.0 * config.gamma * config.gamma));
        break;
      case SigmaVariant::triangular:
        s.w_sigma = std::max(0.0, 1.0 - std::abs(dev) / config.gamma);
        break;
      case SigmaVariant::quadratic:
        // Negative values are clamped; a negative multiplicative weight is meaningless.
        s.w_sigma = std::max(0.0, 1.0 - (dev / config.gamma) * (dev / config.gamma));
        break;
    }
  }
  s.w_out = config.drop_out ? 1.0 : 1.0 - mu_norm * (1.0 - var_norm);
  s.w = config.w_min_s + (1.0 - config.w_min_s) * s.w_mu * s.w_sigma * s.w_out;
  return s;
}

std::map<int, SampleWeightStats> sample_weights(const std::map<int, TemporalStats>& cohort,
                                                const SampleWeightConfig& config) {
  if (cohort.empty()) throw DomainError("sample_weights: empty cohort");
  std::vector<double> mus;
  std::vector<double> vars;
  for (const auto& [id, st] : cohort) {
    mus.push_back(st.mu);
    vars.push_back(st.var);
  }
  const auto mu_norm = minmax_normalize(mus);
  const auto var_norm = minmax_normalize(vars);
  std::map<int, SampleWeightStats> out;
  std::size_t k = 0;
  for (const auto& [id, st] : cohort) {
    auto s = weight_from_normalized(mu_norm ? (*mu_norm)[k] : 0.0, var_norm ? (*var_norm)[k] : config.sigma_star,
                                    config);
    s.mu = st.mu;
    s.var = st.var;
    out.emplace(id, s);
    ++k;
  }
  return out;
}

double pixel_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("pixel_entropy: probability outside [0, 1]");
  auto term = [](double q) { return q > 0.0 ? -q * std::log2(q) : 0.0; };
  return term(p) + term(1.0 - p);
}

BetaVariant parse_beta_variant(std::string_view name) {
  if (name == "linear") return BetaVariant::linear;
  if (name == "exponential") return BetaVariant::exponential;
  throw DomainError("unknown beta variant '" + std::string(name) + "'");
}

std::string_view to_string(BetaVariant v) { return v == BetaVariant::linear ? "linear" : "exponential"; }

double beta_coefficient(int t, const PixelWeightConfig& config) {
  if (config.t_c <= 0) throw DomainError("beta_coefficient: T_c must be positive");
  if (t < 0 || t > config.t_c) throw DomainError("beta_coefficient: t outside [0, T_c]");
  const double ratio = static_cast<double>(t) / static_cast<double>(config.t_c);
  return config.beta_variant == BetaVariant::linear ? 1.0 - ratio : std::exp(-ratio);
}

Grid2D pixel_weight_matrix(const Grid2D& probabilities, int t, const PixelWeightConfig& config) {
  if (!(config.w_min > 0.0 && config.w_min < 1.0)) throw DomainError("pixel_weight_matrix: W_min must lie in (0, 1)");
  const double beta = beta_coefficient(t, config);
  Grid2D out(probabilities.height(), probabilities.width());
  for (std::size_t i = 0; i < probabilities.size(); ++i)
    out[i] = config.w_min + (1.0 - config.w_min) * (1.0 - beta * pixel_entropy(probabilities[i]));
  return out;
}

}  // namespace curriseg
