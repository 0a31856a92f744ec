#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "survloco/dataset.hpp"

namespace survloco {

// A zero-coefficient copy of another column: x = r * source + sqrt(1 - r^2) * noise.
struct Shadow {
  std::size_t column = 0;
  std::size_t source = 0;
  double correlation = 0.9;
};

// Columns are laid out conventional first (conv_1..), then DBM (dbm_1..).
// DBM columns form equicorrelated Gaussian blocks; conventional columns and
// any column listed in `independent` are standard normal on their own.
struct SynthConfig {
  std::size_t N = 350;
  std::size_t n_dbm = 56;
  std::size_t n_conventional = 0;
  std::size_t block_size = 4;
  double rho = 0.7;

  std::vector<std::size_t> informative;
  std::vector<double> coefficients;
  std::vector<std::size_t> independent;
  std::vector<Shadow> shadows;

  // Exponential event times with rate base * exp(x . beta); follow-up ends at
  // `horizon`, with exponential dropout at `dropout_rate` before that. The
  // baseline rate is solved so the expected censored fraction equals `censoring`.
  double censoring = 0.77;
  double horizon = 96.0;
  double dropout_rate = 0.001;
  std::uint64_t seed = 1;

  std::size_t columns() const { return n_conventional + n_dbm; }
  std::vector<std::string> names() const;
  void validate() const;

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct GroundTruth {
  std::vector<std::string> informative;
  std::vector<double> coefficients;
  std::vector<std::string> shadows;
  std::vector<std::string> shadow_sources;
  double baseline_rate = 0.0;
  double expected_censoring = 0.0;
  double realized_censoring = 0.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct SynthResult {
  SurvivalDataset data;
  GroundTruth truth;
};

namespace synth {

SynthResult generate(const SynthConfig& config);

// 350 rows, 9 conventional columns (conv_1 dominant), 56 DBM columns with six
// planted features of descending strength (dbm_1, dbm_5, ..., dbm_21) and two
// shadows of the strongest ones; about 77% censored.
SynthConfig paper_shaped_config(std::uint64_t seed);
SynthResult paper_shaped(std::uint64_t seed);

// Baseline rate giving mean censoring probability `censoring` over the linear
// predictors `eta`. Throws ValidationError when the target is unreachable.
double solve_baseline_rate(const std::vector<double>& eta, double censoring, double horizon, double dropout_rate);

// Probability that an event is observed before dropout and the horizon.
double event_probability(double rate, double horizon, double dropout_rate);

}  // namespace synth
}  // namespace survloco
