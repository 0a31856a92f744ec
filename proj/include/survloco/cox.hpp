#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "survloco/dataset.hpp"
#include "survloco/hazard.hpp"

namespace survloco {

enum class Penalty { ridge, lasso };

const char* to_string(Penalty p);
Penalty penalty_from_string(const std::string& s);

struct CoxParams {
  Penalty penalty = Penalty::ridge;
  double lambda = 0.1;
  int max_iter = 1000;
  double tol = 1e-7;

  nlohmann::json to_json() const;
  static CoxParams from_json(const nlohmann::json& j);
};

// Penalized Cox proportional hazards model.
//
// Fitting maximizes, on internally standardized features z = (x - mean) / scale,
//
//   f(b) = (1/n) * logPL(b) - lambda * P(b),   P = |b|^2 / 2 (ridge) or |b|_1 (lasso)
//
// where logPL is the Breslow partial log-likelihood. Coefficients are reported
// on the original feature scale. The baseline cumulative hazard is the Breslow
// estimator evaluated with the centered linear predictor.
class CoxModel {
public:
  CoxModel() = default;

  const std::vector<double>& beta() const { return beta_; }
  const CoxParams& params() const { return params_; }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& scales() const { return scales_; }
  const std::vector<double>& baseline_times() const { return baseline_times_; }
  const std::vector<double>& baseline_increments() const { return baseline_increments_; }
  // Penalized objective after every outer iteration, starting at b = 0.
  const std::vector<double>& objective_trace() const { return objective_trace_; }
  int iterations() const { return iterations_; }

  // x' beta on the original scale (no centering).
  double risk(std::span<const double> x) const;

  // h[s] = 1 - exp(-exp(eta) * dH0(s)), dH0(s) = Breslow increments falling in
  // interval s, eta the centered linear predictor.
  HazardCurve predict_hazard(std::span<const double> x, const TimeGrid& grid) const;
  void predict_hazard(std::span<const double> x, const TimeGrid& grid, std::span<double> out) const;

  nlohmann::json to_json() const;
  static CoxModel from_json(const nlohmann::json& j);

  // Builds a model from explicit parts; the baseline is recomputed from `train`.
  static CoxModel from_coefficients(std::vector<double> beta, const SurvivalDataset& train, CoxParams params = {});

private:
  friend CoxModel fit_cox(const SurvivalDataset&, const CoxParams&);
  void check_arity(std::size_t n) const;
  void compute_baseline(const SurvivalDataset& train);

  std::vector<double> beta_;
  CoxParams params_;
  std::vector<double> means_;
  std::vector<double> scales_;
  std::vector<double> baseline_times_;
  std::vector<double> baseline_increments_;
  std::vector<double> objective_trace_;
  int iterations_ = 0;
};

CoxModel fit_cox(const SurvivalDataset& ds, const CoxParams& params);

namespace cox {

inline CoxModel fit(const SurvivalDataset& ds, const CoxParams& params) { return fit_cox(ds, params); }

// Smallest lasso lambda for which every coefficient is zero:
// max_j |dlogPL/db_j at 0| / n on the standardized scale.
double lambda_max(const SurvivalDataset& ds);

// (1/n) logPL(b) - lambda * P(b) for standardized coefficients b.
double penalized_objective(const SurvivalDataset& ds, std::span<const double> standardized_beta,
                           const CoxParams& params);

struct LambdaSearch {
  int grid_size = 20;
  double decades = 4.0;
  int folds = 5;
  std::uint64_t seed = 1;
};

// Log-spaced lambda path: lasso from lambda_max down `decades`; ridge from
// 1000 * lambda_max down the same number of decades.
std::vector<double> lambda_path(const SurvivalDataset& ds, Penalty penalty, const LambdaSearch& search = {});

// Inner stratified k-fold CV over lambda_path; returns the lambda with the
// highest mean held-out C-index (ties go to the larger lambda).
double select_lambda(const SurvivalDataset& ds, const CoxParams& params, const LambdaSearch& search = {});

}  // namespace cox
}  // namespace survloco
