#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include <json.hpp>

#include "survloco/cox.hpp"
#include "survloco/dataset.hpp"
#include "survloco/forest.hpp"

namespace survloco {

// A fitted survival model as seen by LOCO-MP and the CV harness.
class SurvivalModel {
public:
  virtual ~SurvivalModel() = default;
  // Writes grid.intervals() conditional hazards for feature row x.
  virtual void predict_hazard(std::span<const double> x, std::span<double> out) const = 0;
  // Higher means earlier expected event.
  virtual double risk(std::span<const double> x) const = 0;
};

// Model family plus hyperparameters; fits on arbitrary column subsets.
class Backend {
public:
  virtual ~Backend() = default;
  virtual std::unique_ptr<SurvivalModel> fit(const SurvivalDataset& ds, const TimeGrid& grid,
                                             std::uint64_t seed) const = 0;
  virtual std::string id() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

class ForestBackend final : public Backend {
public:
  explicit ForestBackend(ForestParams params) : params_(params) {}
  std::unique_ptr<SurvivalModel> fit(const SurvivalDataset& ds, const TimeGrid& grid,
                                     std::uint64_t seed) const override;
  std::string id() const override { return "forest"; }
  nlohmann::json to_json() const override;
  const ForestParams& params() const { return params_; }

private:
  ForestParams params_;
};

// Penalized Cox. With tune_lambda set, lambda is chosen by inner CV on the
// training data at every fit; otherwise params.lambda is used as given.
class CoxBackend final : public Backend {
public:
  explicit CoxBackend(CoxParams params, bool tune_lambda = false, cox::LambdaSearch search = {})
      : params_(params), tune_lambda_(tune_lambda), search_(search) {}
  std::unique_ptr<SurvivalModel> fit(const SurvivalDataset& ds, const TimeGrid& grid,
                                     std::uint64_t seed) const override;
  std::string id() const override { return params_.penalty == Penalty::lasso ? "cox_lasso" : "cox_ridge"; }
  nlohmann::json to_json() const override;
  const CoxParams& params() const { return params_; }

private:
  CoxParams params_;
  bool tune_lambda_;
  cox::LambdaSearch search_;
};

// Small forest used inside minipatches by default: 50 trees, min_leaf 3.
ForestParams patch_forest_defaults();

// Builds a backend from {"kind": "forest"|"cox_ridge"|"cox_lasso", ...params}.
// Forest keys missing from spec come from forest_base.
std::unique_ptr<Backend> make_backend(const nlohmann::json& spec, int workers = 1,
                                      const ForestParams& forest_base = {});

// make_backend with patch_forest_defaults() as the forest base.
std::unique_ptr<Backend> make_patch_backend(const nlohmann::json& spec, int workers = 1);

}  // namespace survloco
