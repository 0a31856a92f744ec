#include "survloco/backend.hpp"

#include "survloco/error.hpp"

namespace survloco {

namespace {

class ForestModel final : public SurvivalModel {
public:
  explicit ForestModel(Forest f) : forest_(std::move(f)) {}
  void predict_hazard(std::span<const double> x, std::span<double> out) const override {
    forest_.predict_hazard(x, out);
  }
  double risk(std::span<const double> x) const override { return forest_.predict_risk(x); }

private:
  Forest forest_;
};

class CoxSurvivalModel final : public SurvivalModel {
public:
  CoxSurvivalModel(CoxModel m, TimeGrid grid) : model_(std::move(m)), grid_(std::move(grid)) {}
  void predict_hazard(std::span<const double> x, std::span<double> out) const override {
    model_.predict_hazard(x, grid_, out);
  }
  double risk(std::span<const double> x) const override { return model_.risk(x); }

private:
  CoxModel model_;
  TimeGrid grid_;
};

}  // namespace

std::unique_ptr<SurvivalModel> ForestBackend::fit(const SurvivalDataset& ds, const TimeGrid& grid,
                                                  std::uint64_t seed) const {
  ForestParams p = params_;
  p.seed = seed;
  return std::make_unique<ForestModel>(forest::fit(ds, grid, p));
}

nlohmann::json ForestBackend::to_json() const {
  auto j = params_.to_json();
  j.erase("seed");
  j["kind"] = id();
  return j;
}

std::unique_ptr<SurvivalModel> CoxBackend::fit(const SurvivalDataset& ds, const TimeGrid& grid,
                                               std::uint64_t seed) const {
  CoxParams p = params_;
  if (tune_lambda_) {
    cox::LambdaSearch s = search_;
    s.seed = seed;
    p.lambda = cox::select_lambda(ds, p, s);
  }
  return std::make_unique<CoxSurvivalModel>(fit_cox(ds, p), grid);
}

nlohmann::json CoxBackend::to_json() const {
  auto j = params_.to_json();
  j["kind"] = id();
  j["tune_lambda"] = tune_lambda_;
  if (tune_lambda_)
    j["lambda_search"] = {{"grid_size", search_.grid_size}, {"decades", search_.decades}, {"folds", search_.folds}};
  return j;
}

ForestParams patch_forest_defaults() {
  ForestParams p;
  p.n_trees = 50;
  p.min_leaf = 3;
  return p;
}

std::unique_ptr<Backend> make_backend(const nlohmann::json& spec, int workers, const ForestParams& forest_base) {
  try {
    const std::string kind = spec.value("kind", std::string("forest"));
    if (kind == "forest") {
      ForestParams p = ForestParams::from_json(spec, forest_base);
      p.workers = workers;
      return std::make_unique<ForestBackend>(p);
    }
    if (kind == "cox_ridge" || kind == "cox_lasso") {
      CoxParams p = CoxParams::from_json(spec);
      p.penalty = kind == "cox_lasso" ? Penalty::lasso : Penalty::ridge;
      cox::LambdaSearch s;
      if (spec.contains("lambda_search")) {
        const auto& ls = spec.at("lambda_search");
        s.grid_size = ls.value("grid_size", s.grid_size);
        s.decades = ls.value("decades", s.decades);
        s.folds = ls.value("folds", s.folds);
      }
      return std::make_unique<CoxBackend>(p, spec.value("tune_lambda", false), s);
    }
    throw ValidationError("unknown backend kind '" + kind + "' (expected forest, cox_ridge or cox_lasso)");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid backend spec: ") + e.what());
  }
}

std::unique_ptr<Backend> make_patch_backend(const nlohmann::json& spec, int workers) {
  return make_backend(spec, workers, patch_forest_defaults());
}

}  // namespace survloco
