#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "survloco/dataset.hpp"
#include "survloco/hazard.hpp"

namespace survloco {

struct ForestParams {
  int n_trees = 500;
  int mtry = 0;      // 0 selects ceil(sqrt(M))
  int min_leaf = 5;
  int max_depth = 0; // 0 means unlimited
  std::uint64_t seed = 1;
  int workers = 1;   // not part of the model; results do not depend on it

  nlohmann::json to_json() const;
  static ForestParams from_json(const nlohmann::json& j);
  // Keys absent from j keep their values from base.
  static ForestParams from_json(const nlohmann::json& j, const ForestParams& base);
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;     // x[feature] <= threshold
  int right = -1;
  int leaf = -1;     // index into SurvivalTree::leaves() when feature == -1
};

// Per-interval event and at-risk totals of the training rows routed to a leaf
// (bootstrap multiplicity included) and the hazard events / at_risk.
struct Leaf {
  std::vector<double> events;
  std::vector<double> at_risk;
  std::vector<double> hazard;
  std::size_t rows = 0;
};

class SurvivalTree {
public:
  SurvivalTree() = default;
  SurvivalTree(std::vector<TreeNode> nodes, std::vector<Leaf> leaves)
      : nodes_(std::move(nodes)), leaves_(std::move(leaves)) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const std::vector<Leaf>& leaves() const { return leaves_; }

  // `value(j)` returns feature j of the row being routed.
  template <typename Getter>
    requires std::invocable<Getter&, std::size_t>
  const Leaf& route(Getter&& value) const {
    const TreeNode* node = &nodes_.front();
    while (node->feature >= 0)
      node = &nodes_[std::size_t(value(std::size_t(node->feature)) <= node->threshold ? node->left : node->right)];
    return leaves_[std::size_t(node->leaf)];
  }
  const Leaf& route(std::span<const double> x) const {
    return route([x](std::size_t j) { return x[j]; });
  }

  bool uses_feature(std::size_t j) const;

  nlohmann::json to_json() const;
  static SurvivalTree from_json(const nlohmann::json& j);

private:
  std::vector<TreeNode> nodes_;
  std::vector<Leaf> leaves_;
};

class Forest {
public:
  Forest() = default;
  Forest(std::vector<SurvivalTree> trees, std::vector<std::vector<std::uint16_t>> inbag, TimeGrid grid,
         ForestParams params, std::size_t n_features)
      : trees_(std::move(trees)),
        inbag_(std::move(inbag)),
        grid_(std::move(grid)),
        params_(params),
        n_features_(n_features) {}

  const std::vector<SurvivalTree>& trees() const { return trees_; }
  // Bootstrap multiplicity of every training row, per tree. 0 means out-of-bag.
  const std::vector<std::vector<std::uint16_t>>& inbag() const { return inbag_; }
  const TimeGrid& grid() const { return grid_; }
  const ForestParams& params() const { return params_; }
  std::size_t n_features() const { return n_features_; }

  // Tree-averaged leaf hazards (unclipped).
  HazardCurve predict_hazard(std::span<const double> x) const;
  void predict_hazard(std::span<const double> x, std::span<double> out) const;

  // Ensemble mortality: sum over intervals of the cumulative clipped hazard.
  double predict_risk(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static Forest from_json(const nlohmann::json& j);

private:
  void check_arity(std::size_t n) const;

  std::vector<SurvivalTree> trees_;
  std::vector<std::vector<std::uint16_t>> inbag_;
  TimeGrid grid_;
  ForestParams params_;
  std::size_t n_features_ = 0;
};

// Mortality-style risk of a hazard curve: sum_s sum_{u<=s} clip(h[u]).
double mortality(std::span<const double> h);

namespace forest {

// Grows params.n_trees log-rank trees on bootstrap samples of ds. Per-tree
// random streams come from (seed, tree index), so the result is independent of
// the worker count.
Forest fit(const SurvivalDataset& ds, const TimeGrid& grid, const ForestParams& params);

// Out-of-bag permutation importance: per tree, the increase in mean OOB loss
// after shuffling feature j among that tree's OOB rows, averaged over trees.
std::vector<double> rf_importance(const Forest& forest, const SurvivalDataset& ds, std::uint64_t seed);

// The shuffle used by rf_importance for (tree, feature): a permutation of
// positions 0..n_oob-1.
std::vector<std::size_t> oob_permutation(std::uint64_t seed, std::size_t tree, std::size_t feature,
                                         std::size_t n_oob);

}  // namespace forest
}  // namespace survloco
