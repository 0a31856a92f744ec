#include "survloco/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "survloco/error.hpp"
#include "survloco/parallel.hpp"
#include "survloco/rng.hpp"

namespace survloco {

nlohmann::json ForestParams::to_json() const {
  return {{"n_trees", n_trees}, {"mtry", mtry}, {"min_leaf", min_leaf}, {"max_depth", max_depth}, {"seed", seed}};
}

ForestParams ForestParams::from_json(const nlohmann::json& j) { return from_json(j, ForestParams{}); }

ForestParams ForestParams::from_json(const nlohmann::json& j, const ForestParams& base) {
  ForestParams p = base;
  p.n_trees = j.value("n_trees", p.n_trees);
  p.mtry = j.value("mtry", p.mtry);
  p.min_leaf = j.value("min_leaf", p.min_leaf);
  p.max_depth = j.value("max_depth", p.max_depth);
  p.seed = j.value("seed", p.seed);
  return p;
}

bool SurvivalTree::uses_feature(std::size_t j) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [j](const TreeNode& n) { return n.feature == int(j); });
}

nlohmann::json SurvivalTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.leaf});
  nlohmann::json leaves = nlohmann::json::array();
  for (const auto& l : leaves_) leaves.push_back({{"events", l.events}, {"at_risk", l.at_risk}, {"rows", l.rows}});
  return {{"nodes", std::move(nodes)}, {"leaves", std::move(leaves)}};
}

namespace {

std::vector<double> leaf_hazard(const std::vector<double>& events, const std::vector<double>& at_risk) {
  std::vector<double> h(events.size(), 0.0);
  for (std::size_t s = 0; s < h.size(); ++s)
    if (at_risk[s] > 0.0) h[s] = events[s] / at_risk[s];
  return h;
}

}  // namespace

SurvivalTree SurvivalTree::from_json(const nlohmann::json& j) {
  std::vector<TreeNode> nodes;
  for (const auto& n : j.at("nodes"))
    nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                     n.at(4).get<int>()});
  std::vector<Leaf> leaves;
  for (const auto& l : j.at("leaves")) {
    Leaf leaf;
    leaf.events = l.at("events").get<std::vector<double>>();
    leaf.at_risk = l.at("at_risk").get<std::vector<double>>();
    leaf.rows = l.at("rows").get<std::size_t>();
    leaf.hazard = leaf_hazard(leaf.events, leaf.at_risk);
    leaves.push_back(std::move(leaf));
  }
  return SurvivalTree(std::move(nodes), std::move(leaves));
}

// ---------------------------------------------------------------------------

double mortality(std::span<const double> h) {
  double cumulative = 0.0, total = 0.0;
  for (double v : h) {
    cumulative += clip_hazard(v);
    total += cumulative;
  }
  return total;
}

void Forest::check_arity(std::size_t n) const {
  if (n != n_features_)
    throw ValidationError("forest expects " + std::to_string(n_features_) + " features, got " + std::to_string(n));
}

void Forest::predict_hazard(std::span<const double> x, std::span<double> out) const {
  check_arity(x.size());
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& tree : trees_) {
    const auto& h = tree.route(x).hazard;
    for (std::size_t s = 0; s < out.size(); ++s) out[s] += h[s];
  }
  const double inv = 1.0 / static_cast<double>(trees_.size());
  for (auto& v : out) v *= inv;
}

HazardCurve Forest::predict_hazard(std::span<const double> x) const {
  HazardCurve c(std::size_t(grid_.intervals()));
  predict_hazard(x, c.values());
  return c;
}

double Forest::predict_risk(std::span<const double> x) const {
  std::vector<double> h(std::size_t(grid_.intervals()));
  predict_hazard(x, h);
  return mortality(h);
}

nlohmann::json Forest::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return {{"model", "random_survival_forest"},
          {"params", params_.to_json()},
          {"grid", grid_.to_json()},
          {"n_features", n_features_},
          {"inbag", inbag_},
          {"trees", std::move(trees)}};
}

Forest Forest::from_json(const nlohmann::json& j) {
  std::vector<SurvivalTree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(SurvivalTree::from_json(t));
  return Forest(std::move(trees), j.at("inbag").get<std::vector<std::vector<std::uint16_t>>>(),
                TimeGrid::from_json(j.at("grid")), ForestParams::from_json(j.at("params")),
                j.at("n_features").get<std::size_t>());
}

// ---------------------------------------------------------------------------

namespace {

struct TrainingView {
  const SurvivalDataset::Matrix& x;
  std::vector<int> interval;
  const std::vector<std::uint8_t>& events;
  int d;
};

struct Candidate {
  double stat = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

class TreeBuilder {
public:
  TreeBuilder(const TrainingView& data, const ForestParams& params, int mtry, Rng& rng)
      : data_(data), params_(params), mtry_(mtry), rng_(rng), d_(std::size_t(data.d)) {}

  SurvivalTree build(std::vector<std::size_t> samples) {
    grow(samples, 0);
    return SurvivalTree(std::move(nodes_), std::move(leaves_));
  }

private:
  int grow(std::vector<std::size_t>& samples, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    std::vector<double> deaths(d_, 0.0), exits(d_, 0.0), at_risk(d_, 0.0);
    double total_events = 0.0;
    for (auto i : samples) {
      const auto q = std::size_t(data_.interval[i]);
      exits[q] += 1.0;
      if (data_.events[i]) {
        deaths[q] += 1.0;
        total_events += 1.0;
      }
    }
    double running = 0.0;
    for (std::size_t s = d_; s-- > 0;) {
      running += exits[s];
      at_risk[s] = running;
    }

    const bool depth_cap = params_.max_depth > 0 && depth >= params_.max_depth;
    Candidate best;
    if (!depth_cap && total_events > 0.0 && samples.size() >= 2 * std::size_t(params_.min_leaf))
      best = best_split(samples, deaths, at_risk);

    if (best.feature < 0) {
      Leaf leaf;
      leaf.hazard = leaf_hazard(deaths, at_risk);
      leaf.events = std::move(deaths);
      leaf.at_risk = std::move(at_risk);
      leaf.rows = samples.size();
      nodes_[std::size_t(id)].leaf = static_cast<int>(leaves_.size());
      leaves_.push_back(std::move(leaf));
      return id;
    }

    std::vector<std::size_t> left, right;
    for (auto i : samples)
      (data_.x(Eigen::Index(i), best.feature) <= best.threshold ? left : right).push_back(i);
    samples.clear();
    samples.shrink_to_fit();

    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = nodes_[std::size_t(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  // Best log-rank split over mtry randomly drawn features. Candidates are
  // scanned in ascending (feature, threshold) order and only a strictly larger
  // statistic replaces the incumbent.
  Candidate best_split(const std::vector<std::size_t>& samples, const std::vector<double>& deaths,
                       const std::vector<double>& at_risk) {
    const std::size_t m_total = std::size_t(data_.x.cols());
    const auto features = sample_without_replacement(rng_, m_total, std::size_t(mtry_));
    const std::size_t n = samples.size();
    const std::size_t min_leaf = std::size_t(params_.min_leaf);

    Candidate best;
    order_.resize(n);
    left_deaths_.assign(d_, 0.0);
    left_risk_.assign(d_, 0.0);
    for (auto f : features) {
      const auto col = data_.x.col(Eigen::Index(f));
      for (std::size_t k = 0; k < n; ++k) order_[k] = {col(Eigen::Index(samples[k])), samples[k]};
      std::sort(order_.begin(), order_.end());
      if (order_.front().first == order_.back().first) continue;

      std::fill(left_deaths_.begin(), left_deaths_.end(), 0.0);
      std::fill(left_risk_.begin(), left_risk_.end(), 0.0);
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const auto row = order_[k].second;
        const auto q = std::size_t(data_.interval[row]);
        if (data_.events[row]) left_deaths_[q] += 1.0;
        for (std::size_t s = 0; s <= q; ++s) left_risk_[s] += 1.0;

        const std::size_t n_left = k + 1;
        if (n_left < min_leaf) continue;
        if (n - n_left < min_leaf) break;
        const double lo = order_[k].first, hi = order_[k + 1].first;
        if (lo == hi) continue;

        double u = 0.0, v = 0.0;
        for (std::size_t s = 0; s < d_; ++s) {
          const double y = at_risk[s];
          if (y <= 0.0) break;  // at-risk counts are non-increasing
          const double dth = deaths[s];
          if (dth == 0.0) continue;
          const double frac = left_risk_[s] / y;
          u += left_deaths_[s] - frac * dth;
          if (y > 1.0) v += frac * (1.0 - frac) * (y - dth) / (y - 1.0) * dth;
        }
        if (v <= 0.0) continue;
        const double stat = u * u / v;
        if (stat > best.stat) {
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          best = {stat, int(f), mid};
        }
      }
    }
    return best;
  }

  const TrainingView& data_;
  const ForestParams& params_;
  int mtry_;
  Rng& rng_;
  std::size_t d_;
  std::vector<TreeNode> nodes_;
  std::vector<Leaf> leaves_;
  std::vector<std::pair<double, std::size_t>> order_;
  std::vector<double> left_deaths_, left_risk_;
};

}  // namespace

namespace forest {

Forest fit(const SurvivalDataset& ds, const TimeGrid& grid, const ForestParams& params) {
  if (params.n_trees < 1) throw ValidationError("forest: n_trees must be >= 1");
  if (params.min_leaf < 1) throw ValidationError("forest: min_leaf must be >= 1");
  if (params.max_depth < 0) throw ValidationError("forest: max_depth must be >= 0");
  if (ds.cols() == 0) throw ValidationError("forest: dataset has no features");
  if (ds.event_count() == 0) throw ValidationError("forest: dataset has no events; log-rank split undefined");
  const int m_total = static_cast<int>(ds.cols());
  const int mtry = params.mtry > 0 ? params.mtry : static_cast<int>(std::ceil(std::sqrt(double(m_total))));
  if (mtry > m_total) throw ValidationError("forest: mtry exceeds feature count");
  // in-bag multiplicities are stored as uint16
  if (ds.rows() > 65535) throw ValidationError("forest: too many rows");

  TrainingView view{ds.features(), {}, ds.events(), grid.intervals()};
  view.interval.reserve(ds.rows());
  for (double t : ds.times()) view.interval.push_back(grid.interval_of(t));

  const std::size_t n = ds.rows();
  std::vector<SurvivalTree> trees(std::size_t(params.n_trees));
  std::vector<std::vector<std::uint16_t>> inbag(std::size_t(params.n_trees));
  parallel_for(trees.size(), params.workers, [&](std::size_t t) {
    Rng rng = make_rng(params.seed, {t});
    std::vector<std::uint16_t> counts(n, 0);
    for (std::size_t k = 0; k < n; ++k) ++counts[uniform_index(rng, n)];
    std::vector<std::size_t> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::uint16_t c = 0; c < counts[i]; ++c) samples.push_back(i);
    TreeBuilder builder(view, params, mtry, rng);
    trees[t] = builder.build(std::move(samples));
    inbag[t] = std::move(counts);
  });
  return Forest(std::move(trees), std::move(inbag), grid, params, ds.cols());
}

std::vector<std::size_t> oob_permutation(std::uint64_t seed, std::size_t tree, std::size_t feature,
                                         std::size_t n_oob) {
  Rng rng = make_rng(seed, {tree, feature});
  std::vector<std::size_t> perm(n_oob);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(rng, std::span<std::size_t>(perm));
  return perm;
}

std::vector<double> rf_importance(const Forest& forest, const SurvivalDataset& ds, std::uint64_t seed) {
  if (ds.cols() != forest.n_features()) throw ValidationError("rf_importance: feature count mismatch");
  const std::size_t m = ds.cols();
  const auto& x = ds.features();
  std::vector<ObservedOutcome> outcomes(ds.rows());
  for (std::size_t i = 0; i < ds.rows(); ++i)
    outcomes[i] = {forest.grid().interval_of(ds.times()[i]), ds.events()[i] == 1};

  std::vector<double> scores(m, 0.0);
  std::size_t used = 0;
  for (std::size_t t = 0; t < forest.trees().size(); ++t) {
    const auto& tree = forest.trees()[t];
    const auto& bag = forest.inbag()[t];
    if (bag.size() != ds.rows()) throw ValidationError("rf_importance: forest was not fit on this dataset");
    std::vector<std::size_t> oob;
    for (std::size_t i = 0; i < bag.size(); ++i)
      if (bag[i] == 0) oob.push_back(i);
    if (oob.empty()) continue;
    ++used;
    const double inv = 1.0 / static_cast<double>(oob.size());

    double base = 0.0;
    for (auto i : oob) {
      const auto& leaf = tree.route([&](std::size_t f) { return x(Eigen::Index(i), Eigen::Index(f)); });
      base += nll(leaf.hazard, outcomes[i]);
    }
    base *= inv;

    for (std::size_t j = 0; j < m; ++j) {
      if (!tree.uses_feature(j)) continue;
      const auto perm = oob_permutation(seed, t, j, oob.size());
      double permuted = 0.0;
      for (std::size_t r = 0; r < oob.size(); ++r) {
        const auto i = oob[r];
        const auto donor = oob[perm[r]];
        const auto& leaf = tree.route([&](std::size_t f) {
          return x(Eigen::Index(f == j ? donor : i), Eigen::Index(f));
        });
        permuted += nll(leaf.hazard, outcomes[i]);
      }
      scores[j] += permuted * inv - base;
    }
  }
  if (used == 0) throw ComputationError("rf_importance: no tree has out-of-bag rows");
  for (auto& s : scores) s /= static_cast<double>(used);
  return scores;
}

}  // namespace forest
}  // namespace survloco
