#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "survloco/error.hpp"
#include "survloco/forest.hpp"
#include "survloco/rng.hpp"

using namespace survloco;

namespace {

SurvivalDataset separable_toy(std::size_t n) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  std::vector<double> t(n);
  std::vector<std::uint8_t> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool neg = i % 2 == 0;
    x(Eigen::Index(i), 0) = neg ? -1.0 - double(i) : 1.0 + double(i);
    t[i] = neg ? 0.5 : 10.0;
    e[i] = neg ? 1 : 0;
  }
  return SurvivalDataset(x, {"x"}, t, e);
}

ForestParams small(int trees, std::uint64_t seed = 1) {
  ForestParams p;
  p.n_trees = trees;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("all-censored data cannot be fit") {
  auto ds = oracle::toy_dataset(10, 2, 1);
  const SurvivalDataset censored(ds.features(), ds.names(), ds.times(), std::vector<std::uint8_t>(10, 0));
  CHECK_THROWS_AS(forest::fit(censored, make_grid(censored, 4), small(3)), ValidationError);
}

TEST_CASE("separable toy splits at the root on x") {
  const auto ds = separable_toy(40);
  const auto grid = make_grid(ds, 4);
  ForestParams p = small(1);
  p.mtry = 1;
  const auto f = forest::fit(ds, grid, p);
  const auto& root = f.trees()[0].nodes().front();
  CHECK(root.feature == 0);
  CHECK(root.threshold > -2.0);
  CHECK(root.threshold < 2.0);
  const std::vector<double> neg{-3.0};
  CHECK(f.trees()[0].route(neg).hazard[0] == 1.0);
  const std::vector<double> pos{5.0};
  CHECK(f.trees()[0].route(pos).hazard[0] == 0.0);
}

TEST_CASE("leaf counts match a brute-force recount of routed training rows") {
  const auto ds = oracle::toy_dataset(50, 5, 7);
  const auto grid = make_grid(ds, 8);
  const auto f = forest::fit(ds, grid, small(15, 9));
  const std::size_t d = 8;
  for (std::size_t t = 0; t < f.trees().size(); ++t) {
    const auto& tree = f.trees()[t];
    std::map<const Leaf*, std::pair<std::vector<double>, std::vector<double>>> recount;
    std::map<const Leaf*, std::size_t> rows;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      const double mult = f.inbag()[t][i];
      if (mult == 0) continue;
      const auto row = ds.row(i);
      const Leaf* leaf = &tree.route(row);
      auto& [ev, ar] = recount[leaf];
      ev.resize(d, 0.0);
      ar.resize(d, 0.0);
      const int q = grid.interval_of(ds.times()[i]);
      if (ds.events()[i]) ev[std::size_t(q)] += mult;
      for (int s = 0; s <= q; ++s) ar[std::size_t(s)] += mult;
      rows[leaf] += std::size_t(mult);
    }
    CHECK(recount.size() == tree.leaves().size());
    for (const auto& leaf : tree.leaves()) {
      CHECK(leaf.events == recount[&leaf].first);
      CHECK(leaf.at_risk == recount[&leaf].second);
      CHECK(leaf.rows == rows[&leaf]);
      CHECK(leaf.rows >= 5);
      for (std::size_t s = 0; s < d; ++s)
        CHECK(leaf.hazard[s] == (leaf.at_risk[s] > 0 ? leaf.events[s] / leaf.at_risk[s] : 0.0));
    }
  }
}

TEST_CASE("prediction averages leaf curves") {
  const auto ds = oracle::toy_dataset(60, 4, 2);
  const auto grid = make_grid(ds, 6);

  const auto one = forest::fit(ds, grid, small(1));
  const auto x0 = ds.row(3);
  const auto curve = one.predict_hazard(x0);
  const auto& leaf = one.trees()[0].route(x0).hazard;
  CHECK(std::vector<double>(curve.values().begin(), curve.values().end()) == leaf);

  const Forest twin({one.trees()[0], one.trees()[0]}, {one.inbag()[0], one.inbag()[0]}, grid, one.params(), 4);
  const auto twin_curve = twin.predict_hazard(x0);
  for (std::size_t s = 0; s < 6; ++s) CHECK(twin_curve[s] == doctest::Approx(leaf[s]).epsilon(1e-15));

  const auto ten = forest::fit(ds, grid, small(10, 4));
  for (std::size_t i = 0; i < 10; ++i) {
    const auto x = ds.row(i);
    std::vector<double> loop(6, 0.0);
    for (const auto& tree : ten.trees())
      for (std::size_t s = 0; s < 6; ++s) loop[s] += tree.route(x).hazard[s];
    const auto got = ten.predict_hazard(x);
    for (std::size_t s = 0; s < 6; ++s) {
      CHECK(std::abs(got[s] - loop[s] / 10.0) < 1e-15);
      CHECK(got[s] >= 0.0);
      CHECK(got[s] <= 1.0);
    }
  }
  CHECK_THROWS_AS(ten.predict_hazard(std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("mortality risk") {
  const std::vector<double> zero(5, 0.0), ones(5, 1.0);
  CHECK(mortality(zero) == doctest::Approx(15 * kHazardClip).epsilon(1e-12));
  CHECK(mortality(ones) > mortality(zero));

  const auto ds = oracle::toy_dataset(60, 3, 5);
  const auto grid = make_grid(ds, 6);
  const auto f = forest::fit(ds, grid, small(12, 3));
  std::vector<double> got, want;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto h = f.predict_hazard(ds.row(i));
    double cum = 0.0, total = 0.0;
    for (std::size_t s = 0; s < 6; ++s) {
      cum += std::min(std::max(h[s], kHazardClip), 1 - kHazardClip);
      total += cum;
    }
    got.push_back(f.predict_risk(ds.row(i)));
    want.push_back(total);
  }
  for (std::size_t a = 0; a < 20; ++a)
    for (std::size_t b = 0; b < 20; ++b) CHECK((got[a] < got[b]) == (want[a] < want[b]));
}

TEST_CASE("rf_importance: unused feature scores zero, separable feature scores positive") {
  auto ds = separable_toy(40);
  Rng rng = make_rng(4);
  std::vector<double> noise(40);
  for (auto& v : noise) v = standard_normal(rng);
  Eigen::MatrixXd x(40, 2);
  x.col(0) = ds.features().col(0);
  for (int i = 0; i < 40; ++i) x(i, 1) = noise[std::size_t(i)];
  const SurvivalDataset two(x, {"x", "noise"}, ds.times(), ds.events());
  ForestParams p = small(10);
  p.mtry = 1;
  p.max_depth = 1;
  const auto f = forest::fit(two, make_grid(two, 4), p);
  const auto imp = forest::rf_importance(f, two, 17);
  bool noise_used = false;
  for (const auto& t : f.trees()) noise_used |= t.uses_feature(1);
  if (!noise_used) CHECK(std::abs(imp[1]) < 1e-9);
  CHECK(imp[0] > 0.0);
}

TEST_CASE("rf_importance matches a straight-line reimplementation") {
  const auto ds = oracle::toy_dataset(50, 5, 12);
  const auto grid = make_grid(ds, 8);
  const auto f = forest::fit(ds, grid, small(20, 6));
  const std::uint64_t seed = 99;
  const auto got = forest::rf_importance(f, ds, seed);

  std::vector<double> want(5, 0.0);
  std::size_t used = 0;
  for (std::size_t t = 0; t < 20; ++t) {
    std::vector<std::size_t> oob;
    for (std::size_t i = 0; i < 50; ++i)
      if (f.inbag()[t][i] == 0) oob.push_back(i);
    if (oob.empty()) continue;
    ++used;
    const auto loss_of = [&](const Eigen::MatrixXd& x) {
      double s = 0.0;
      for (auto i : oob) {
        std::vector<double> row(5);
        for (int j = 0; j < 5; ++j) row[std::size_t(j)] = x(Eigen::Index(i), j);
        const auto& h = f.trees()[t].route(row).hazard;
        s += nll(h, {grid.interval_of(ds.times()[i]), ds.events()[i] == 1});
      }
      return s / double(oob.size());
    };
    const double base = loss_of(ds.features());
    for (std::size_t j = 0; j < 5; ++j) {
      Eigen::MatrixXd x = ds.features();
      const auto perm = forest::oob_permutation(seed, t, j, oob.size());
      for (std::size_t r = 0; r < oob.size(); ++r)
        x(Eigen::Index(oob[r]), Eigen::Index(j)) = ds.value(oob[perm[r]], j);
      want[j] += loss_of(x) - base;
    }
  }
  for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(got[j] - want[j] / double(used)) < 1e-12);
}

TEST_CASE("property: forests are bit-identical across worker counts") {
  const auto ds = oracle::toy_dataset(80, 6, 21);
  const auto grid = make_grid(ds, 8);
  ForestParams p = small(24, 5);
  const auto a = forest::fit(ds, grid, p);
  p.workers = 4;
  const auto b = forest::fit(ds, grid, p);
  CHECK(a.to_json() == b.to_json());
  CHECK(Forest::from_json(a.to_json()).to_json() == a.to_json());
}

TEST_CASE("property: out-of-bag fraction is near exp(-1)") {
  const auto ds = oracle::toy_dataset(150, 3, 2);
  const auto f = forest::fit(ds, make_grid(ds, 8), small(60));
  double oob = 0.0;
  for (const auto& bag : f.inbag())
    for (auto c : bag) oob += c == 0;
  oob /= double(60 * 150);
  CHECK(oob > 0.25);
  CHECK(oob < 0.45);
}

TEST_CASE("property: rf_importance ranks the only signal feature first") {
  int first = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng rng = make_rng(seed, {0xabc});
    const std::size_t N = 300, M = 5;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(M));
    std::vector<double> t(N);
    std::vector<std::uint8_t> e(N);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < M; ++j) x(Eigen::Index(i), Eigen::Index(j)) = standard_normal(rng);
      const double ev = exponential(rng, 0.1 * std::exp(1.0 * x(Eigen::Index(i), 0)));
      const double c = exponential(rng, 0.05);
      e[i] = ev <= c;
      t[i] = std::min(ev, c);
    }
    const SurvivalDataset ds(x, {"x1", "x2", "x3", "x4", "x5"}, t, e);
    ForestParams p = small(200, seed);
    p.workers = 1;
    const auto f = forest::fit(ds, make_grid(ds), p);
    const auto imp = forest::rf_importance(f, ds, seed);
    first += std::max_element(imp.begin(), imp.end()) == imp.begin();
  }
  CHECK(first >= 95);
}
