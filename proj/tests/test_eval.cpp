#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "survloco/error.hpp"
#include "survloco/eval.hpp"
#include "survloco/synth.hpp"

using namespace survloco;

namespace {

class FlatModel final : public SurvivalModel {
public:
  explicit FlatModel(int d) : d_(d) {}
  void predict_hazard(std::span<const double>, std::span<double> out) const override {
    for (int s = 0; s < d_; ++s) out[std::size_t(s)] = 0.1;
  }
  double risk(std::span<const double>) const override { return 1.0; }

private:
  int d_;
};

class FlatBackend final : public Backend {
public:
  std::unique_ptr<SurvivalModel> fit(const SurvivalDataset&, const TimeGrid& grid, std::uint64_t) const override {
    return std::make_unique<FlatModel>(grid.intervals());
  }
  std::string id() const override { return "flat"; }
  nlohmann::json to_json() const override { return {{"kind", "flat"}}; }
};

struct Instance {
  std::vector<double> risk, time;
  std::vector<std::uint8_t> event;
};

// Times on a coarse lattice so ties in time (and some in risk) occur.
Instance random_instance(std::size_t n, std::uint64_t seed, bool tie_risks) {
  Rng rng = make_rng(seed, {0xe7});
  Instance s;
  for (std::size_t i = 0; i < n; ++i) {
    s.time.push_back(double(1 + uniform_index(rng, 10)));
    s.event.push_back(uniform01(rng) < 0.6 ? 1 : 0);
    s.risk.push_back(tie_risks ? double(uniform_index(rng, 5)) : standard_normal(rng));
  }
  return s;
}

SurvivalDataset tagged_dataset() {
  SynthConfig c;
  c.N = 120;
  c.n_conventional = 3;
  c.n_dbm = 8;
  c.informative = {0, 3};
  c.coefficients = {1.0, 1.0};
  c.censoring = 0.5;
  c.seed = 3;
  return synth::generate(c).data;
}

}  // namespace

TEST_CASE("c_index examples") {
  const std::vector<double> r = {2, 1}, t = {1, 2};
  const std::vector<std::uint8_t> e = {1, 1};
  CHECK(eval::c_index(r, t, e) == 1.0);
  const std::vector<double> flat = {3, 3};
  CHECK(eval::c_index(flat, t, e) == 0.5);
  const std::vector<double> wrong = {1, 2};
  CHECK(eval::c_index(wrong, t, e) == 0.0);

  // Earlier time censored: not comparable.
  const std::vector<std::uint8_t> cens = {0, 1};
  CHECK_THROWS_AS(eval::c_index(r, t, cens), ValidationError);
  CHECK_FALSE(eval::try_c_index(r, t, cens).has_value());
  const std::vector<double> one = {1};
  CHECK_THROWS_AS(eval::c_index(one, one, std::vector<std::uint8_t>{1}), ValidationError);

  // A censored subject tied in time with an event counts as later.
  const std::vector<double> tt = {5, 5};
  const std::vector<std::uint8_t> ec = {1, 0};
  CHECK(eval::c_index(r, tt, ec) == 1.0);
  // Two events tied in time are not comparable.
  CHECK_FALSE(eval::try_c_index(r, tt, e).has_value());
}

TEST_CASE("c_index matches the pair loop exactly") {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto s = random_instance(seed <= 100 ? 30 : 3 + seed % 40, seed, seed % 2 == 0);
    double comparable = 0.0;
    const double ref = oracle::c_index_pairs(s.risk, s.time, s.event, &comparable);
    const auto got = eval::try_c_index(s.risk, s.time, s.event);
    if (comparable == 0.0) {
      CHECK_FALSE(got.has_value());
      continue;
    }
    REQUIRE(got.has_value());
    CHECK(*got == ref);
    CHECK(double(eval::concordance(s.risk, s.time, s.event).comparable) == comparable);
  }
}

TEST_CASE("c_index properties") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto s = random_instance(40, seed, false);
    if (!eval::try_c_index(s.risk, s.time, s.event)) continue;
    const double c = eval::c_index(s.risk, s.time, s.event);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    std::vector<double> neg, mono;
    for (double v : s.risk) {
      neg.push_back(-v);
      mono.push_back(std::exp(3.0 * v) + 7.0);
    }
    CHECK(eval::c_index(neg, s.time, s.event) == doctest::Approx(1.0 - c).epsilon(1e-15));
    CHECK(eval::c_index(mono, s.time, s.event) == c);
  }
}

TEST_CASE("random risks average near one half") {
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto ds = oracle::toy_dataset(200, 1, seed);
    Rng rng = make_rng(seed, {0xa11});
    std::vector<double> risk(200);
    for (auto& v : risk) v = uniform01(rng);
    total += eval::c_index(risk, ds.times(), ds.events());
  }
  const double mean = total / 100.0;
  CHECK(mean > 0.47);
  CHECK(mean < 0.53);
}

TEST_CASE("stratified folds balance events") {
  std::vector<std::uint8_t> events(103, 0);
  for (std::size_t i = 0; i < 23; ++i) events[i * 4] = 1;
  Rng rng = make_rng(1);
  const auto folds = eval::stratified_folds(events, 5, rng);
  REQUIRE(folds.size() == events.size());
  std::vector<int> size(5, 0), ev(5, 0);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    REQUIRE(folds[i] >= 0);
    REQUIRE(folds[i] < 5);
    ++size[std::size_t(folds[i])];
    ev[std::size_t(folds[i])] += events[i];
  }
  CHECK(*std::max_element(ev.begin(), ev.end()) - *std::min_element(ev.begin(), ev.end()) <= 1);
  CHECK(*std::max_element(size.begin(), size.end()) - *std::min_element(size.begin(), size.end()) <= 1);
  Rng r2 = make_rng(1);
  CHECK_THROWS_AS(eval::stratified_folds(events, 1, r2), ValidationError);
}

TEST_CASE("groupings resolve against tags") {
  const auto ds = tagged_dataset();
  const std::vector<std::string> ranking = {"dbm_3", "dbm_1", "dbm_8", "dbm_2"};
  const auto conv = make_grouping(GroupingKind::conventional_only, ds);
  CHECK(conv.columns == std::vector<std::string>{"conv_1", "conv_2", "conv_3"});
  const auto all = make_grouping(GroupingKind::all_dbm, ds);
  CHECK(all.columns.size() == 8);
  const auto top = make_grouping(GroupingKind::top_dbm, ds, ranking, 2);
  CHECK(top.columns == std::vector<std::string>{"dbm_1", "dbm_3"});
  CHECK(top.top_k == 2);
  const auto both = make_grouping(GroupingKind::conventional_plus_top_dbm, ds, ranking, 3);
  CHECK(both.columns == std::vector<std::string>{"conv_1", "conv_2", "conv_3", "dbm_1", "dbm_3", "dbm_8"});
  CHECK(make_grouping(GroupingKind::conventional_plus_all_dbm, ds).columns.size() == 11);
  CHECK_THROWS_AS(make_grouping(GroupingKind::top_dbm, ds, ranking, 5), ValidationError);
  CHECK_THROWS_AS(make_grouping(GroupingKind::top_dbm, ds, {"conv_1"}, 1), ValidationError);
  CHECK(standard_groupings(ds, ranking, 2).size() == 5);

  for (auto k : {GroupingKind::conventional_only, GroupingKind::all_dbm, GroupingKind::conventional_plus_all_dbm,
                 GroupingKind::top_dbm, GroupingKind::conventional_plus_top_dbm})
    CHECK(grouping_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(grouping_from_string("everything"), ValidationError);
}

TEST_CASE("ablate") {
  FeatureGrouping g;
  g.name = "pair";
  g.columns = {"a", "b"};
  const auto one = ablate(g, {"a"});
  CHECK(one.columns == std::vector<std::string>{"b"});
  CHECK(one.omitted == std::vector<std::string>{"a"});
  CHECK(one.name == "pair-minus-a");
  CHECK_THROWS_AS(ablate(g, {"c"}), ValidationError);
  CHECK_THROWS_AS(ablate(g, {"a", "b"}), ValidationError);
}

TEST_CASE("quantiles") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(quantile({1, 2, 3, 4, 5}, 0.25) == 2.0);
  CHECK(quantile({1, 2, 3, 4}, 0.75) == 3.25);
}

TEST_CASE("constant-risk model scores one half in every cell") {
  const auto ds = oracle::toy_dataset(40, 3, 2);
  const auto grid = make_grid(ds, 4);
  CvParams p;
  p.repeats = 1;
  p.folds = 2;
  const auto rep = repeated_cv(ds, {make_grouping(GroupingKind::all_dbm, ds)}, FlatBackend(), grid, p);
  REQUIRE(rep.cells.size() == 2);
  for (const auto& c : rep.cells) {
    REQUIRE(c.c_index.has_value());
    CHECK(*c.c_index == 0.5);
  }
}

TEST_CASE("repeated_cv shape, pairing and determinism") {
  const auto ds = tagged_dataset();
  const auto grid = make_grid(ds, 8);
  const std::vector<std::string> ranking = {"dbm_1", "dbm_2", "dbm_3", "dbm_4", "dbm_5", "dbm_6", "dbm_7", "dbm_8"};
  auto groupings = standard_groupings(ds, ranking, 8);
  const auto backend = make_backend({{"kind", "cox_ridge"}, {"lambda", 0.05}});
  CvParams p;
  p.seed = 17;
  const auto rep = repeated_cv(ds, groupings, *backend, grid, p);
  CHECK(rep.groupings.size() == 5);
  CHECK(rep.cells.size() == 5 * 30);
  for (const auto& g : rep.groupings) CHECK(rep.values(g).size() + rep.missing(g) == 30);

  // Same partition hash per (repeat, fold) across groupings.
  for (std::size_t c = 0; c < 30; ++c)
    for (std::size_t g = 1; g < 5; ++g) CHECK(rep.cells[g * 30 + c].partition_hash == rep.cells[c].partition_hash);
  std::set<std::uint64_t> hashes;
  for (std::size_t c = 0; c < 30; ++c) hashes.insert(rep.cells[c].partition_hash);
  CHECK(hashes.size() == 30);

  // top_dbm with k covering every DBM column equals all_dbm cell for cell.
  const auto all = rep.values("all_dbm"), top = rep.values("top_dbm");
  CHECK(all == top);

  p.workers = 3;
  const auto again = repeated_cv(ds, groupings, *backend, grid, p);
  for (std::size_t c = 0; c < rep.cells.size(); ++c) CHECK(again.cells[c].c_index == rep.cells[c].c_index);

  std::ostringstream csv;
  write_cindex_csv(csv, rep);
  CHECK(csv.str().rfind("grouping,repeat,fold,c_index\n", 0) == 0);
}

TEST_CASE("informative data with a forest reaches high concordance") {
  SynthConfig c;
  c.N = 300;
  c.n_dbm = 4;
  c.block_size = 1;
  c.rho = 0.0;
  c.informative = {0, 1};
  c.coefficients = {4.0, -4.0};
  c.censoring = 0.7;
  c.seed = 5;
  const auto ds = synth::generate(c).data;
  const auto grid = make_grid(ds, 16);
  ForestParams fp;
  fp.n_trees = 100;
  const ForestBackend backend(fp);
  CvParams p;
  const auto rep = repeated_cv(ds, {make_grouping(GroupingKind::all_dbm, ds)}, backend, grid, p);
  MESSAGE("median C " << rep.median("all_dbm"));
  CHECK(rep.median("all_dbm") >= 0.9);
}

TEST_CASE("topk_sweep") {
  const auto ds = tagged_dataset();
  const auto grid = make_grid(ds, 8);
  const std::vector<std::string> ranking = {"dbm_1", "dbm_2", "dbm_3"};
  const auto backend = make_backend({{"kind", "cox_ridge"}, {"lambda", 0.05}});
  CvParams p;
  p.repeats = 2;
  const auto sweep = topk_sweep(ds, ranking, {1, 2, 3}, *backend, grid, p);
  CHECK(sweep.ks == std::vector<std::size_t>{1, 2, 3});
  REQUIRE(sweep.reports.size() == 3);
  for (const auto& r : sweep.reports) CHECK(r.groupings.size() == 2);
  CHECK_THROWS_AS(topk_sweep(ds, ranking, {4}, *backend, grid, p), ValidationError);
  std::ostringstream csv;
  write_sweep_csv(csv, sweep);
  CHECK(csv.str().rfind("k,grouping,repeat,fold,c_index\n", 0) == 0);
}
