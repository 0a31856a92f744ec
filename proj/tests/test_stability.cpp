#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "survloco/error.hpp"
#include "survloco/stability.hpp"
#include "survloco/synth.hpp"

using namespace survloco;

namespace {

RankDistribution hand_distribution(std::vector<double> full, std::vector<std::vector<double>> subs) {
  RankDistribution d;
  d.method = "hand";
  for (std::size_t j = 0; j < full.size(); ++j) d.features.push_back("f" + std::to_string(j + 1));
  d.full_score = full;
  d.full_rank = competition_ranks(full);
  for (std::size_t b = 0; b < subs.size(); ++b) {
    d.scores.push_back(subs[b]);
    d.ranks.push_back(competition_ranks(subs[b]));
    d.subsample_ids.push_back(b);
  }
  d.B = subs.size();
  d.frac = 0.8;
  return d;
}

// Scores column j by |corr(x_j, log time)| among events; no randomness.
std::vector<double> correlation_scores(const SurvivalDataset& ds, std::uint64_t) {
  std::vector<double> out;
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, n = 0;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (!ds.events()[i]) continue;
      const double x = ds.value(i, j), y = std::log(ds.times()[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
      n += 1;
    }
    const double cov = sxy / n - sx / n * sy / n;
    out.push_back(std::abs(cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n))));
  }
  return out;
}

}  // namespace

TEST_CASE("competition ranks and score order") {
  const std::vector<double> s = {0.2, 0.5, 0.2, 0.9, 0.1};
  CHECK(competition_ranks(s) == std::vector<std::size_t>{3, 2, 3, 1, 5});
  CHECK(score_order(s) == std::vector<std::size_t>{3, 1, 0, 2, 4});
  const std::vector<double> flat = {1, 1, 1};
  CHECK(competition_ranks(flat) == std::vector<std::size_t>{1, 1, 1});
  CHECK(score_order(flat) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("jaccard examples and properties") {
  using S = std::set<std::string>;
  CHECK(stability::jaccard({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(stability::jaccard({"a", "b", "c"}, {"a", "b", "d"}) == 0.5);
  CHECK(stability::jaccard({"a"}, {"b"}) == 0.0);
  CHECK(stability::jaccard({}, {}) == 1.0);
  CHECK(stability::jaccard({}, {"a"}) == 0.0);

  Rng rng = make_rng(4);
  for (int t = 0; t < 500; ++t) {
    S a, b;
    for (int v = 0; v < 6; ++v) {
      if (uniform01(rng) < 0.5) a.insert(std::string(1, char('a' + v)));
      if (uniform01(rng) < 0.5) b.insert(std::string(1, char('a' + v)));
    }
    const double j = stability::jaccard(a, b);
    CHECK(j == stability::jaccard(b, a));
    CHECK(j >= 0.0);
    CHECK(j <= 1.0);
    if (!a.empty() || !b.empty()) CHECK((j == 1.0) == (a == b));
  }
}

TEST_CASE("jaccard_curve hand case") {
  // full order f1 f2 f3 f4; subsample 1 order f2 f1 f4 f3; subsample 2 order f1 f3 f2 f4.
  const auto d = hand_distribution({4, 3, 2, 1}, {{3, 4, 1, 2}, {4, 2, 3, 1}});
  const auto rows = stability::jaccard_curve(d, 4);
  REQUIRE(rows.size() == 4);
  // k=1: {f1} vs {f2} -> 0, {f1} vs {f1} -> 1
  CHECK(rows[0].values == std::vector<double>{0.0, 1.0});
  CHECK(rows[0].mean == 0.5);
  // k=2: {f1,f2} vs {f1,f2} -> 1, vs {f1,f3} -> 1/3
  CHECK(rows[1].values[0] == 1.0);
  CHECK(rows[1].values[1] == doctest::Approx(1.0 / 3.0));
  CHECK(rows[1].median == doctest::Approx(2.0 / 3.0));
  // k=3: {f1,f2,f3} vs {f1,f2,f4} -> 0.5, vs {f1,f2,f3} -> 1
  CHECK(rows[2].values == std::vector<double>{0.5, 1.0});
  CHECK(rows[3].values == std::vector<double>{1.0, 1.0});
  CHECK_THROWS_AS(stability::jaccard_curve(d, 5), ValidationError);

  std::ostringstream csv;
  write_jaccard_csv(csv, rows);
  CHECK(csv.str().find("statistic,k=1,k=2,k=3,k=4") != std::string::npos);
  CHECK(csv.str().find("mean_J,") != std::string::npos);
  CHECK(csv.str().find("median_J,") != std::string::npos);
}

TEST_CASE("identical subsamples give J = 1 at every k") {
  const auto d = hand_distribution({5, 1, 3, 2}, {{5, 1, 3, 2}, {5, 1, 3, 2}, {5, 1, 3, 2}});
  for (const auto& r : stability::jaccard_curve(d, 4)) {
    CHECK(r.mean == 1.0);
    CHECK(r.median == 1.0);
  }
}

TEST_CASE("subsample rows") {
  const auto a = stability::subsample_rows(100, 0.8, 3, 0);
  CHECK(a.size() == 80);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
  CHECK(a == stability::subsample_rows(100, 0.8, 3, 0));
  CHECK(a != stability::subsample_rows(100, 0.8, 3, 1));
  CHECK(stability::subsample_rows(100, 1.0, 3, 0).size() == 100);
}

TEST_CASE("full-fraction subsamples reproduce the full-data ranks") {
  const auto ds = oracle::toy_dataset(80, 5, 6);
  const auto grid = make_grid(ds, 8);
  const auto backend = make_patch_backend({{"kind", "cox_ridge"}, {"lambda", 0.1}});
  LocompParams loco;
  loco.K = 150;
  SubsampleParams sp;
  sp.B = 3;
  sp.frac = 1.0;
  const auto d = stability::subsample_ranks(ds, grid, *backend, loco, sp);
  REQUIRE(d.ranks.size() == 3);
  for (const auto& r : d.ranks) CHECK(r == d.full_rank);
  for (std::size_t j = 0; j < d.M(); ++j) CHECK(d.median_rank(j) == double(d.full_rank[j]));
  CHECK(d.method == "loco_mp");
}

TEST_CASE("planted feature has median subsample rank 1") {
  SynthConfig c;
  c.N = 150;
  c.n_dbm = 6;
  c.block_size = 1;
  c.rho = 0.0;
  c.informative = {4};
  c.coefficients = {1.5};
  c.censoring = 0.4;
  c.seed = 9;
  const auto r = synth::generate(c);
  const auto grid = make_grid(r.data, 8);
  const auto backend = make_patch_backend({{"kind", "cox_ridge"}, {"lambda", 0.1}});
  LocompParams loco;
  loco.K = 300;
  loco.seed = 9;
  const auto d = stability::subsample_ranks(r.data, grid, *backend, loco, SubsampleParams{});
  CHECK(d.ranks.size() == 10);
  CHECK(d.median_rank(4) == 1.0);
  CHECK(d.full_rank[4] == 1);

  std::ostringstream csv;
  write_rank_summary_csv(csv, d);
  CHECK(csv.str().rfind("rank,feature,delta,median_rank,median_delta\n1,dbm_5,", 0) == 0);
  std::ostringstream dist;
  write_rank_distribution_csv(dist, d);
  CHECK(dist.str().rfind("feature,source,rank,delta\n", 0) == 0);
  CHECK(dist.str().find(",subsample_10,") != std::string::npos);
}

TEST_CASE("subsample aborts are recorded and bounded") {
  const auto ds = oracle::toy_dataset(40, 3, 1);
  int calls = 0;
  const ImportanceScorer flaky = [&](const SurvivalDataset& d, std::uint64_t s) {
    if (calls++ % 3 == 1) throw ComputationError("boom");
    return correlation_scores(d, s);
  };
  SubsampleParams sp;
  sp.B = 6;
  const auto d = stability::subsample_ranks(ds, flaky, 1, sp);
  CHECK(d.aborted.size() == 2);
  CHECK(d.ranks.size() == 4);

  const ImportanceScorer broken = [&](const SurvivalDataset& d2, std::uint64_t s) {
    if (d2.rows() < ds.rows()) throw ComputationError("boom");
    return correlation_scores(d2, s);
  };
  CHECK_THROWS_AS(stability::subsample_ranks(ds, broken, 1, sp), ComputationError);
}

TEST_CASE("empirical p-values") {
  const std::vector<std::size_t> worse(25, 5);
  CHECK(stability::empirical_p(1, worse) == doctest::Approx(1.0 / 26.0).epsilon(1e-15));
  const std::vector<std::size_t> same(25, 1);
  CHECK(stability::empirical_p(1, same) == 1.0);
  const std::vector<std::size_t> mixed = {1, 3, 2, 4};
  CHECK(stability::empirical_p(2, mixed) == doctest::Approx(3.0 / 5.0));
  CHECK_THROWS_AS(stability::empirical_p(1, std::vector<std::size_t>{}), ValidationError);
}

TEST_CASE("permutation test with a deterministic scorer") {
  SynthConfig c;
  c.N = 200;
  c.n_dbm = 5;
  c.block_size = 1;
  c.rho = 0.0;
  // Two weaker informative columns keep a noised-out dbm_2 off the top spot.
  c.informative = {1, 3, 4};
  c.coefficients = {2.0, 0.8, 0.8};
  c.censoring = 0.3;
  c.seed = 12;
  const auto ds = synth::generate(c).data;
  stability::PermutationParams pp;
  pp.P = 25;
  pp.seed = 3;
  const auto res = stability::permutation_test(ds, correlation_scores, 1, {"dbm_2"}, pp);
  REQUIRE(res.size() == 1);
  CHECK(res[0].original_rank == 1);
  CHECK(res[0].permuted_ranks.size() == 25);
  CHECK(res[0].p_value == doctest::Approx(1.0 / 26.0));
  CHECK(res[0].p_value > 0.0);
  CHECK(res[0].p_value <= 1.0);

  pp.workers = 4;
  const auto again = stability::permutation_test(ds, correlation_scores, 1, {"dbm_2"}, pp);
  CHECK(again[0].permuted_ranks == res[0].permuted_ranks);

  pp.P = 0;
  CHECK_THROWS_AS(stability::permutation_test(ds, correlation_scores, 1, {"dbm_2"}, pp), ValidationError);
  pp.P = 5;
  CHECK_THROWS_AS(stability::permutation_test(ds, correlation_scores, 1, {"nope"}, pp), ValidationError);
}

TEST_CASE("compare_importance") {
  const auto a = hand_distribution({4, 3, 2, 1}, {{4, 3, 2, 1}, {3, 4, 2, 1}, {4, 3, 1, 2}, {4, 3, 2, 1}});
  const auto same = stability::compare_importance(a, a);
  CHECK(same.iqr_a == same.iqr_b);
  CHECK(same.median_iqr_a == same.median_iqr_b);

  const auto one = hand_distribution({1, 2}, {{2, 1}});
  const auto c1 = stability::compare_importance(one, one);
  CHECK(c1.iqr_a == std::vector<double>{0.0, 0.0});
  CHECK(c1.iqr_b == std::vector<double>{0.0, 0.0});

  // Ranks of f1 across subsamples: 1, 2, 1, 1 -> q25 = 1, q75 = 1.25.
  CHECK(same.iqr_a[0] == doctest::Approx(0.25));

  auto other = a;
  other.features[0] = "zz";
  CHECK_THROWS_AS(stability::compare_importance(a, other), ValidationError);
}
