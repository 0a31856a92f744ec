#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "survloco/cox.hpp"
#include "survloco/error.hpp"
#include "survloco/eval.hpp"
#include "survloco/synth.hpp"

using namespace survloco;

namespace {

std::vector<double> ranks_of(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = double(k);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks_of(a), rb = ranks_of(b);
  const double n = double(a.size()), mean = (n - 1) / 2;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  return sab / std::sqrt(saa * sbb);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n, mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("config validation") {
  SynthConfig c;
  c.informative = {0};
  CHECK_THROWS_AS(synth::generate(c), ValidationError);
  c.coefficients = {1.0};
  c.rho = 1.0;
  CHECK_THROWS_AS(synth::generate(c), ValidationError);
  c.rho = 0.7;
  c.censoring = 0.0;
  CHECK_THROWS_AS(synth::generate(c), ValidationError);
  c.censoring = 1.0;
  CHECK_THROWS_AS(synth::generate(c), ValidationError);
  c.censoring = 0.5;
  c.informative = {99};
  CHECK_THROWS_AS(synth::generate(c), ValidationError);
}

TEST_CASE("unreachable censoring targets") {
  const std::vector<double> eta = {0.0, 0.5, -0.5};
  CHECK_THROWS_AS(synth::solve_baseline_rate(eta, 0.0, 96, 0.001), ValidationError);
  CHECK_THROWS_AS(synth::solve_baseline_rate(eta, 1.0, 96, 0.001), ValidationError);
  const double base = synth::solve_baseline_rate(eta, 0.6, 96, 0.001);
  double mean = 0.0;
  for (double e : eta) mean += 1.0 - synth::event_probability(base * std::exp(e), 96, 0.001);
  CHECK(mean / 3.0 == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("determinism and shape") {
  const auto a = synth::paper_shaped(4), b = synth::paper_shaped(4), c = synth::paper_shaped(5);
  CHECK(a.data == b.data);
  CHECK_FALSE(a.data == c.data);
  CHECK(a.data.rows() == 350);
  CHECK(a.data.cols() == 65);
  CHECK(a.data.columns_tagged(FeatureTag::conventional).size() == 9);
  CHECK(a.data.columns_tagged(FeatureTag::dbm).size() == 56);
  CHECK(a.data.names().front() == "conv_1");
  CHECK(a.data.names()[9] == "dbm_1");
  CHECK(a.truth.informative ==
        std::vector<std::string>{"conv_1", "conv_2", "conv_3", "dbm_1", "dbm_5", "dbm_9", "dbm_13", "dbm_17", "dbm_21"});
  CHECK(a.truth.shadows == std::vector<std::string>{"dbm_29", "dbm_33"});
  CHECK(a.truth.shadow_sources == std::vector<std::string>{"dbm_1", "dbm_5"});
  const auto j = a.truth.to_json();
  CHECK(j.at("seed").get<std::uint64_t>() == 4);
}

TEST_CASE("config json round trip") {
  const auto c = synth::paper_shaped_config(3);
  const auto back = SynthConfig::from_json(c.to_json());
  CHECK(synth::generate(back).data == synth::generate(c).data);
  const auto preset = SynthConfig::from_json({{"preset", "paper_shaped"}, {"seed", 3}});
  CHECK(synth::generate(preset).data == synth::generate(c).data);
}

TEST_CASE("block correlation structure") {
  SynthConfig c;
  c.N = 20000;
  c.n_dbm = 8;
  c.informative = {};
  c.coefficients = {};
  c.seed = 2;
  const auto ds = synth::generate(c).data;
  CHECK(pearson(ds.column(0), ds.column(1)) == doctest::Approx(0.7).epsilon(0.03));
  CHECK(pearson(ds.column(4), ds.column(7)) == doctest::Approx(0.7).epsilon(0.03));
  CHECK(std::abs(pearson(ds.column(3), ds.column(4))) < 0.03);

  c.shadows = {{5, 0, 0.6}};
  c.independent = {0, 5};
  const auto sh = synth::generate(c).data;
  CHECK(pearson(sh.column(0), sh.column(5)) == doctest::Approx(0.6).epsilon(0.05));
  CHECK(std::abs(pearson(sh.column(0), sh.column(1))) < 0.03);
}

TEST_CASE("zero coefficients give a null model") {
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    SynthConfig c;
    c.N = 300;
    c.n_dbm = 4;
    c.informative = {0, 1};
    c.coefficients = {0.0, 0.0};
    c.censoring = 0.5;
    c.seed = seed;
    const auto ds = synth::generate(c).data;
    total += eval::c_index(ds.column(0), ds.times(), ds.events());
  }
  CHECK(std::abs(total / 40.0 - 0.5) < 0.02);
}

TEST_CASE("a large coefficient makes high values fail early") {
  SynthConfig c;
  c.N = 500;
  c.n_dbm = 4;
  c.informative = {2};
  c.coefficients = {3.0};
  c.censoring = 0.3;
  c.seed = 8;
  const auto ds = synth::generate(c).data;
  std::vector<double> t;
  std::vector<double> x;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.events()[i]) {
      t.push_back(ds.times()[i]);
      x.push_back(ds.value(i, 2));
    }
  CHECK(spearman(x, t) < -0.7);
}

TEST_CASE("realized censoring tracks the target") {
  double mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto r = synth::paper_shaped(seed);
    mean += r.truth.realized_censoring;
    CHECK(r.truth.expected_censoring == doctest::Approx(0.77).epsilon(1e-6));
  }
  mean /= 50.0;
  MESSAGE("mean realized censoring " << mean);
  CHECK(std::abs(mean - 0.77) <= 0.03);
}

TEST_CASE("dominant conventional feature beats the other eight combined") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto ds = synth::paper_shaped(seed).data;
    const double alone = eval::c_index(ds.column(0), ds.times(), ds.events());
    std::vector<std::string> rest;
    for (int k = 2; k <= 9; ++k) rest.push_back("conv_" + std::to_string(k));
    const auto sub = ds.select_columns(rest);
    const auto model = cox::fit(sub, CoxParams{});
    std::vector<double> risk;
    for (std::size_t i = 0; i < sub.rows(); ++i) risk.push_back(model.risk(sub.row(i)));
    CHECK(alone > eval::c_index(risk, sub.times(), sub.events()));
  }
}

TEST_CASE("a Cox fit recovers the generating coefficients") {
  SynthConfig c;
  c.N = 5000;
  c.n_dbm = 6;
  c.informative = {0, 2, 5};
  c.coefficients = {0.8, -0.5, 0.3};
  c.censoring = 0.5;
  c.seed = 21;
  const auto ds = synth::generate(c).data;
  CoxParams p;
  p.lambda = 1e-8;
  const auto beta = cox::fit(ds, p).beta();
  for (std::size_t k = 0; k < 3; ++k) {
    const double b = beta[c.informative[k]], truth = c.coefficients[k];
    CHECK(std::signbit(b) == std::signbit(truth));
    CHECK(std::abs(b - truth) / std::abs(truth) < 0.15);
  }
}
