#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "survloco/error.hpp"
#include "survloco/hazard.hpp"
#include "survloco/rng.hpp"

using namespace survloco;

TEST_CASE("survival of an all-half curve") {
  const HazardCurve c(std::vector<double>{0.5, 0.5, 0.5});
  CHECK(survival(c, 0) == 1.0);
  CHECK(survival(c, 2) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(survival(c, 3) == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("hazard curve rejects values outside [0, 1]") {
  CHECK_THROWS_AS(HazardCurve(std::vector<double>{0.2, 1.5}), ValidationError);
  CHECK_THROWS_AS(HazardCurve(std::vector<double>{-0.1}), ValidationError);
  CHECK_THROWS_AS(HazardCurve(std::vector<double>{std::nan("")}), ValidationError);
}

TEST_CASE("nll worked examples") {
  const std::vector<double> h{0.5, 0.5};
  CHECK(nll(h, {0, true}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(nll(h, {1, false}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(nll(h, {1, true}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("loss convention flips the branch") {
  const std::vector<double> h{0.3, 0.6, 0.2};
  CHECK(nll(h, {1, true}, LossConvention::censoring_indicator) == nll(h, {1, false}));
  CHECK(nll(h, {1, false}, LossConvention::censoring_indicator) == nll(h, {1, true}));
}

TEST_CASE("nll rejects out-of-range intervals") {
  const std::vector<double> h{0.5, 0.5};
  CHECK_THROWS_AS(nll(h, {2, true}), ValidationError);
  CHECK_THROWS_AS(nll(h, {-1, false}), ValidationError);
}

TEST_CASE("nll matches a 100-digit transcription") {
  Rng rng = make_rng(11);
  double worst = 0.0;
  for (int r = 0; r < 300; ++r) {
    const std::size_t d = 1 + uniform_index(rng, 20);
    std::vector<double> h(d);
    for (auto& v : h) v = uniform01(rng);
    if (r % 7 == 0) h[uniform_index(rng, d)] = (r % 2) ? 0.0 : 1.0;
    const int q = int(uniform_index(rng, d));
    const bool ev = uniform01(rng) < 0.5;
    worst = std::max(worst, std::abs(nll(h, {q, ev}) - oracle::nll_high_precision(h, q, ev)));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("mean_nll") {
  const std::vector<HazardCurve> one{HazardCurve(std::vector<double>{0.2, 0.4})};
  const std::vector<ObservedOutcome> o1{{1, true}};
  CHECK(mean_nll(one, o1) == nll(one[0], o1[0]));

  const std::vector<HazardCurve> two{one[0], one[0]};
  const std::vector<ObservedOutcome> o2{o1[0], o1[0]};
  CHECK(mean_nll(two, o2) == doctest::Approx(nll(one[0], o1[0])).epsilon(1e-15));

  Rng rng = make_rng(5);
  std::vector<HazardCurve> curves;
  std::vector<ObservedOutcome> obs;
  double loop = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> h(6);
    for (auto& v : h) v = uniform01(rng);
    curves.emplace_back(h);
    obs.push_back({int(uniform_index(rng, 6)), uniform01(rng) < 0.4});
    loop += nll(curves.back(), obs.back());
  }
  CHECK(std::abs(mean_nll(curves, obs) - loop / 100.0) < 1e-12);

  CHECK_THROWS_AS(mean_nll(std::span<const HazardCurve>{}, std::span<const ObservedOutcome>{}), ValidationError);
  CHECK_THROWS_AS(mean_nll(two, o1), ValidationError);
}

TEST_CASE("property: event loss falls as the hazard at the event interval rises") {
  Rng rng = make_rng(21);
  for (int r = 0; r < 200; ++r) {
    std::vector<double> h(8);
    for (auto& v : h) v = uniform01(rng);
    const int q = int(uniform_index(rng, 8));
    const double before = nll(h, {q, true});
    h[std::size_t(q)] = std::min(1.0, h[std::size_t(q)] + 0.05 + 0.5 * uniform01(rng) * (1 - h[std::size_t(q)]));
    CHECK(nll(h, {q, true}) <= before);
  }
}

TEST_CASE("property: censored loss is minus log survival and survival recurses") {
  Rng rng = make_rng(22);
  for (int r = 0; r < 200; ++r) {
    const std::size_t d = 2 + uniform_index(rng, 10);
    std::vector<double> h(d);
    for (auto& v : h) v = 0.02 + 0.96 * uniform01(rng);
    const int q = int(uniform_index(rng, d));
    CHECK(nll(h, {q, false}) == doctest::Approx(-std::log(survival(h, q + 1))).epsilon(1e-13));
    if (q + 1 < int(d))
      CHECK(survival(h, q + 1) * (1 - h[std::size_t(q + 1)]) ==
            doctest::Approx(survival(h, q + 2)).epsilon(1e-13));
  }
}

TEST_CASE("property: clipping keeps degenerate curves finite") {
  const double bound = -std::log(kHazardClip) * 5.0;
  for (double v : {0.0, 1.0}) {
    const std::vector<double> h(4, v);
    for (int q = 0; q < 4; ++q)
      for (bool ev : {true, false}) {
        const double l = nll(h, {q, ev});
        CHECK(std::isfinite(l));
        CHECK(l <= bound);
      }
  }
}
