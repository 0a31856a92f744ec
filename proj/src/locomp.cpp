#include "survloco/locomp.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>

#include "survloco/error.hpp"
#include "survloco/parallel.hpp"
#include "survloco/rng.hpp"

namespace survloco {

std::size_t LocompParams::resolved_n(std::size_t N) const { return n > 0 ? n : std::max<std::size_t>(1, N / 5); }

std::size_t LocompParams::resolved_m(std::size_t M) const {
  if (m > 0) return m;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(double(M)))));
}

nlohmann::json LocompParams::to_json() const {
  return {{"n", n},
          {"m", m},
          {"K", K},
          {"seed", seed},
          {"min_contributions", min_contributions},
          {"min_patch_events", min_patch_events},
          {"max_skipped_fraction", max_skipped_fraction},
          {"convention", convention == LossConvention::event_indicator ? "event_indicator" : "censoring_indicator"}};
}

LocompParams LocompParams::from_json(const nlohmann::json& j) {
  LocompParams p;
  p.n = j.value("n", p.n);
  p.m = j.value("m", p.m);
  p.K = j.value("K", p.K);
  p.seed = j.value("seed", p.seed);
  p.min_contributions = j.value("min_contributions", p.min_contributions);
  p.min_patch_events = j.value("min_patch_events", p.min_patch_events);
  p.max_skipped_fraction = j.value("max_skipped_fraction", p.max_skipped_fraction);
  const std::string conv = j.value("convention", std::string("event_indicator"));
  if (conv == "event_indicator")
    p.convention = LossConvention::event_indicator;
  else if (conv == "censoring_indicator")
    p.convention = LossConvention::censoring_indicator;
  else
    throw ValidationError("unknown loss convention '" + conv + "'");
  return p;
}

std::vector<MiniPatch> sample_minipatches(std::size_t N, std::size_t M, std::size_t n, std::size_t m,
                                          std::size_t K, std::uint64_t seed) {
  if (n < 1 || n >= N)
    throw ValidationError("minipatch rows n=" + std::to_string(n) + " must satisfy 1 <= n < N=" + std::to_string(N));
  if (m < 1 || m > M)
    throw ValidationError("minipatch features m=" + std::to_string(m) + " must satisfy 1 <= m <= M=" +
                          std::to_string(M));
  if (K < 1) throw ValidationError("minipatch count K must be >= 1");
  std::vector<MiniPatch> patches(K);
  for (std::size_t k = 0; k < K; ++k) {
    Rng rng = make_rng(seed, {k});
    patches[k].index = k;
    patches[k].rows = sample_without_replacement(rng, N, n);
    patches[k].features = sample_without_replacement(rng, M, m);
  }
  return patches;
}

std::uint64_t patch_fit_seed(std::uint64_t seed, std::size_t k) { return derive_seed(seed, {0xf17ULL, k}); }

// ---------------------------------------------------------------------------

nlohmann::json OcclusionReport::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t j = 0; j < M; ++j)
    feats.push_back({{"feature", features[j]},
                     {"delta", delta[j]},
                     {"rank", rank[j]},
                     {"observations_used", observations_used[j]},
                     {"std_error", std_error[j]},
                     {"ci_low", ci_low[j]},
                     {"ci_high", ci_high[j]}});
  return {{"N", N},
          {"M", M},
          {"K", K},
          {"n", n},
          {"m", m},
          {"seed", seed},
          {"backend", backend},
          {"skipped_patches", skipped_patches},
          {"features", std::move(feats)},
          {"count_without_i", count_without_i},
          {"count_without_ij", count_without_ij}};
}

OcclusionReport OcclusionReport::from_json(const nlohmann::json& j) {
  OcclusionReport r;
  r.N = j.at("N").get<std::size_t>();
  r.M = j.at("M").get<std::size_t>();
  r.K = j.at("K").get<std::size_t>();
  r.n = j.at("n").get<std::size_t>();
  r.m = j.at("m").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.backend = j.at("backend").get<std::string>();
  r.skipped_patches = j.at("skipped_patches").get<std::size_t>();
  for (const auto& f : j.at("features")) {
    r.features.push_back(f.at("feature").get<std::string>());
    r.delta.push_back(f.at("delta").get<double>());
    r.rank.push_back(f.at("rank").get<std::size_t>());
    r.observations_used.push_back(f.at("observations_used").get<std::size_t>());
    r.std_error.push_back(f.at("std_error").get<double>());
    r.ci_low.push_back(f.at("ci_low").get<double>());
    r.ci_high.push_back(f.at("ci_high").get<double>());
  }
  r.count_without_i = j.at("count_without_i").get<std::vector<std::size_t>>();
  r.count_without_ij = j.at("count_without_ij").get<std::vector<std::size_t>>();
  if (r.features.size() != r.M) throw ValidationError("occlusion report: feature count mismatch");
  return r;
}

void write_occlusion_csv(std::ostream& out, const OcclusionReport& r, const std::vector<std::string>& metadata) {
  for (const auto& m : metadata) out << "# " << m << '\n';
  out << "rank,feature,delta,std_error,ci_low,ci_high,observations_used,min_patches_without_ij,"
         "mean_patches_without_ij\n";
  std::vector<std::size_t> order(r.M);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.rank[a] < r.rank[b]; });
  for (auto j : order) {
    std::size_t lo = std::numeric_limits<std::size_t>::max();
    double mean = 0.0;
    for (std::size_t i = 0; i < r.N; ++i) {
      lo = std::min(lo, r.count_without(i, j));
      mean += double(r.count_without(i, j));
    }
    if (r.N > 0) mean /= double(r.N);
    out << r.rank[j] << ',' << r.features[j] << ',' << format_double(r.delta[j]) << ','
        << format_double(r.std_error[j]) << ',' << format_double(r.ci_low[j]) << ',' << format_double(r.ci_high[j])
        << ',' << r.observations_used[j] << ',' << (r.N > 0 ? lo : 0) << ',' << format_double(mean) << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace locomp {

std::vector<std::size_t> ordinal_ranks(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> rank(scores.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
  return rank;
}

std::vector<std::string> rank(const OcclusionReport& report, std::size_t top_k) {
  if (top_k > report.M)
    throw ValidationError("rank: top_k=" + std::to_string(top_k) + " exceeds feature count " +
                          std::to_string(report.M));
  std::vector<std::size_t> order(report.M);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return report.delta[a] > report.delta[b]; });
  std::vector<std::string> out;
  for (std::size_t r = 0; r < top_k; ++r) out.push_back(report.features[order[r]]);
  return out;
}

namespace {

struct PatchResult {
  bool skipped = false;
  std::vector<double> hazards;  // out-of-patch rows (ascending) x d
  std::exception_ptr failure;
};

void validate_patches(std::span<const MiniPatch> patches, std::size_t N, std::size_t M) {
  if (patches.empty()) throw ValidationError("locomp: no minipatches");
  for (const auto& p : patches) {
    if (p.rows.empty() || p.rows.size() >= N || p.features.empty() || p.features.size() > M)
      throw ValidationError("locomp: minipatch " + std::to_string(p.index) + " has invalid dimensions");
    for (std::size_t k = 0; k < p.rows.size(); ++k)
      if (p.rows[k] >= N || (k > 0 && p.rows[k] <= p.rows[k - 1]))
        throw ValidationError("locomp: minipatch " + std::to_string(p.index) + " rows must be ascending and < N");
    for (std::size_t k = 0; k < p.features.size(); ++k)
      if (p.features[k] >= M || (k > 0 && p.features[k] <= p.features[k - 1]))
        throw ValidationError("locomp: minipatch " + std::to_string(p.index) +
                              " features must be ascending and < M");
  }
}

}  // namespace

OcclusionReport run(const SurvivalDataset& ds, const TimeGrid& grid, const Backend& backend,
                    std::span<const MiniPatch> patches, const LocompParams& params) {
  const std::size_t N = ds.rows(), M = ds.cols(), K = patches.size();
  const auto d = std::size_t(grid.intervals());
  if (params.min_contributions < 1) throw ValidationError("locomp: min_contributions must be >= 1");
  validate_patches(patches, N, M);

  std::vector<ObservedOutcome> outcomes(N);
  for (std::size_t i = 0; i < N; ++i) outcomes[i] = {grid.interval_of(ds.times()[i]), ds.events()[i] == 1};

  std::vector<std::size_t> cnt(N, 0), cnt_in(N * M, 0);
  std::vector<double> sum(N * d, 0.0), sum_in(N * M * d, 0.0);
  std::size_t skipped = 0;

  const std::size_t chunk = std::max<std::size_t>(64, 8 * std::size_t(std::max(params.workers, 1)));
  std::vector<PatchResult> results;
  for (std::size_t begin = 0; begin < K; begin += chunk) {
    const std::size_t end = std::min(K, begin + chunk);
    results.assign(end - begin, PatchResult{});
    parallel_for(end - begin, params.workers, [&](std::size_t off) {
      const MiniPatch& patch = patches[begin + off];
      PatchResult& res = results[off];
      try {
        std::size_t events = 0;
        for (auto i : patch.rows) events += ds.events()[i];
        if (events < std::max<std::size_t>(params.min_patch_events, 1)) {
          res.skipped = true;
          return;
        }
        const auto train = ds.select_rows(patch.rows).select_columns(patch.features);
        const auto model = backend.fit(train, grid, patch_fit_seed(params.seed, patch.index));
        res.hazards.assign((N - patch.rows.size()) * d, 0.0);
        std::vector<double> x(patch.features.size());
        std::size_t out = 0, next_in = 0;
        for (std::size_t i = 0; i < N; ++i) {
          if (next_in < patch.rows.size() && patch.rows[next_in] == i) {
            ++next_in;
            continue;
          }
          for (std::size_t f = 0; f < x.size(); ++f) x[f] = ds.value(i, patch.features[f]);
          model->predict_hazard(x, std::span<double>(res.hazards).subspan(out * d, d));
          ++out;
        }
      } catch (...) {
        res.failure = std::current_exception();
      }
    });

    for (std::size_t off = 0; off < results.size(); ++off) {
      auto& res = results[off];
      if (res.failure) std::rethrow_exception(res.failure);
      if (res.skipped) {
        ++skipped;
        continue;
      }
      const MiniPatch& patch = patches[begin + off];
      std::size_t out = 0, next_in = 0;
      for (std::size_t i = 0; i < N; ++i) {
        if (next_in < patch.rows.size() && patch.rows[next_in] == i) {
          ++next_in;
          continue;
        }
        const double* h = res.hazards.data() + out * d;
        ++out;
        ++cnt[i];
        double* acc = sum.data() + i * d;
        for (std::size_t s = 0; s < d; ++s) acc[s] += h[s];
        for (auto j : patch.features) {
          ++cnt_in[i * M + j];
          double* acc_j = sum_in.data() + (i * M + j) * d;
          for (std::size_t s = 0; s < d; ++s) acc_j[s] += h[s];
        }
      }
    }
  }

  if (double(skipped) > params.max_skipped_fraction * double(K) || skipped == K)
    throw CensoringSaturationError("locomp: " + std::to_string(skipped) + " of " + std::to_string(K) +
                                       " minipatches had fewer than " +
                                       std::to_string(std::max<std::size_t>(params.min_patch_events, 1)) +
                                       " events; censoring too heavy for minipatch training",
                                   skipped, K);

  OcclusionReport report;
  report.features = ds.names();
  report.N = N;
  report.M = M;
  report.K = K;
  report.n = patches.front().rows.size();
  report.m = patches.front().features.size();
  report.seed = params.seed;
  report.backend = backend.id();
  report.skipped_patches = skipped;
  report.count_without_i = cnt;
  report.count_without_ij.resize(N * M);
  report.delta.assign(M, 0.0);
  report.observations_used.assign(M, 0);
  report.std_error.assign(M, 0.0);
  report.ci_low.assign(M, 0.0);
  report.ci_high.assign(M, 0.0);

  std::vector<double> full_loss(N, 0.0);
  std::vector<double> mu(d), mu_j(d);
  for (std::size_t i = 0; i < N; ++i) {
    if (cnt[i] == 0) continue;
    for (std::size_t s = 0; s < d; ++s) mu[s] = sum[i * d + s] / double(cnt[i]);
    full_loss[i] = nll(mu, outcomes[i], params.convention);
  }

  std::vector<double> diffs;
  for (std::size_t j = 0; j < M; ++j) {
    diffs.clear();
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t c_full = cnt[i];
      const std::size_t c_without = c_full - cnt_in[i * M + j];
      report.count_without_ij[i * M + j] = c_without;
      if (c_full < params.min_contributions || c_without < params.min_contributions) continue;
      const double* s_full = sum.data() + i * d;
      const double* s_in = sum_in.data() + (i * M + j) * d;
      for (std::size_t s = 0; s < d; ++s) mu_j[s] = (s_full[s] - s_in[s]) / double(c_without);
      diffs.push_back(nll(mu_j, outcomes[i], params.convention) - full_loss[i]);
    }
    const std::size_t used = diffs.size();
    report.observations_used[j] = used;
    if (used == 0) continue;
    double mean = 0.0;
    for (double v : diffs) mean += v;
    mean /= double(used);
    double var = 0.0;
    for (double v : diffs) var += (v - mean) * (v - mean);
    var = used > 1 ? var / double(used - 1) : 0.0;
    const double se = std::sqrt(var / double(used));
    report.delta[j] = mean;
    report.std_error[j] = se;
    report.ci_low[j] = mean - 1.959963984540054 * se;
    report.ci_high[j] = mean + 1.959963984540054 * se;
  }
  report.rank = ordinal_ranks(report.delta);
  return report;
}

OcclusionReport run(const SurvivalDataset& ds, const TimeGrid& grid, const Backend& backend,
                    const LocompParams& params) {
  const auto patches = sample_minipatches(ds.rows(), ds.cols(), params.resolved_n(ds.rows()),
                                          params.resolved_m(ds.cols()), params.K, params.seed);
  return run(ds, grid, backend, patches, params);
}

}  // namespace locomp
}  // namespace survloco
