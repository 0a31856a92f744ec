#include "survloco/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>

#include "survloco/error.hpp"
#include "survloco/eval.hpp"
#include "survloco/parallel.hpp"
#include "survloco/rng.hpp"

namespace survloco {

ImportanceScorer loco_scorer(const TimeGrid& grid, const Backend& backend, const LocompParams& params,
                             std::size_t reference_rows) {
  return [&grid, &backend, params, reference_rows](const SurvivalDataset& ds, std::uint64_t seed) {
    LocompParams p = params;
    p.seed = seed;
    if (p.n != 0 && reference_rows != 0 && ds.rows() != reference_rows)
      p.n = std::max<std::size_t>(1, std::size_t(std::llround(double(p.n) * double(ds.rows()) / double(reference_rows))));
    return locomp::run(ds, grid, backend, p).delta;
  };
}

ImportanceScorer rfimp_scorer(const TimeGrid& grid, const ForestParams& params) {
  return [&grid, params](const SurvivalDataset& ds, std::uint64_t seed) {
    ForestParams p = params;
    p.seed = seed;
    const auto f = forest::fit(ds, grid, p);
    return forest::rf_importance(f, ds, derive_seed(seed, {0x1e9ULL}));
  };
}

std::vector<std::size_t> score_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> competition_ranks(std::span<const double> scores) {
  const auto order = score_order(scores);
  std::vector<std::size_t> rank(scores.size());
  for (std::size_t p = 0; p < order.size(); ++p) {
    if (p > 0 && scores[order[p]] == scores[order[p - 1]])
      rank[order[p]] = rank[order[p - 1]];
    else
      rank[order[p]] = p + 1;
  }
  return rank;
}

double RankDistribution::median_rank(std::size_t j) const {
  std::vector<double> v;
  for (const auto& r : ranks) v.push_back(double(r[j]));
  return median(std::move(v));
}

double RankDistribution::median_score(std::size_t j) const {
  std::vector<double> v;
  for (const auto& s : scores) v.push_back(s[j]);
  return median(std::move(v));
}

nlohmann::json RankDistribution::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t j = 0; j < M(); ++j) {
    std::vector<std::size_t> r;
    std::vector<double> s;
    for (std::size_t b = 0; b < ranks.size(); ++b) {
      r.push_back(ranks[b][j]);
      s.push_back(scores[b][j]);
    }
    feats.push_back({{"feature", features[j]},
                     {"rank", full_rank[j]},
                     {"delta", full_score[j]},
                     {"median_rank", ranks.empty() ? nlohmann::json(nullptr) : nlohmann::json(median_rank(j))},
                     {"median_delta", ranks.empty() ? nlohmann::json(nullptr) : nlohmann::json(median_score(j))},
                     {"subsample_ranks", r},
                     {"subsample_deltas", s}});
  }
  return {{"method", method},     {"B", B},         {"frac", frac},       {"seed", seed},
          {"subsamples", subsample_ids}, {"aborted", aborted}, {"features", std::move(feats)}};
}

nlohmann::json SubsampleParams::to_json() const { return {{"B", B}, {"frac", frac}, {"seed", seed}}; }

SubsampleParams SubsampleParams::from_json(const nlohmann::json& j) {
  SubsampleParams p;
  p.B = j.value("B", p.B);
  p.frac = j.value("frac", p.frac);
  p.seed = j.value("seed", p.seed);
  return p;
}

nlohmann::json stability::PermutationParams::to_json() const {
  return {{"P", P}, {"seed", seed}, {"shared_patches", shared_patches}};
}

stability::PermutationParams stability::PermutationParams::from_json(const nlohmann::json& j) {
  stability::PermutationParams p;
  p.P = j.value("P", p.P);
  p.seed = j.value("seed", p.seed);
  p.shared_patches = j.value("shared_patches", p.shared_patches);
  return p;
}

namespace stability {

std::vector<std::size_t> subsample_rows(std::size_t N, double frac, std::uint64_t seed, std::size_t b) {
  if (!(frac > 0.0 && frac <= 1.0)) throw ValidationError("subsample fraction must lie in (0, 1]");
  const auto n = std::size_t(std::floor(frac * double(N) + 1e-9));
  if (n < 2) throw ValidationError("subsample of " + std::to_string(n) + " rows is too small");
  Rng rng = make_rng(seed, {0x5b5ULL, b});
  return sample_without_replacement(rng, N, n);
}

RankDistribution subsample_ranks(const SurvivalDataset& ds, const ImportanceScorer& scorer, std::uint64_t scorer_seed,
                                 const SubsampleParams& params, const std::string& method) {
  if (params.B < 1) throw ValidationError("subsample_ranks: B must be >= 1");
  RankDistribution dist;
  dist.method = method;
  dist.features = ds.names();
  dist.B = params.B;
  dist.frac = params.frac;
  dist.seed = params.seed;
  dist.full_score = scorer(ds, scorer_seed);
  dist.full_rank = competition_ranks(dist.full_score);

  for (std::size_t b = 0; b < params.B; ++b) {
    const auto rows = subsample_rows(ds.rows(), params.frac, params.seed, b);
    std::vector<double> s;
    try {
      s = scorer(ds.select_rows(rows), scorer_seed);
    } catch (const ComputationError&) {
      dist.aborted.push_back(b);
      continue;
    }
    dist.ranks.push_back(competition_ranks(s));
    dist.scores.push_back(std::move(s));
    dist.subsample_ids.push_back(b);
  }
  if (2 * dist.aborted.size() > params.B)
    throw ComputationError("subsample_ranks: " + std::to_string(dist.aborted.size()) + " of " +
                           std::to_string(params.B) + " subsample runs aborted");
  return dist;
}

RankDistribution subsample_ranks(const SurvivalDataset& ds, const TimeGrid& grid, const Backend& backend,
                                 const LocompParams& loco, const SubsampleParams& params) {
  return subsample_ranks(ds, loco_scorer(grid, backend, loco, ds.rows()), loco.seed, params, "loco_mp");
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& x : a) common += b.count(x);
  return double(common) / double(a.size() + b.size() - common);
}

namespace {

std::set<std::string> top_set(const std::vector<std::string>& names, std::span<const double> scores, std::size_t k) {
  const auto order = score_order(scores);
  std::set<std::string> out;
  for (std::size_t r = 0; r < k; ++r) out.insert(names[order[r]]);
  return out;
}

}  // namespace

std::vector<JaccardRow> jaccard_curve(const RankDistribution& dist, std::size_t k_max) {
  if (k_max > dist.M()) throw ValidationError("jaccard_curve: k_max exceeds the number of features");
  std::vector<JaccardRow> rows;
  for (std::size_t k = 1; k <= k_max; ++k) {
    JaccardRow row;
    row.k = k;
    const auto full = top_set(dist.features, dist.full_score, k);
    for (const auto& s : dist.scores) row.values.push_back(jaccard(full, top_set(dist.features, s, k)));
    row.mean = row.values.empty() ? std::nan("")
                                  : std::accumulate(row.values.begin(), row.values.end(), 0.0) / double(row.values.size());
    row.median = median(row.values);
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json PermutationResult::to_json() const {
  return {{"feature", feature},
          {"original_rank", original_rank},
          {"permuted_ranks", permuted_ranks},
          {"aborted", aborted},
          {"p_value", p_value}};
}

double empirical_p(std::size_t original_rank, std::span<const std::size_t> permuted_ranks) {
  if (permuted_ranks.empty()) throw ValidationError("empirical p-value needs at least one permutation");
  const auto hits = std::count_if(permuted_ranks.begin(), permuted_ranks.end(),
                                  [&](std::size_t r) { return r <= original_rank; });
  return double(1 + hits) / double(permuted_ranks.size() + 1);
}

std::vector<PermutationResult> permutation_test(const SurvivalDataset& ds, const ImportanceScorer& scorer,
                                                std::uint64_t scorer_seed, const std::vector<std::string>& features,
                                                const PermutationParams& params) {
  if (params.P == 0) throw ValidationError("permutation_test: P must be >= 1");
  if (features.empty()) throw ValidationError("permutation_test: no target features");
  std::vector<std::size_t> cols;
  for (const auto& f : features) cols.push_back(ds.column_index(f));

  const auto original = competition_ranks(scorer(ds, scorer_seed));

  const std::size_t P = params.P;
  std::vector<std::optional<std::size_t>> ranks(cols.size() * P);
  parallel_for(ranks.size(), params.workers, [&](std::size_t job) {
    const std::size_t t = job / P, p = job % P;
    const auto j = cols[t];
    auto column = ds.column(j);
    Rng rng = make_rng(params.seed, {0x9e7ULL, j, p});
    shuffle(rng, std::span<double>(column));
    const auto permuted = ds.with_column(j, column);
    const auto seed = params.shared_patches ? scorer_seed : derive_seed(params.seed, {0x9f1ULL, j, p});
    try {
      ranks[job] = competition_ranks(scorer(permuted, seed))[j];
    } catch (const ComputationError&) {
      ranks[job].reset();
    }
  });

  std::vector<PermutationResult> out;
  for (std::size_t t = 0; t < cols.size(); ++t) {
    PermutationResult r;
    r.feature = features[t];
    r.original_rank = original[cols[t]];
    for (std::size_t p = 0; p < P; ++p) {
      if (ranks[t * P + p])
        r.permuted_ranks.push_back(*ranks[t * P + p]);
      else
        ++r.aborted;
    }
    if (r.permuted_ranks.empty())
      throw ComputationError("permutation_test: every rerun for '" + r.feature + "' aborted");
    r.p_value = empirical_p(r.original_rank, r.permuted_ranks);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PermutationResult> permutation_test(const SurvivalDataset& ds, const TimeGrid& grid,
                                                const Backend& backend, const LocompParams& loco,
                                                const std::vector<std::string>& features,
                                                const PermutationParams& params) {
  LocompParams inner = loco;
  if (params.workers > 1) inner.workers = 1;
  return permutation_test(ds, loco_scorer(grid, backend, inner), loco.seed, features, params);
}

nlohmann::json ImportanceComparison::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t j = 0; j < features.size(); ++j)
    feats.push_back({{"feature", features[j]}, {"iqr_" + method_a, iqr_a[j]}, {"iqr_" + method_b, iqr_b[j]}});
  return {{"methods", {method_a, method_b}},
          {"median_iqr", {{method_a, median_iqr_a}, {method_b, median_iqr_b}}},
          {"features", std::move(feats)}};
}

namespace {

std::vector<double> rank_iqrs(const RankDistribution& d) {
  if (d.ranks.empty()) throw ValidationError("compare_importance: distribution '" + d.method + "' has no subsamples");
  std::vector<double> out;
  for (std::size_t j = 0; j < d.M(); ++j) {
    std::vector<double> v;
    for (const auto& r : d.ranks) v.push_back(double(r[j]));
    out.push_back(quantile(v, 0.75) - quantile(v, 0.25));
  }
  return out;
}

}  // namespace

ImportanceComparison compare_importance(const RankDistribution& a, const RankDistribution& b) {
  if (a.features != b.features) throw ValidationError("compare_importance: feature universes differ");
  ImportanceComparison c;
  c.method_a = a.method;
  c.method_b = b.method;
  if (c.method_a == c.method_b) c.method_b += "_2";
  c.features = a.features;
  c.iqr_a = rank_iqrs(a);
  c.iqr_b = rank_iqrs(b);
  c.median_iqr_a = median(c.iqr_a);
  c.median_iqr_b = median(c.iqr_b);
  return c;
}

}  // namespace stability

namespace {

void write_metadata(std::ostream& out, const std::vector<std::string>& metadata) {
  for (const auto& m : metadata) out << "# " << m << '\n';
}

}  // namespace

void write_rank_distribution_csv(std::ostream& out, const RankDistribution& dist,
                                 const std::vector<std::string>& metadata) {
  write_metadata(out, metadata);
  out << "feature,source,rank,delta\n";
  for (std::size_t j = 0; j < dist.M(); ++j) {
    out << dist.features[j] << ",full," << dist.full_rank[j] << ',' << format_double(dist.full_score[j]) << '\n';
    for (std::size_t s = 0; s < dist.ranks.size(); ++s)
      out << dist.features[j] << ",subsample_" << (dist.subsample_ids[s] + 1) << ',' << dist.ranks[s][j] << ','
          << format_double(dist.scores[s][j]) << '\n';
  }
}

void write_rank_summary_csv(std::ostream& out, const RankDistribution& dist, const std::vector<std::string>& metadata) {
  write_metadata(out, metadata);
  out << "rank,feature,delta,median_rank,median_delta\n";
  for (auto j : score_order(dist.full_score)) {
    out << dist.full_rank[j] << ',' << dist.features[j] << ',' << format_double(dist.full_score[j]) << ',';
    if (dist.ranks.empty())
      out << "NA,NA\n";
    else
      out << format_double(dist.median_rank(j)) << ',' << format_double(dist.median_score(j)) << '\n';
  }
}

void write_jaccard_csv(std::ostream& out, const std::vector<stability::JaccardRow>& rows,
                       const std::vector<std::string>& metadata) {
  write_metadata(out, metadata);
  out << "statistic";
  for (const auto& r : rows) out << ",k=" << r.k;
  out << "\nmean_J";
  for (const auto& r : rows) out << ',' << format_double(r.mean);
  out << "\nmedian_J";
  for (const auto& r : rows) out << ',' << format_double(r.median);
  out << '\n';
}

void write_permutation_ranks_csv(std::ostream& out, const std::vector<stability::PermutationResult>& results,
                                 const std::vector<std::string>& metadata) {
  write_metadata(out, metadata);
  out << "feature,run,permuted_rank\n";
  for (const auto& r : results)
    for (std::size_t p = 0; p < r.permuted_ranks.size(); ++p)
      out << r.feature << ',' << p << ',' << r.permuted_ranks[p] << '\n';
}

void write_permutation_summary_csv(std::ostream& out, const std::vector<stability::PermutationResult>& results,
                                   const RankDistribution* dist, const std::vector<std::string>& metadata) {
  write_metadata(out, metadata);
  out << "feature,original_rank,median_subsample_rank,p_value,P,aborted\n";
  for (const auto& r : results) {
    out << r.feature << ',' << r.original_rank << ',';
    if (dist && !dist->ranks.empty()) {
      const auto it = std::find(dist->features.begin(), dist->features.end(), r.feature);
      out << (it == dist->features.end() ? std::string("NA")
                                         : format_double(dist->median_rank(std::size_t(it - dist->features.begin()))));
    } else {
      out << "NA";
    }
    out << ',' << format_double(r.p_value) << ',' << (r.permuted_ranks.size() + r.aborted) << ',' << r.aborted << '\n';
  }
}

void write_comparison_csv(std::ostream& out, const RankDistribution& a, const RankDistribution& b,
                          const std::vector<std::string>& metadata) {
  write_metadata(out, metadata);
  out << "feature,method,subsample,rank\n";
  for (const auto* d : {&a, &b})
    for (std::size_t j = 0; j < d->M(); ++j)
      for (std::size_t s = 0; s < d->ranks.size(); ++s)
        out << d->features[j] << ',' << d->method << ',' << (d->subsample_ids[s] + 1) << ',' << d->ranks[s][j] << '\n';
}

}  // namespace survloco
