#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "survloco/backend.hpp"
#include "survloco/dataset.hpp"
#include "survloco/forest.hpp"
#include "survloco/locomp.hpp"

namespace survloco {

// Importance scores (higher = more important) for every column of ds.
using ImportanceScorer = std::function<std::vector<double>(const SurvivalDataset& ds, std::uint64_t seed)>;

// Scores by LOCO-MP delta. When params.n is set explicitly it is rescaled by
// the subsample's size relative to `reference_rows`.
ImportanceScorer loco_scorer(const TimeGrid& grid, const Backend& backend, const LocompParams& params,
                             std::size_t reference_rows = 0);
// Scores by out-of-bag permutation importance of a forest fit on the data.
ImportanceScorer rfimp_scorer(const TimeGrid& grid, const ForestParams& params);

// Competition ranks (1 = highest score, ties share the minimum rank).
std::vector<std::size_t> competition_ranks(std::span<const double> scores);

// Column indices ordered by descending score, ties by lower index.
std::vector<std::size_t> score_order(std::span<const double> scores);

struct RankDistribution {
  std::string method;
  std::vector<std::string> features;
  std::vector<std::size_t> full_rank;
  std::vector<double> full_score;
  // One entry per completed subsample (b in `subsample_ids`), each of length M.
  std::vector<std::vector<std::size_t>> ranks;
  std::vector<std::vector<double>> scores;
  std::vector<std::size_t> subsample_ids;
  std::vector<std::size_t> aborted;
  std::size_t B = 0;
  double frac = 0.0;
  std::uint64_t seed = 0;

  std::size_t M() const { return features.size(); }
  double median_rank(std::size_t j) const;
  double median_score(std::size_t j) const;

  nlohmann::json to_json() const;
};

struct SubsampleParams {
  std::size_t B = 10;
  double frac = 0.8;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static SubsampleParams from_json(const nlohmann::json& j);
};

namespace stability {

// Rows of subsample b: floor(frac * N) drawn without replacement, ascending.
std::vector<std::size_t> subsample_rows(std::size_t N, double frac, std::uint64_t seed, std::size_t b);

// Full-data scores plus B subsample reruns. Every rerun uses `scorer_seed`, so
// with frac = 1 the subsample ranks equal the full-data ranks. A rerun that
// throws ComputationError is recorded in `aborted`; more than B/2 aborts fail.
RankDistribution subsample_ranks(const SurvivalDataset& ds, const ImportanceScorer& scorer, std::uint64_t scorer_seed,
                                 const SubsampleParams& params, const std::string& method = "custom");

RankDistribution subsample_ranks(const SurvivalDataset& ds, const TimeGrid& grid, const Backend& backend,
                                 const LocompParams& loco, const SubsampleParams& params);

// |a ∩ b| / |a ∪ b|; two empty sets give 1.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

struct JaccardRow {
  std::size_t k = 0;
  double mean = 0.0;
  double median = 0.0;
  std::vector<double> values;  // one per completed subsample
};

// Top-k sets by descending score (ties by feature index), full data vs each subsample.
std::vector<JaccardRow> jaccard_curve(const RankDistribution& dist, std::size_t k_max);

struct PermutationResult {
  std::string feature;
  std::size_t original_rank = 0;
  std::vector<std::size_t> permuted_ranks;
  std::size_t aborted = 0;
  double p_value = 1.0;

  nlohmann::json to_json() const;
};

struct PermutationParams {
  std::size_t P = 25;
  std::uint64_t seed = 1;
  // Reuse the unpermuted run's scorer seed (and so its patches) for every rerun.
  bool shared_patches = false;
  int workers = 1;

  nlohmann::json to_json() const;
  static PermutationParams from_json(const nlohmann::json& j);
};

// (1 + #{permuted <= original}) / (P + 1).
double empirical_p(std::size_t original_rank, std::span<const std::size_t> permuted_ranks);

// Permutes each target column P times and records its rank after rescoring.
// Reruns are independent jobs; results do not depend on the worker count.
std::vector<PermutationResult> permutation_test(const SurvivalDataset& ds, const ImportanceScorer& scorer,
                                                std::uint64_t scorer_seed, const std::vector<std::string>& features,
                                                const PermutationParams& params);

std::vector<PermutationResult> permutation_test(const SurvivalDataset& ds, const TimeGrid& grid,
                                                const Backend& backend, const LocompParams& loco,
                                                const std::vector<std::string>& features,
                                                const PermutationParams& params);

struct ImportanceComparison {
  std::string method_a, method_b;
  std::vector<std::string> features;
  std::vector<double> iqr_a, iqr_b;
  double median_iqr_a = 0.0, median_iqr_b = 0.0;

  nlohmann::json to_json() const;
};

// Per-feature interquartile range of subsample ranks under each method.
ImportanceComparison compare_importance(const RankDistribution& a, const RankDistribution& b);

}  // namespace stability

// feature,source,rank,delta with source "full" or "subsample_<b>".
void write_rank_distribution_csv(std::ostream& out, const RankDistribution& dist,
                                 const std::vector<std::string>& metadata = {});
// rank,feature,delta,median_rank,median_delta in full-data rank order.
void write_rank_summary_csv(std::ostream& out, const RankDistribution& dist,
                            const std::vector<std::string>& metadata = {});
// statistic,k=1,...,k=k_max with rows "mean_J" and "median_J".
void write_jaccard_csv(std::ostream& out, const std::vector<stability::JaccardRow>& rows,
                       const std::vector<std::string>& metadata = {});
// feature,run,permuted_rank
void write_permutation_ranks_csv(std::ostream& out, const std::vector<stability::PermutationResult>& results,
                                 const std::vector<std::string>& metadata = {});
// feature,original_rank,median_subsample_rank,p_value,P,aborted
void write_permutation_summary_csv(std::ostream& out, const std::vector<stability::PermutationResult>& results,
                                   const RankDistribution* dist, const std::vector<std::string>& metadata = {});
// feature,method,subsample,rank (paired boxplot data)
void write_comparison_csv(std::ostream& out, const RankDistribution& a, const RankDistribution& b,
                          const std::vector<std::string>& metadata = {});

}  // namespace survloco
