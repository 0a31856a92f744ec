#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "survloco/backend.hpp"
#include "survloco/dataset.hpp"
#include "survloco/rng.hpp"

namespace survloco {

namespace eval {

// Harrell's concordance. A pair is comparable when the earlier time is an
// observed event; a censored subject tied in time with an event counts as the
// later one. Concordant pairs score 1, risk ties 0.5.
struct ConcordanceCounts {
  std::uint64_t concordant = 0;
  std::uint64_t tied = 0;
  std::uint64_t comparable = 0;
  double value() const { return (double(concordant) + 0.5 * double(tied)) / double(comparable); }
};

ConcordanceCounts concordance(std::span<const double> risks, std::span<const double> times,
                              std::span<const std::uint8_t> events);

// Throws ValidationError when N < 2 or no pair is comparable.
double c_index(std::span<const double> risks, std::span<const double> times, std::span<const std::uint8_t> events);
std::optional<double> try_c_index(std::span<const double> risks, std::span<const double> times,
                                  std::span<const std::uint8_t> events);

// Fold id in [0, folds) per row. Stratified: events and non-events are
// shuffled separately and dealt round-robin, so every fold gets its share.
std::vector<int> stratified_folds(std::span<const std::uint8_t> events, int folds, Rng& rng);
std::vector<int> random_folds(std::size_t n, int folds, Rng& rng);

}  // namespace eval

enum class GroupingKind { conventional_only, all_dbm, conventional_plus_all_dbm, top_dbm, conventional_plus_top_dbm };

const char* to_string(GroupingKind kind);
GroupingKind grouping_from_string(const std::string& s);
bool uses_top_features(GroupingKind kind);

inline constexpr std::size_t kDefaultTopK = 6;

struct FeatureGrouping {
  GroupingKind kind = GroupingKind::conventional_only;
  std::string name;
  std::vector<std::string> columns;  // dataset column order
  std::size_t top_k = 0;
  std::vector<std::string> omitted;
};

// Resolves a grouping against ds. `ranked_dbm` is a frozen ranking (most
// important first) used by the top_* kinds; only its first top_k entries are
// used. Untagged datasets treat every feature as DBM.
FeatureGrouping make_grouping(GroupingKind kind, const SurvivalDataset& ds,
                              const std::vector<std::string>& ranked_dbm = {}, std::size_t top_k = kDefaultTopK);

std::vector<FeatureGrouping> standard_groupings(const SurvivalDataset& ds, const std::vector<std::string>& ranked_dbm,
                                                std::size_t top_k = kDefaultTopK);

// Removes `omit` from the grouping; name gets a "-minus-<names>" suffix.
FeatureGrouping ablate(const FeatureGrouping& grouping, const std::vector<std::string>& omit);

struct CvParams {
  int repeats = 6;
  int folds = 5;
  std::uint64_t seed = 1;
  bool stratify = true;
  int workers = 1;

  nlohmann::json to_json() const;
  static CvParams from_json(const nlohmann::json& j);
};

struct CIndexCell {
  std::string grouping;
  int repeat = 0;
  int fold = 0;
  std::optional<double> c_index;  // empty when the test fold has no comparable pair
  std::uint64_t partition_hash = 0;
};

struct CIndexReport {
  std::vector<std::string> groupings;
  std::vector<CIndexCell> cells;  // grouping-major, then repeat, then fold
  std::string model;
  std::string outcome_label;
  CvParams params;

  std::vector<double> values(const std::string& grouping) const;
  double median(const std::string& grouping) const;
  std::size_t missing(const std::string& grouping) const;
  nlohmann::json summary() const;
};

// Re-ranks top features on a training split, for refit-per-fold mode.
using TopFeatureRanker = std::function<std::vector<std::string>(const SurvivalDataset& train, std::uint64_t seed)>;

// Repeated k-fold CV. Within a repeat every grouping sees the same partition
// and the same model seed per fold, so groupings are compared pairwise.
CIndexReport repeated_cv(const SurvivalDataset& ds, const std::vector<FeatureGrouping>& groupings,
                         const Backend& backend, const TimeGrid& grid, const CvParams& params,
                         const TopFeatureRanker& refit_ranker = {});

struct SweepReport {
  std::vector<std::size_t> ks;
  std::vector<CIndexReport> reports;  // one per k: top_dbm and conventional_plus_top_dbm
};

SweepReport topk_sweep(const SurvivalDataset& ds, const std::vector<std::string>& ranked_dbm,
                       const std::vector<std::size_t>& ks, const Backend& backend, const TimeGrid& grid,
                       const CvParams& params, bool include_conventional = true);

// Long format: grouping,repeat,fold,c_index ("NA" when missing).
void write_cindex_csv(std::ostream& out, const CIndexReport& report, const std::vector<std::string>& metadata = {});
// Long format with the k column first.
void write_sweep_csv(std::ostream& out, const SweepReport& sweep, const std::vector<std::string>& metadata = {});

double median(std::vector<double> values);
// Type-7 (linear interpolation) sample quantile.
double quantile(std::vector<double> values, double p);

}  // namespace survloco
