#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "survloco/backend.hpp"
#include "survloco/dataset.hpp"
#include "survloco/hazard.hpp"

namespace survloco {

// Row set I_k and column set F_k of one minipatch, both ascending.
struct MiniPatch {
  std::size_t index = 0;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> features;
};

struct LocompParams {
  std::size_t n = 0;  // rows per patch; 0 selects N / 5
  std::size_t m = 0;  // features per patch; 0 selects round(sqrt(M))
  std::size_t K = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  // An observation enters feature j's mean only when both ensembles average
  // at least this many patches.
  std::size_t min_contributions = 5;
  // Patches with fewer events than this are skipped.
  std::size_t min_patch_events = 1;
  // Abort when more than this fraction of patches is skipped.
  double max_skipped_fraction = 0.5;
  LossConvention convention = LossConvention::event_indicator;

  std::size_t resolved_n(std::size_t N) const;
  std::size_t resolved_m(std::size_t M) const;

  nlohmann::json to_json() const;
  static LocompParams from_json(const nlohmann::json& j);
};

std::vector<MiniPatch> sample_minipatches(std::size_t N, std::size_t M, std::size_t n, std::size_t m,
                                          std::size_t K, std::uint64_t seed);

// Seed handed to the backend when fitting patch k.
std::uint64_t patch_fit_seed(std::uint64_t seed, std::size_t k);

struct OcclusionReport {
  std::vector<std::string> features;
  std::vector<double> delta;            // mean occlusion score per feature
  std::vector<std::size_t> rank;        // 1 = most important; ties by feature index
  std::vector<std::size_t> observations_used;  // rows entering each feature's mean
  std::vector<double> std_error;        // sd(Delta_ij) / sqrt(observations_used)
  std::vector<double> ci_low, ci_high;  // normal-approximation 95% interval (informational)

  // Patch counts behind each ensemble: per row i (N) and per (i, j) (N x M, row-major).
  std::vector<std::size_t> count_without_i;
  std::vector<std::size_t> count_without_ij;

  std::size_t N = 0, M = 0, K = 0, n = 0, m = 0;
  std::size_t skipped_patches = 0;
  std::uint64_t seed = 0;
  std::string backend;

  std::size_t count_without(std::size_t i, std::size_t j) const { return count_without_ij[i * M + j]; }

  nlohmann::json to_json() const;
  static OcclusionReport from_json(const nlohmann::json& j);
};

// Columns: rank, feature, delta, std_error, ci_low, ci_high, observations_used,
// min_patches_without_ij, mean_patches_without_ij. Rows in rank order.
void write_occlusion_csv(std::ostream& out, const OcclusionReport& report,
                         const std::vector<std::string>& metadata = {});

namespace locomp {

// Fits `backend` on every patch, predicts hazards for out-of-patch rows, and
// scores each feature by the mean increase in loss when the ensemble is
// restricted to patches that exclude it. Curves are averaged before the loss
// is taken. Patch fits may run in parallel; aggregation follows patch order,
// so results do not depend on the worker count.
OcclusionReport run(const SurvivalDataset& ds, const TimeGrid& grid, const Backend& backend,
                    std::span<const MiniPatch> patches, const LocompParams& params);

// Samples K patches from params and runs.
OcclusionReport run(const SurvivalDataset& ds, const TimeGrid& grid, const Backend& backend,
                    const LocompParams& params);

// Ordinal ranks (1-based) of scores, descending, ties by lower index first.
std::vector<std::size_t> ordinal_ranks(std::span<const double> scores);

// Names of the top_k features by descending score, ties by feature index.
std::vector<std::string> rank(const OcclusionReport& report, std::size_t top_k);

}  // namespace locomp
}  // namespace survloco
