#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "survloco/dataset.hpp"
#include "survloco/eval.hpp"
#include "survloco/forest.hpp"
#include "survloco/locomp.hpp"
#include "survloco/stability.hpp"
#include "survloco/synth.hpp"

namespace survloco {

// One run's full configuration. Every module seed is derived from `seed`.
// `workers` and `out_dir` are excluded from the serialized form (and so from
// the config hash) because they do not change any output byte.
struct RunConfig {
  std::optional<std::string> data_path;
  CsvSchema schema;
  std::optional<SynthConfig> synth;
  std::string outcome = "outcome";
  int intervals = kDefaultIntervals;
  nlohmann::json backend = {{"kind", "forest"}};
  LocompParams loco;
  std::string loco_features = "dbm";  // "dbm" or "all"

  SubsampleParams subsample;
  std::size_t permutations = 25;
  bool shared_patches = false;
  std::vector<std::string> permute;  // empty: the full-data top feature
  bool compare_rfimp = true;
  ForestParams rfimp;
  std::size_t jaccard_k_max = 11;

  CvParams cv;
  bool refit_loco_per_fold = false;
  std::vector<std::string> groupings;  // empty: all five
  std::size_t top_k = kDefaultTopK;
  std::vector<std::size_t> k_list;
  std::vector<std::size_t> n_trees_grid;  // forest backend only: reruns the grouping CV per size
  std::vector<std::vector<std::string>> ablations;
  std::optional<std::string> ranking_path;  // occlusion.json from an earlier loco run

  std::uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = "out";

  // Throws ValidationError on unknown keys or invalid values.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;
};

namespace pipeline {

SurvivalDataset load_data(const RunConfig& config);

// Column names LOCO-MP scores: DBM-tagged columns (all columns of an untagged
// dataset), or every column when loco_features is "all".
std::vector<std::string> loco_columns(const SurvivalDataset& ds, const RunConfig& config);

LocompParams loco_params(const RunConfig& config);

// Each command writes its artifacts into config.out_dir and returns their paths.
std::vector<std::string> cmd_synth(const RunConfig& config);
std::vector<std::string> cmd_loco(const RunConfig& config);
std::vector<std::string> cmd_stability(const RunConfig& config);
std::vector<std::string> cmd_cv(const RunConfig& config);

}  // namespace pipeline
}  // namespace survloco
