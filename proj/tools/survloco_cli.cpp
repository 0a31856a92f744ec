#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "survloco/error.hpp"
#include "survloco/parallel.hpp"
#include "survloco/pipeline.hpp"
#include "survloco/report.hpp"

using namespace survloco;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::size_t> k;
  std::optional<std::string> backend;
  std::optional<bool> stratify;
  bool refit = false;
  std::optional<std::string> data;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", o.out_dir, "Output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "Master seed (overrides config)");
  cmd->add_option("--workers", o.workers, "Worker threads (default: $SURVLOCO_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--backend", o.backend, "forest | cox_ridge | cox_lasso")
      ->check(CLI::IsMember({"forest", "cox_ridge", "cox_lasso"}));
  cmd->add_option("--data", o.data, "CSV dataset (replaces the config's data source)");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = RunConfig::load(o.config_path);
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.k) c.top_k = *o.k;
  if (o.backend) c.backend["kind"] = *o.backend;
  if (o.stratify) c.cv.stratify = *o.stratify;
  if (o.refit) c.refit_loco_per_fold = true;
  if (o.data) {
    c.data_path = *o.data;
    c.synth.reset();
  }
  c.validate();
  return c;
}

int fail(const std::string& kind, const std::string& message, int code, const nlohmann::json& extra = nlohmann::json::object()) {
  std::cerr << error_json(kind, message, code, extra).dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minipatch LOCO feature importance for right-censored survival data"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.require_subcommand(1);

  Overrides o;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and its ground truth");
  auto* loco = app.add_subcommand("loco", "Run LOCO-MP on the full dataset");
  auto* stab = app.add_subcommand("stability", "Subsample ranks, Jaccard curve and permutation test");
  auto* cv = app.add_subcommand("cv", "Repeated cross-validated C-index for feature groupings");
  for (auto* cmd : {synth, loco, stab, cv}) add_common(cmd, o);
  cv->add_option("--k", o.k, "Number of top DBM features for top_* groupings")->check(CLI::PositiveNumber);
  cv->add_flag("--stratify,!--no-stratify", o.stratify, "Stratify folds by event indicator");
  cv->add_flag("--refit-loco-per-fold", o.refit, "Re-rank DBM features on each training split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 1);
  }

  try {
    const RunConfig config = resolve(o);
    std::vector<std::string> written;
    if (synth->parsed())
      written = pipeline::cmd_synth(config);
    else if (loco->parsed())
      written = pipeline::cmd_loco(config);
    else if (stab->parsed())
      written = pipeline::cmd_stability(config);
    else
      written = pipeline::cmd_cv(config);
    for (const auto& p : written) std::cout << p << '\n';
    return 0;
  } catch (const ValidationError& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const CensoringSaturationError& e) {
    return fail(e.kind(), e.what(), 2, {{"skipped", e.skipped()}, {"total", e.total()}});
  } catch (const ConvergenceError& e) {
    return fail(e.kind(), e.what(), 2, {{"gradient_norm", e.gradient_norm()}});
  } catch (const ComputationError& e) {
    return fail(e.kind(), e.what(), 2);
  } catch (const std::exception& e) {
    return fail("internal_error", e.what(), 2);
  }
}
