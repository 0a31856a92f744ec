#include "survloco/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "survloco/backend.hpp"
#include "survloco/error.hpp"
#include "survloco/parallel.hpp"
#include "survloco/report.hpp"
#include "survloco/rng.hpp"
#include "survloco/svg.hpp"

namespace survloco {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw ValidationError("config: '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ValidationError("config: unknown key '" + it.key() + "' in " + section);
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j,
             {"data", "schema", "synth", "outcome", "intervals", "backend", "loco", "loco_features", "stability", "cv",
              "seed", "workers", "out_dir"},
             "config");
  RunConfig c;
  try {
    if (j.contains("data")) c.data_path = j.at("data").get<std::string>();
    if (j.contains("schema")) {
      const auto& s = j.at("schema");
      c.schema = s.is_string() ? CsvSchema::from_file(s.get<std::string>()) : CsvSchema::from_json(s);
    }
    if (j.contains("synth")) c.synth = SynthConfig::from_json(j.at("synth"));
    c.outcome = j.value("outcome", c.outcome);
    c.intervals = j.value("intervals", c.intervals);
    if (j.contains("backend")) c.backend = j.at("backend");
    if (j.contains("loco")) {
      check_keys(j.at("loco"),
                 {"n", "m", "K", "min_contributions", "min_patch_events", "max_skipped_fraction", "convention"},
                 "loco");
      c.loco = LocompParams::from_json(j.at("loco"));
    }
    c.loco_features = j.value("loco_features", c.loco_features);
    if (j.contains("stability")) {
      const auto& s = j.at("stability");
      check_keys(s, {"B", "frac", "P", "shared_patches", "permute", "compare_rfimp", "rfimp", "jaccard_k_max"},
                 "stability");
      c.subsample.B = s.value("B", c.subsample.B);
      c.subsample.frac = s.value("frac", c.subsample.frac);
      c.permutations = s.value("P", c.permutations);
      c.shared_patches = s.value("shared_patches", c.shared_patches);
      c.permute = s.value("permute", c.permute);
      c.compare_rfimp = s.value("compare_rfimp", c.compare_rfimp);
      if (s.contains("rfimp")) c.rfimp = ForestParams::from_json(s.at("rfimp"));
      c.jaccard_k_max = s.value("jaccard_k_max", c.jaccard_k_max);
    }
    if (j.contains("cv")) {
      const auto& s = j.at("cv");
      check_keys(s,
                 {"repeats", "folds", "stratify", "refit_loco_per_fold", "groupings", "top_k", "k_list", "ablations",
                  "ranking", "n_trees_grid"},
                 "cv");
      c.cv = CvParams::from_json(s);
      c.refit_loco_per_fold = s.value("refit_loco_per_fold", c.refit_loco_per_fold);
      c.groupings = s.value("groupings", c.groupings);
      c.top_k = s.value("top_k", c.top_k);
      c.k_list = s.value("k_list", c.k_list);
      c.n_trees_grid = s.value("n_trees_grid", c.n_trees_grid);
      c.ablations = s.value("ablations", c.ablations);
      if (s.contains("ranking")) c.ranking_path = s.at("ranking").get<std::string>();
    }
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", default_workers());
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config file '" + path + "': " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json j;
  if (data_path) {
    j["data"] = *data_path;
    j["schema"] = schema.to_json();
  }
  if (synth) {
    auto sj = synth->to_json();
    sj.erase("seed");
    j["synth"] = sj;
  }
  j["outcome"] = outcome;
  j["intervals"] = intervals;
  j["backend"] = backend;
  auto l = loco.to_json();
  l.erase("seed");
  j["loco"] = l;
  j["loco_features"] = loco_features;
  j["stability"] = {{"B", subsample.B},
                    {"frac", subsample.frac},
                    {"P", permutations},
                    {"shared_patches", shared_patches},
                    {"permute", permute},
                    {"compare_rfimp", compare_rfimp},
                    {"rfimp", [&] {
                       auto r = rfimp.to_json();
                       r.erase("seed");
                       return r;
                     }()},
                    {"jaccard_k_max", jaccard_k_max}};
  auto cvj = cv.to_json();
  cvj.erase("seed");
  cvj["refit_loco_per_fold"] = refit_loco_per_fold;
  cvj["groupings"] = groupings;
  cvj["top_k"] = top_k;
  cvj["k_list"] = k_list;
  cvj["n_trees_grid"] = n_trees_grid;
  cvj["ablations"] = ablations;
  if (ranking_path) cvj["ranking"] = *ranking_path;
  j["cv"] = cvj;
  j["seed"] = seed;
  return j;
}

void RunConfig::validate() const {
  if (data_path.has_value() == synth.has_value())
    throw ValidationError("config: give exactly one of 'data' (CSV path) or 'synth'");
  if (synth) {
    SynthConfig s = *synth;
    s.validate();
  }
  if (intervals < 2) throw ValidationError("config: intervals must be >= 2");
  (void)make_backend(backend, 1);
  if (loco.K < 1) throw ValidationError("config: loco.K must be >= 1");
  if (loco.min_contributions < 1) throw ValidationError("config: loco.min_contributions must be >= 1");
  if (!(loco.max_skipped_fraction >= 0.0 && loco.max_skipped_fraction <= 1.0))
    throw ValidationError("config: loco.max_skipped_fraction must lie in [0, 1]");
  if (loco_features != "dbm" && loco_features != "all")
    throw ValidationError("config: loco_features must be 'dbm' or 'all'");
  if (subsample.B < 1) throw ValidationError("config: stability.B must be >= 1");
  if (!(subsample.frac > 0.0 && subsample.frac <= 1.0)) throw ValidationError("config: stability.frac must lie in (0, 1]");
  if (permutations < 1) throw ValidationError("config: stability.P must be >= 1");
  if (jaccard_k_max < 1) throw ValidationError("config: stability.jaccard_k_max must be >= 1");
  if (rfimp.n_trees < 1) throw ValidationError("config: stability.rfimp.n_trees must be >= 1");
  if (cv.repeats < 1) throw ValidationError("config: cv.repeats must be >= 1");
  if (cv.folds < 2) throw ValidationError("config: cv.folds must be >= 2");
  for (const auto& g : groupings) (void)grouping_from_string(g);
  if (top_k < 1) throw ValidationError("config: cv.top_k must be >= 1");
  for (auto k : k_list)
    if (k < 1) throw ValidationError("config: cv.k_list entries must be >= 1");
  for (auto n : n_trees_grid)
    if (n < 1) throw ValidationError("config: cv.n_trees_grid entries must be >= 1");
  if (!n_trees_grid.empty() && backend.value("kind", std::string("forest")) != "forest")
    throw ValidationError("config: cv.n_trees_grid needs the forest backend");
  for (const auto& a : ablations)
    if (a.empty()) throw ValidationError("config: empty ablation list");
  if (workers < 1) throw ValidationError("config: workers must be >= 1");
}

namespace pipeline {

namespace {

struct Output {
  std::string dir;
  std::vector<std::string> written;
  std::vector<std::string> meta;
  json meta_json;

  Output(const RunConfig& config, const std::string& command)
      : dir(config.out_dir),
        meta(metadata_lines(config.to_json(), config.seed, command)),
        meta_json(metadata_json(config.to_json(), config.seed, command)) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory '" + dir + "': " + ec.message());
  }

  void write(const std::string& name, const std::string& content) {
    const auto path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << content;
    if (!out) throw ValidationError("write failed for '" + path + "'");
    written.push_back(path);
  }

  template <typename Fn>
  void csv(const std::string& name, Fn&& fn) {
    std::ostringstream s;
    fn(s, meta);
    write(name, s.str());
  }

  void json_file(const std::string& name, json body) {
    body["metadata"] = meta_json;
    write(name, body.dump(2) + "\n");
  }

  std::string comment() const {
    std::string c;
    for (const auto& m : meta) c += m + "\n";
    return c;
  }
};

std::string safe_name(const std::string& s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-') ? ch : '_';
  return out;
}

bool has_conventional(const SurvivalDataset& ds) { return !ds.columns_tagged(FeatureTag::conventional).empty(); }

// Cox models in the CV harness pick lambda by inner CV unless the config says otherwise.
json cv_backend_spec(json spec) {
  const auto kind = spec.value("kind", std::string("forest"));
  if ((kind == "cox_ridge" || kind == "cox_lasso") && !spec.contains("tune_lambda")) spec["tune_lambda"] = true;
  return spec;
}

}  // namespace

SurvivalDataset load_data(const RunConfig& config) {
  config.validate();
  if (config.data_path) return load_csv(*config.data_path, config.schema);
  SynthConfig s = *config.synth;
  s.seed = config.seed;
  return synth::generate(s).data;
}

std::vector<std::string> loco_columns(const SurvivalDataset& ds, const RunConfig& config) {
  std::vector<std::size_t> cols;
  if (config.loco_features == "all") {
    for (std::size_t j = 0; j < ds.cols(); ++j) cols.push_back(j);
  } else {
    cols = ds.columns_tagged(FeatureTag::dbm);
    if (cols.empty()) cols = ds.columns_tagged(FeatureTag::untagged);
  }
  if (cols.empty()) throw ValidationError("no DBM (or untagged) columns to score");
  std::vector<std::string> names;
  for (auto j : cols) names.push_back(ds.names()[j]);
  return names;
}

LocompParams loco_params(const RunConfig& config) {
  LocompParams p = config.loco;
  p.seed = config.seed;
  p.workers = config.workers;
  return p;
}

std::vector<std::string> cmd_synth(const RunConfig& config) {
  if (!config.synth) throw ValidationError("synth: the config has no 'synth' section");
  config.validate();
  SynthConfig s = *config.synth;
  s.seed = config.seed;
  const auto result = synth::generate(s);
  Output out(config, "synth");
  out.csv("data.csv", [&](std::ostream& o, const auto& meta) { write_csv(o, result.data, meta); });
  out.json_file("schema.json", schema_for(result.data).to_json());
  out.json_file("truth.json", result.truth.to_json());
  return out.written;
}

std::vector<std::string> cmd_loco(const RunConfig& config) {
  const auto ds = load_data(config);
  const auto grid = make_grid(ds, config.intervals);
  const auto sub = ds.select_columns(loco_columns(ds, config));
  const auto backend = make_patch_backend(config.backend, 1);
  auto report = locomp::run(sub, grid, *backend, loco_params(config));
  Output out(config, "loco");
  out.csv("occlusion.csv", [&](std::ostream& o, const auto& meta) { write_occlusion_csv(o, report, meta); });
  out.json_file("occlusion.json", report.to_json());
  return out.written;
}

std::vector<std::string> cmd_stability(const RunConfig& config) {
  const auto ds = load_data(config);
  const auto grid = make_grid(ds, config.intervals);
  const auto sub = ds.select_columns(loco_columns(ds, config));
  const auto backend = make_patch_backend(config.backend, 1);
  const auto loco = loco_params(config);

  SubsampleParams sp = config.subsample;
  sp.seed = derive_seed(config.seed, {0x51ULL});
  const auto dist = stability::subsample_ranks(sub, grid, *backend, loco, sp);
  const auto k_max = std::min(config.jaccard_k_max, sub.cols());
  const auto jac = stability::jaccard_curve(dist, k_max);

  std::vector<std::string> targets = config.permute;
  if (targets.empty()) targets.push_back(sub.names()[score_order(dist.full_score).front()]);
  stability::PermutationParams pp;
  pp.P = config.permutations;
  pp.seed = derive_seed(config.seed, {0x52ULL});
  pp.shared_patches = config.shared_patches;
  pp.workers = config.workers;
  const auto perms = stability::permutation_test(sub, grid, *backend, loco, targets, pp);

  Output out(config, "stability");
  out.csv("rank_distribution.csv", [&](std::ostream& o, const auto& m) { write_rank_distribution_csv(o, dist, m); });
  out.csv("rank_summary.csv", [&](std::ostream& o, const auto& m) { write_rank_summary_csv(o, dist, m); });
  out.csv("jaccard.csv", [&](std::ostream& o, const auto& m) { write_jaccard_csv(o, jac, m); });
  out.csv("permutation_ranks.csv", [&](std::ostream& o, const auto& m) { write_permutation_ranks_csv(o, perms, m); });
  out.csv("permutation_summary.csv",
          [&](std::ostream& o, const auto& m) { write_permutation_summary_csv(o, perms, &dist, m); });
  for (const auto& r : perms) {
    std::vector<double> values(r.permuted_ranks.begin(), r.permuted_ranks.end());
    std::vector<svg::Marker> markers{{"full-data rank", double(r.original_rank)}};
    const auto j = std::size_t(std::find(dist.features.begin(), dist.features.end(), r.feature) - dist.features.begin());
    if (!dist.ranks.empty()) markers.push_back({"median subsample rank", dist.median_rank(j)});
    out.write("permutation_" + safe_name(r.feature) + ".svg",
              svg::histogram(values, 1, int(sub.cols()), markers,
                             "Permuted ranks of " + r.feature + " (p = " + format_double(r.p_value) + ")", "rank",
                             out.comment()));
  }
  json body = {{"rank_distribution", dist.to_json()}, {"permutation", json::array()}};
  for (const auto& r : perms) body["permutation"].push_back(r.to_json());

  if (config.compare_rfimp) {
    ForestParams fp = config.rfimp;
    fp.workers = config.workers;
    const auto rf = stability::subsample_ranks(sub, rfimp_scorer(grid, fp), config.seed, sp, "rf_imp");
    const auto cmp = stability::compare_importance(dist, rf);
    out.csv("rfimp_rank_distribution.csv", [&](std::ostream& o, const auto& m) { write_rank_distribution_csv(o, rf, m); });
    out.csv("importance_comparison.csv", [&](std::ostream& o, const auto& m) { write_comparison_csv(o, dist, rf, m); });
    body["comparison"] = cmp.to_json();

    std::vector<svg::Series> series;
    const auto order = score_order(dist.full_score);
    for (std::size_t r = 0; r < std::min<std::size_t>(12, order.size()); ++r) {
      const auto j = order[r];
      for (const auto* d : {&dist, &rf}) {
        svg::Series s{dist.features[j] + " " + d->method, {}, d->method};
        for (const auto& ranks : d->ranks) s.values.push_back(double(ranks[j]));
        series.push_back(std::move(s));
      }
    }
    out.write("importance_comparison.svg",
              svg::boxplot(series, "Subsample rank spread: LOCO-MP vs RF-Imp", "rank", out.comment()));
  }
  out.json_file("stability.json", std::move(body));
  return out.written;
}

std::vector<std::string> cmd_cv(const RunConfig& config) {
  const auto ds = load_data(config);
  const auto grid = make_grid(ds, config.intervals);
  const auto backend = make_backend(cv_backend_spec(config.backend), 1);
  const auto patch_backend = make_patch_backend(config.backend, 1);
  const auto cols = loco_columns(ds, config);
  const auto loco = loco_params(config);

  std::vector<std::string> ranking;
  if (config.ranking_path) {
    std::ifstream in(*config.ranking_path);
    if (!in) throw ValidationError("cannot open ranking file '" + *config.ranking_path + "'");
    OcclusionReport rep;
    try {
      rep = OcclusionReport::from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ValidationError("ranking file '" + *config.ranking_path + "': " + e.what());
    }
    ranking = locomp::rank(rep, rep.M);
  } else {
    const auto rep = locomp::run(ds.select_columns(cols), grid, *patch_backend, loco);
    ranking = locomp::rank(rep, rep.M);
  }

  std::vector<GroupingKind> kinds;
  for (const auto& g : config.groupings) kinds.push_back(grouping_from_string(g));
  if (kinds.empty()) {
    for (auto k : {GroupingKind::conventional_only, GroupingKind::all_dbm, GroupingKind::conventional_plus_all_dbm,
                   GroupingKind::top_dbm, GroupingKind::conventional_plus_top_dbm})
      if (has_conventional(ds) || k == GroupingKind::all_dbm || k == GroupingKind::top_dbm) kinds.push_back(k);
  }
  std::vector<FeatureGrouping> groupings;
  for (auto k : kinds) groupings.push_back(make_grouping(k, ds, ranking, config.top_k));
  const auto base = groupings;
  for (const auto& omit : config.ablations) {
    bool used = false;
    for (const auto& g : base) {
      const bool contains_all = std::all_of(omit.begin(), omit.end(), [&](const std::string& n) {
        return std::find(g.columns.begin(), g.columns.end(), n) != g.columns.end();
      });
      if (contains_all && g.columns.size() > omit.size()) {
        groupings.push_back(ablate(g, omit));
        used = true;
      }
    }
    if (!used) throw ValidationError("ablation does not apply to any grouping");
  }

  CvParams cvp = config.cv;
  cvp.seed = config.seed;
  cvp.workers = config.workers;

  TopFeatureRanker ranker;
  if (config.refit_loco_per_fold) {
    LocompParams inner = loco;
    inner.workers = 1;
    ranker = [&, inner](const SurvivalDataset& train, std::uint64_t seed) {
      LocompParams p = inner;
      p.seed = seed;
      const auto rep = locomp::run(train.select_columns(cols), grid, *patch_backend, p);
      return locomp::rank(rep, rep.M);
    };
  }
  auto report = repeated_cv(ds, groupings, *backend, grid, cvp, ranker);
  report.outcome_label = config.outcome;

  Output out(config, "cv");
  out.csv("cindex.csv", [&](std::ostream& o, const auto& m) { write_cindex_csv(o, report, m); });
  json summary = report.summary();
  summary["ranking"] = ranking;
  summary["backend"] = backend->to_json();
  summary["refit_loco_per_fold"] = config.refit_loco_per_fold;

  std::vector<svg::Series> series;
  for (const auto& g : report.groupings) series.push_back({g, report.values(g), g});
  out.write("cindex.svg", svg::boxplot(series, "Test-set C-index (" + config.outcome + ", " + report.model + ")",
                                       "C-index", out.comment()));

  if (!config.k_list.empty()) {
    const auto sweep = topk_sweep(ds, ranking, config.k_list, *backend, grid, cvp, has_conventional(ds));
    out.csv("sweep.csv", [&](std::ostream& o, const auto& m) { write_sweep_csv(o, sweep, m); });
    std::vector<svg::Series> ss;
    json sj = json::array();
    for (std::size_t s = 0; s < sweep.ks.size(); ++s)
      for (const auto& g : sweep.reports[s].groupings) {
        ss.push_back({"k=" + std::to_string(sweep.ks[s]) + " " + g, sweep.reports[s].values(g), g});
        sj.push_back({{"k", sweep.ks[s]}, {"grouping", g}, {"median", sweep.reports[s].median(g)}});
      }
    summary["sweep"] = sj;
    out.write("sweep.svg", svg::boxplot(ss, "C-index by number of top DBM features", "C-index", out.comment()));
  }

  if (!config.n_trees_grid.empty()) {
    std::vector<CIndexReport> by_size;
    json nj = json::array();
    for (auto n : config.n_trees_grid) {
      auto spec = config.backend;
      spec["n_trees"] = n;
      const auto b = make_backend(spec, 1);
      by_size.push_back(repeated_cv(ds, groupings, *b, grid, cvp, ranker));
      for (const auto& g : by_size.back().groupings)
        nj.push_back({{"n_trees", n}, {"grouping", g}, {"median", by_size.back().median(g)}});
    }
    out.csv("ntrees.csv", [&](std::ostream& o, const auto& m) {
      for (const auto& line : m) o << "# " << line << '\n';
      o << "n_trees,grouping,repeat,fold,c_index\n";
      for (std::size_t s = 0; s < by_size.size(); ++s)
        for (const auto& c : by_size[s].cells)
          o << config.n_trees_grid[s] << ',' << c.grouping << ',' << c.repeat << ',' << c.fold << ','
            << (c.c_index ? format_double(*c.c_index) : "NA") << '\n';
    });
    summary["n_trees_grid"] = nj;
  }
  out.json_file("cindex_summary.json", std::move(summary));
  return out.written;
}

}  // namespace pipeline
}  // namespace survloco
