#include "survloco/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "survloco/error.hpp"
#include "survloco/parallel.hpp"

namespace survloco {

namespace eval {

namespace {

class Fenwick {
public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of inserted positions < i.
  std::uint64_t prefix(std::size_t i) const {
    std::uint64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

private:
  std::vector<std::uint64_t> tree_;
};

}  // namespace

ConcordanceCounts concordance(std::span<const double> risks, std::span<const double> times,
                              std::span<const std::uint8_t> events) {
  const std::size_t n = risks.size();
  if (times.size() != n || events.size() != n) throw ValidationError("c_index: length mismatch");

  std::vector<double> levels(risks.begin(), risks.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<std::size_t> level(n);
  for (std::size_t i = 0; i < n; ++i)
    level[i] = std::size_t(std::lower_bound(levels.begin(), levels.end(), risks[i]) - levels.begin());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });

  ConcordanceCounts out;
  Fenwick later(levels.size());
  std::uint64_t later_count = 0;
  std::vector<std::size_t> censored_here;
  for (std::size_t g = 0; g < n;) {
    std::size_t h = g;
    while (h < n && times[order[h]] == times[order[g]]) ++h;
    censored_here.clear();
    for (std::size_t k = g; k < h; ++k)
      if (!events[order[k]]) censored_here.push_back(level[order[k]]);
    std::sort(censored_here.begin(), censored_here.end());

    for (std::size_t k = g; k < h; ++k) {
      const auto i = order[k];
      if (!events[i]) continue;
      const auto li = level[i];
      // Subjects with strictly later times.
      const std::uint64_t below = later.prefix(li);
      const std::uint64_t at_or_below = later.prefix(li + 1);
      out.concordant += below;
      out.tied += at_or_below - below;
      out.comparable += later_count;
      // Censored subjects sharing this time.
      const auto lo = std::lower_bound(censored_here.begin(), censored_here.end(), li);
      const auto hi = std::upper_bound(censored_here.begin(), censored_here.end(), li);
      out.concordant += std::uint64_t(lo - censored_here.begin());
      out.tied += std::uint64_t(hi - lo);
      out.comparable += censored_here.size();
    }
    for (std::size_t k = g; k < h; ++k) later.add(level[order[k]]);
    later_count += h - g;
    g = h;
  }
  return out;
}

std::optional<double> try_c_index(std::span<const double> risks, std::span<const double> times,
                                  std::span<const std::uint8_t> events) {
  const auto c = concordance(risks, times, events);
  if (c.comparable == 0) return std::nullopt;
  return c.value();
}

double c_index(std::span<const double> risks, std::span<const double> times, std::span<const std::uint8_t> events) {
  if (risks.size() < 2) throw ValidationError("c_index: need at least two subjects");
  const auto c = try_c_index(risks, times, events);
  if (!c) throw ValidationError("c_index: no comparable pairs");
  return *c;
}

std::vector<int> stratified_folds(std::span<const std::uint8_t> events, int folds, Rng& rng) {
  if (folds < 2) throw ValidationError("need at least 2 folds");
  std::vector<std::size_t> ev, cens;
  for (std::size_t i = 0; i < events.size(); ++i) (events[i] ? ev : cens).push_back(i);
  shuffle(rng, std::span<std::size_t>(ev));
  shuffle(rng, std::span<std::size_t>(cens));
  std::vector<int> fold(events.size(), 0);
  std::size_t pos = 0;
  for (auto i : ev) fold[i] = int(pos++ % std::size_t(folds));
  for (auto i : cens) fold[i] = int(pos++ % std::size_t(folds));
  return fold;
}

std::vector<int> random_folds(std::size_t n, int folds, Rng& rng) {
  if (folds < 2) throw ValidationError("need at least 2 folds");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle(rng, std::span<std::size_t>(idx));
  std::vector<int> fold(n, 0);
  for (std::size_t p = 0; p < n; ++p) fold[idx[p]] = int(p % std::size_t(folds));
  return fold;
}

}  // namespace eval

// ---------------------------------------------------------------------------

const char* to_string(GroupingKind kind) {
  switch (kind) {
    case GroupingKind::conventional_only: return "conventional_only";
    case GroupingKind::all_dbm: return "all_dbm";
    case GroupingKind::conventional_plus_all_dbm: return "conventional_plus_all_dbm";
    case GroupingKind::top_dbm: return "top_dbm";
    case GroupingKind::conventional_plus_top_dbm: return "conventional_plus_top_dbm";
  }
  return "?";
}

GroupingKind grouping_from_string(const std::string& s) {
  for (auto k : {GroupingKind::conventional_only, GroupingKind::all_dbm, GroupingKind::conventional_plus_all_dbm,
                 GroupingKind::top_dbm, GroupingKind::conventional_plus_top_dbm})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown grouping '" + s + "'");
}

bool uses_top_features(GroupingKind kind) {
  return kind == GroupingKind::top_dbm || kind == GroupingKind::conventional_plus_top_dbm;
}

FeatureGrouping make_grouping(GroupingKind kind, const SurvivalDataset& ds, const std::vector<std::string>& ranked_dbm,
                              std::size_t top_k) {
  auto dbm = ds.columns_tagged(FeatureTag::dbm);
  if (dbm.empty()) dbm = ds.columns_tagged(FeatureTag::untagged);
  const auto conventional = ds.columns_tagged(FeatureTag::conventional);

  std::set<std::size_t> chosen;
  const bool with_conventional = kind == GroupingKind::conventional_only ||
                                 kind == GroupingKind::conventional_plus_all_dbm ||
                                 kind == GroupingKind::conventional_plus_top_dbm;
  if (with_conventional) chosen.insert(conventional.begin(), conventional.end());
  if (kind == GroupingKind::all_dbm || kind == GroupingKind::conventional_plus_all_dbm)
    chosen.insert(dbm.begin(), dbm.end());

  FeatureGrouping g;
  g.kind = kind;
  g.name = to_string(kind);
  if (uses_top_features(kind)) {
    if (top_k == 0) throw ValidationError("grouping " + g.name + ": top_k must be >= 1");
    if (top_k > ranked_dbm.size())
      throw ValidationError("grouping " + g.name + ": top_k=" + std::to_string(top_k) + " exceeds the " +
                            std::to_string(ranked_dbm.size()) + " ranked features");
    const std::set<std::size_t> dbm_set(dbm.begin(), dbm.end());
    for (std::size_t r = 0; r < top_k; ++r) {
      const auto j = ds.column_index(ranked_dbm[r]);
      if (!dbm_set.count(j)) throw ValidationError("ranked feature '" + ranked_dbm[r] + "' is not a DBM feature");
      chosen.insert(j);
    }
    g.top_k = top_k;
  }
  for (auto j : chosen) g.columns.push_back(ds.names()[j]);
  if (g.columns.empty()) throw ValidationError("grouping " + g.name + " selects no columns");
  return g;
}

std::vector<FeatureGrouping> standard_groupings(const SurvivalDataset& ds, const std::vector<std::string>& ranked_dbm,
                                                std::size_t top_k) {
  std::vector<FeatureGrouping> out;
  for (auto k : {GroupingKind::conventional_only, GroupingKind::all_dbm, GroupingKind::conventional_plus_all_dbm,
                 GroupingKind::top_dbm, GroupingKind::conventional_plus_top_dbm})
    out.push_back(make_grouping(k, ds, ranked_dbm, top_k));
  return out;
}

FeatureGrouping ablate(const FeatureGrouping& grouping, const std::vector<std::string>& omit) {
  FeatureGrouping g = grouping;
  std::string suffix;
  for (const auto& name : omit) {
    auto it = std::find(g.columns.begin(), g.columns.end(), name);
    if (it == g.columns.end())
      throw ValidationError("ablate: '" + name + "' is not in grouping " + grouping.name);
    g.columns.erase(it);
    g.omitted.push_back(name);
    suffix += "-" + name;
  }
  if (g.columns.empty()) throw ValidationError("ablate: omitting these columns empties grouping " + grouping.name);
  g.name += "-minus" + suffix;
  return g;
}

// ---------------------------------------------------------------------------

nlohmann::json CvParams::to_json() const {
  return {{"repeats", repeats}, {"folds", folds}, {"seed", seed}, {"stratify", stratify}};
}

CvParams CvParams::from_json(const nlohmann::json& j) {
  CvParams p;
  p.repeats = j.value("repeats", p.repeats);
  p.folds = j.value("folds", p.folds);
  p.seed = j.value("seed", p.seed);
  p.stratify = j.value("stratify", p.stratify);
  return p;
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double quantile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double h = (double(values.size()) - 1.0) * p;
  const auto lo = std::size_t(std::floor(h));
  const auto hi = std::min(values.size() - 1, lo + 1);
  return values[lo] + (h - double(lo)) * (values[hi] - values[lo]);
}

std::vector<double> CIndexReport::values(const std::string& grouping) const {
  std::vector<double> out;
  for (const auto& c : cells)
    if (c.grouping == grouping && c.c_index) out.push_back(*c.c_index);
  return out;
}

double CIndexReport::median(const std::string& grouping) const { return survloco::median(values(grouping)); }

std::size_t CIndexReport::missing(const std::string& grouping) const {
  return std::size_t(std::count_if(cells.begin(), cells.end(),
                                   [&](const CIndexCell& c) { return c.grouping == grouping && !c.c_index; }));
}

nlohmann::json CIndexReport::summary() const {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : groupings) {
    const auto v = values(g);
    groups.push_back({{"grouping", g},
                      {"median", v.empty() ? nlohmann::json(nullptr) : nlohmann::json(survloco::median(v))},
                      {"cells", v.size()},
                      {"missing", missing(g)}});
  }
  return {{"model", model}, {"outcome", outcome_label}, {"cv", params.to_json()}, {"groupings", std::move(groups)}};
}

namespace {

std::uint64_t fnv1a(const std::vector<std::size_t>& idx) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto v : idx) {
    for (int b = 0; b < 8; ++b) {
      h ^= (std::uint64_t(v) >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace

CIndexReport repeated_cv(const SurvivalDataset& ds, const std::vector<FeatureGrouping>& groupings,
                         const Backend& backend, const TimeGrid& grid, const CvParams& params,
                         const TopFeatureRanker& refit_ranker) {
  if (params.repeats < 1) throw ValidationError("cv: repeats must be >= 1");
  if (params.folds < 2) throw ValidationError("cv: folds must be >= 2");
  if (groupings.empty()) throw ValidationError("cv: no groupings");
  for (const auto& g : groupings)
    for (const auto& c : g.columns) (void)ds.column_index(c);

  const auto R = std::size_t(params.repeats), F = std::size_t(params.folds);
  std::vector<std::vector<std::size_t>> train_idx(R * F), test_idx(R * F);
  std::vector<std::uint64_t> hashes(R * F);
  for (std::size_t r = 0; r < R; ++r) {
    Rng rng = make_rng(params.seed, {0xc5ULL, r});
    const auto fold_of = params.stratify ? eval::stratified_folds(ds.events(), params.folds, rng)
                                         : eval::random_folds(ds.rows(), params.folds, rng);
    for (std::size_t i = 0; i < ds.rows(); ++i)
      for (std::size_t f = 0; f < F; ++f) (std::size_t(fold_of[i]) == f ? test_idx : train_idx)[r * F + f].push_back(i);
    for (std::size_t f = 0; f < F; ++f) {
      std::size_t events = 0;
      for (auto i : train_idx[r * F + f]) events += ds.events()[i];
      if (events == 0)
        throw ValidationError("cv: training split of repeat " + std::to_string(r) + " fold " + std::to_string(f) +
                              " has no events");
      hashes[r * F + f] = fnv1a(test_idx[r * F + f]);
    }
  }

  // Per-split rankings for refit mode, computed once and shared by all groupings.
  std::vector<std::vector<std::string>> refit_rankings;
  const bool refit = static_cast<bool>(refit_ranker) &&
                     std::any_of(groupings.begin(), groupings.end(), [](const FeatureGrouping& g) { return uses_top_features(g.kind); });
  if (refit) {
    refit_rankings.resize(R * F);
    for (std::size_t s = 0; s < R * F; ++s)
      refit_rankings[s] = refit_ranker(ds.select_rows(train_idx[s]), derive_seed(params.seed, {0x70bULL, s}));
  }

  CIndexReport report;
  report.model = backend.id();
  report.params = params;
  for (const auto& g : groupings) report.groupings.push_back(g.name);
  report.cells.resize(groupings.size() * R * F);

  parallel_for(report.cells.size(), params.workers, [&](std::size_t cell) {
    const std::size_t gi = cell / (R * F);
    const std::size_t split = cell % (R * F);
    const auto& g = groupings[gi];
    std::vector<std::string> columns = g.columns;
    if (refit && uses_top_features(g.kind)) {
      auto regrouped = make_grouping(g.kind, ds, refit_rankings[split], g.top_k);
      if (!g.omitted.empty()) regrouped = ablate(regrouped, g.omitted);
      columns = regrouped.columns;
    }
    const auto sub = ds.select_columns(columns);
    const auto train = sub.select_rows(train_idx[split]);
    const auto test = sub.select_rows(test_idx[split]);
    const auto model = backend.fit(train, grid, derive_seed(params.seed, {0x3a1ULL, split}));
    std::vector<double> risks(test.rows());
    for (std::size_t i = 0; i < test.rows(); ++i) risks[i] = model->risk(test.row(i));

    auto& out = report.cells[cell];
    out.grouping = g.name;
    out.repeat = int(split / F);
    out.fold = int(split % F);
    out.partition_hash = hashes[split];
    out.c_index = eval::try_c_index(risks, test.times(), test.events());
  });
  return report;
}

SweepReport topk_sweep(const SurvivalDataset& ds, const std::vector<std::string>& ranked_dbm,
                       const std::vector<std::size_t>& ks, const Backend& backend, const TimeGrid& grid,
                       const CvParams& params, bool include_conventional) {
  if (ks.empty()) throw ValidationError("topk_sweep: empty k range");
  SweepReport sweep;
  for (auto k : ks) {
    std::vector<FeatureGrouping> groups{make_grouping(GroupingKind::top_dbm, ds, ranked_dbm, k)};
    if (include_conventional) groups.push_back(make_grouping(GroupingKind::conventional_plus_top_dbm, ds, ranked_dbm, k));
    sweep.ks.push_back(k);
    sweep.reports.push_back(repeated_cv(ds, groups, backend, grid, params));
  }
  return sweep;
}

void write_cindex_csv(std::ostream& out, const CIndexReport& report, const std::vector<std::string>& metadata) {
  for (const auto& m : metadata) out << "# " << m << '\n';
  out << "grouping,repeat,fold,c_index\n";
  for (const auto& c : report.cells)
    out << c.grouping << ',' << c.repeat << ',' << c.fold << ',' << (c.c_index ? format_double(*c.c_index) : "NA")
        << '\n';
}

void write_sweep_csv(std::ostream& out, const SweepReport& sweep, const std::vector<std::string>& metadata) {
  for (const auto& m : metadata) out << "# " << m << '\n';
  out << "k,grouping,repeat,fold,c_index\n";
  for (std::size_t s = 0; s < sweep.ks.size(); ++s)
    for (const auto& c : sweep.reports[s].cells)
      out << sweep.ks[s] << ',' << c.grouping << ',' << c.repeat << ',' << c.fold << ','
          << (c.c_index ? format_double(*c.c_index) : "NA") << '\n';
}

}  // namespace survloco
