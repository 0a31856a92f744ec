#include "survloco/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "survloco/error.hpp"

namespace survloco {

const char* to_string(FeatureTag tag) {
  switch (tag) {
    case FeatureTag::conventional: return "conventional";
    case FeatureTag::dbm: return "dbm";
    default: return "untagged";
  }
}

SurvivalDataset::SurvivalDataset(Matrix features, std::vector<std::string> names, std::vector<double> times,
                                 std::vector<std::uint8_t> events, std::vector<FeatureTag> tags)
    : features_(std::move(features)),
      names_(std::move(names)),
      times_(std::move(times)),
      events_(std::move(events)),
      tags_(std::move(tags)) {
  if (tags_.empty()) tags_.assign(names_.size(), FeatureTag::untagged);
  if (static_cast<std::size_t>(features_.cols()) != names_.size())
    throw ValidationError("feature matrix has " + std::to_string(features_.cols()) + " columns but " +
                          std::to_string(names_.size()) + " names");
  if (tags_.size() != names_.size()) throw ValidationError("feature tag count does not match feature count");
  if (static_cast<std::size_t>(features_.rows()) != times_.size() || events_.size() != times_.size())
    throw ValidationError("row count mismatch between features, times and events");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_)
    if (!seen.insert(n).second) throw ValidationError("duplicate feature name '" + n + "'");
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (!(times_[i] > 0.0) || !std::isfinite(times_[i]))
      throw ValidationError("row " + std::to_string(i) + ": time must be positive and finite");
    if (events_[i] > 1) throw ValidationError("row " + std::to_string(i) + ": event must be 0 or 1");
  }
  if (!features_.allFinite()) throw ValidationError("feature matrix contains missing or non-finite values");
}

std::vector<double> SurvivalDataset::row(std::size_t i) const {
  std::vector<double> out(cols());
  for (std::size_t j = 0; j < cols(); ++j) out[j] = value(i, j);
  return out;
}

std::vector<double> SurvivalDataset::column(std::size_t j) const {
  const auto c = features_.col(Eigen::Index(j));
  return {c.data(), c.data() + c.size()};
}

std::size_t SurvivalDataset::event_count() const {
  return static_cast<std::size_t>(std::count(events_.begin(), events_.end(), std::uint8_t{1}));
}

std::size_t SurvivalDataset::column_index(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ValidationError("unknown feature '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<std::size_t> SurvivalDataset::columns_tagged(FeatureTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < tags_.size(); ++j)
    if (tags_[j] == tag) out.push_back(j);
  return out;
}

SurvivalDataset SurvivalDataset::select_columns(std::span<const std::size_t> cols) const {
  Matrix f(features_.rows(), Eigen::Index(cols.size()));
  std::vector<std::string> names;
  std::vector<FeatureTag> tags;
  names.reserve(cols.size());
  tags.reserve(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] >= this->cols()) throw ValidationError("column index out of range");
    f.col(Eigen::Index(k)) = features_.col(Eigen::Index(cols[k]));
    names.push_back(names_[cols[k]]);
    tags.push_back(tags_[cols[k]]);
  }
  return SurvivalDataset(std::move(f), std::move(names), times_, events_, std::move(tags));
}

SurvivalDataset SurvivalDataset::select_columns(const std::vector<std::string>& names) const {
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const auto& n : names) idx.push_back(column_index(n));
  return select_columns(idx);
}

SurvivalDataset SurvivalDataset::select_rows(std::span<const std::size_t> rows) const {
  Matrix f(Eigen::Index(rows.size()), features_.cols());
  std::vector<double> times(rows.size());
  std::vector<std::uint8_t> events(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= this->rows()) throw ValidationError("row index out of range");
    f.row(Eigen::Index(k)) = features_.row(Eigen::Index(rows[k]));
    times[k] = times_[rows[k]];
    events[k] = events_[rows[k]];
  }
  return SurvivalDataset(std::move(f), names_, std::move(times), std::move(events), tags_);
}

SurvivalDataset SurvivalDataset::with_column(std::size_t col, std::span<const double> values) const {
  if (col >= cols() || values.size() != rows()) throw ValidationError("with_column: shape mismatch");
  Matrix f = features_;
  for (std::size_t i = 0; i < rows(); ++i) f(Eigen::Index(i), Eigen::Index(col)) = values[i];
  return SurvivalDataset(std::move(f), names_, times_, events_, tags_);
}

bool operator==(const SurvivalDataset& a, const SurvivalDataset& b) {
  return a.names_ == b.names_ && a.tags_ == b.tags_ && a.times_ == b.times_ && a.events_ == b.events_ &&
         a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
         a.features_ == b.features_;
}

// ---------------------------------------------------------------------------
// CSV

CsvSchema CsvSchema::from_json(const nlohmann::json& j) {
  CsvSchema s;
  try {
    if (j.contains("time")) s.time = j.at("time").get<std::string>();
    if (j.contains("event")) s.event = j.at("event").get<std::string>();
    if (j.contains("conventional")) s.conventional = j.at("conventional").get<std::vector<std::string>>();
    if (j.contains("dbm")) s.dbm = j.at("dbm").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid schema: ") + e.what());
  }
  return s;
}

CsvSchema CsvSchema::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open schema file '" + path + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("schema file '" + path + "': " + e.what());
  }
}

nlohmann::json CsvSchema::to_json() const {
  return {{"time", time}, {"event", event}, {"conventional", conventional}, {"dbm", dbm}};
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_number(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* b = cell.data();
  const char* e = b + cell.size();
  if (*b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e && std::isfinite(out);
}

}  // namespace

SurvivalDataset read_csv(std::istream& in, const CsvSchema& schema, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = split_line(line);
    break;
  }
  if (header.empty()) throw ValidationError(source + ": missing header row");

  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (!pos.emplace(header[c], c).second)
      throw ValidationError(source + ": duplicate column '" + header[c] + "' in header");

  auto locate = [&](const std::string& name) {
    auto it = pos.find(name);
    if (it == pos.end()) throw ValidationError(source + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t time_col = locate(schema.time);
  const std::size_t event_col = locate(schema.event);

  std::vector<std::string> names;
  std::vector<FeatureTag> tags;
  std::vector<std::size_t> feature_cols;
  if (schema.conventional.empty() && schema.dbm.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == time_col || c == event_col) continue;
      names.push_back(header[c]);
      tags.push_back(FeatureTag::untagged);
      feature_cols.push_back(c);
    }
  } else {
    // Validate every listed column, then keep header order.
    std::unordered_set<std::string> listed;
    for (const auto* group : {&schema.conventional, &schema.dbm})
      for (const auto& n : *group) {
        (void)locate(n);
        if (!listed.insert(n).second) throw ValidationError(source + ": duplicate feature name '" + n + "'");
      }
    const std::unordered_set<std::string> conventional(schema.conventional.begin(), schema.conventional.end());
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == time_col || c == event_col || !listed.count(header[c])) continue;
      names.push_back(header[c]);
      tags.push_back(conventional.count(header[c]) ? FeatureTag::conventional : FeatureTag::dbm);
      feature_cols.push_back(c);
    }
  }
  if (names.empty()) throw ValidationError(source + ": schema selects no feature columns");
  {
    std::unordered_set<std::string> seen;
    for (const auto& n : names)
      if (!seen.insert(n).second) throw ValidationError(source + ": duplicate feature name '" + n + "'");
  }

  std::vector<double> values;
  std::vector<double> times;
  std::vector<std::uint8_t> events;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    auto cells = split_line(line);
    const std::string where = source + ": line " + std::to_string(line_no) + " (data row " +
                              std::to_string(data_row + 1) + ")";
    if (cells.size() != header.size())
      throw ValidationError(where + ": expected " + std::to_string(header.size()) + " cells, found " +
                            std::to_string(cells.size()));
    double t = 0.0;
    if (!parse_number(cells[time_col], t))
      throw ValidationError(where + ", column '" + schema.time + "': non-numeric or missing value '" +
                            cells[time_col] + "'");
    if (!(t > 0.0)) throw ValidationError(where + ", column '" + schema.time + "': time must be > 0");
    const std::string& ev = cells[event_col];
    if (ev != "0" && ev != "1")
      throw ValidationError(where + ", column '" + schema.event + "': event must be 0 or 1, got '" + ev + "'");
    times.push_back(t);
    events.push_back(ev == "1" ? 1 : 0);
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      double v = 0.0;
      if (!parse_number(cells[feature_cols[k]], v))
        throw ValidationError(where + ", column '" + names[k] + "': non-numeric or missing value '" +
                              cells[feature_cols[k]] + "'");
      values.push_back(v);
    }
    ++data_row;
  }
  if (times.empty()) throw ValidationError(source + ": no data rows");

  SurvivalDataset::Matrix f(Eigen::Index(times.size()), Eigen::Index(names.size()));
  for (std::size_t i = 0; i < times.size(); ++i)
    for (std::size_t j = 0; j < names.size(); ++j) f(Eigen::Index(i), Eigen::Index(j)) = values[i * names.size() + j];
  return SurvivalDataset(std::move(f), std::move(names), std::move(times), std::move(events), std::move(tags));
}

SurvivalDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_csv(in, schema, path);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const SurvivalDataset& ds, const std::vector<std::string>& metadata) {
  for (const auto& m : metadata) out << "# " << m << '\n';
  out << "time,event";
  for (const auto& n : ds.names()) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    out << format_double(ds.times()[i]) << ',' << int(ds.events()[i]);
    for (std::size_t j = 0; j < ds.cols(); ++j) out << ',' << format_double(ds.value(i, j));
    out << '\n';
  }
}

CsvSchema schema_for(const SurvivalDataset& ds) {
  CsvSchema s;
  bool tagged = false;
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    if (ds.tags()[j] == FeatureTag::conventional) s.conventional.push_back(ds.names()[j]);
    if (ds.tags()[j] == FeatureTag::dbm) s.dbm.push_back(ds.names()[j]);
    tagged = tagged || ds.tags()[j] != FeatureTag::untagged;
  }
  // A partially tagged dataset cannot be described by the two lists alone.
  if (tagged && s.conventional.size() + s.dbm.size() != ds.cols())
    throw ValidationError("schema_for: dataset mixes tagged and untagged features");
  return s;
}

// ---------------------------------------------------------------------------

SurvivalDataset variance_filter(const SurvivalDataset& ds, double threshold,
                                const std::set<std::string>& protected_names) {
  if (threshold < 0.0) throw ValidationError("variance threshold must be >= 0");
  for (const auto& p : protected_names) (void)ds.column_index(p);
  std::vector<std::size_t> keep;
  const auto n = static_cast<double>(ds.rows());
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    if (protected_names.count(ds.names()[j])) {
      keep.push_back(j);
      continue;
    }
    double var = 0.0;
    if (ds.rows() > 1) {
      const auto col = ds.features().col(Eigen::Index(j));
      const double mean = col.mean();
      var = (col.array() - mean).square().sum() / (n - 1.0);
    }
    if (var >= threshold) keep.push_back(j);
  }
  return ds.select_columns(keep);
}

// ---------------------------------------------------------------------------

TimeGrid TimeGrid::equal_width(double end, int intervals) {
  if (intervals < 1) throw ValidationError("time grid needs at least one interval");
  if (!(end > 0.0) || !std::isfinite(end)) throw ValidationError("time grid end must be positive");
  std::vector<double> b(std::size_t(intervals) + 1);
  const double width = end / intervals;
  for (int s = 0; s < intervals; ++s) b[std::size_t(s)] = width * s;
  b.back() = end;
  return from_boundaries(std::move(b));
}

TimeGrid TimeGrid::from_boundaries(std::vector<double> boundaries) {
  if (boundaries.size() < 2) throw ValidationError("time grid needs at least two boundaries");
  if (boundaries.front() != 0.0) throw ValidationError("time grid must start at 0");
  for (std::size_t s = 1; s < boundaries.size(); ++s)
    if (!(boundaries[s] > boundaries[s - 1])) throw ValidationError("time grid boundaries must increase");
  TimeGrid g;
  g.boundaries_ = std::move(boundaries);
  return g;
}

int TimeGrid::interval_of(double t) const {
  if (!(t >= 0.0)) throw ValidationError("interval_of: negative or NaN time");
  const int d = intervals();
  if (t >= boundaries_.back()) return d - 1;
  // upper_bound gives the first boundary > t; t lies in [b[s], b[s+1]).
  auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), t);
  return std::min(static_cast<int>(it - boundaries_.begin()) - 1, d - 1);
}

nlohmann::json TimeGrid::to_json() const { return {{"boundaries", boundaries_}}; }

TimeGrid TimeGrid::from_json(const nlohmann::json& j) {
  return from_boundaries(j.at("boundaries").get<std::vector<double>>());
}

TimeGrid make_grid(const SurvivalDataset& ds, int intervals) {
  if (intervals < 2) throw ValidationError("discretize: need at least 2 intervals");
  if (ds.rows() == 0) throw ValidationError("discretize: empty dataset");
  const double tmax = *std::max_element(ds.times().begin(), ds.times().end());
  return TimeGrid::equal_width(tmax * (1.0 + 1e-9), intervals);
}

Discretized discretize(const SurvivalDataset& ds, int intervals) {
  Discretized out{make_grid(ds, intervals), {}, ds.events()};
  out.interval.reserve(ds.rows());
  for (double t : ds.times()) out.interval.push_back(out.grid.interval_of(t));
  return out;
}

}  // namespace survloco
