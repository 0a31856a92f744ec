#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace survloco {

enum class FeatureTag { untagged, conventional, dbm };

const char* to_string(FeatureTag tag);

// Right-censored tabular survival data: an N x M feature matrix plus one
// (time, event) outcome per row. Immutable once built; every constructor
// path validates the invariants and throws ValidationError otherwise.
class SurvivalDataset {
public:
  using Matrix = Eigen::MatrixXd;  // column-major, so column scans are contiguous

  SurvivalDataset() = default;
  SurvivalDataset(Matrix features, std::vector<std::string> names, std::vector<double> times,
                  std::vector<std::uint8_t> events, std::vector<FeatureTag> tags = {});

  std::size_t rows() const { return times_.size(); }
  std::size_t cols() const { return names_.size(); }

  const Matrix& features() const { return features_; }
  double value(std::size_t row, std::size_t col) const { return features_(Eigen::Index(row), Eigen::Index(col)); }
  std::vector<double> row(std::size_t i) const;
  std::vector<double> column(std::size_t j) const;

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<std::uint8_t>& events() const { return events_; }
  const std::vector<FeatureTag>& tags() const { return tags_; }

  std::size_t event_count() const;
  std::size_t column_index(const std::string& name) const;
  std::vector<std::size_t> columns_tagged(FeatureTag tag) const;

  SurvivalDataset select_columns(std::span<const std::size_t> cols) const;
  SurvivalDataset select_columns(const std::vector<std::string>& names) const;
  SurvivalDataset select_rows(std::span<const std::size_t> rows) const;
  SurvivalDataset with_column(std::size_t col, std::span<const double> values) const;

  friend bool operator==(const SurvivalDataset& a, const SurvivalDataset& b);

private:
  Matrix features_;
  std::vector<std::string> names_;
  std::vector<double> times_;
  std::vector<std::uint8_t> events_;
  std::vector<FeatureTag> tags_;
};

// Column roles for CSV ingestion. When both feature lists are empty, every
// column other than time/event becomes an untagged feature.
struct CsvSchema {
  std::string time = "time";
  std::string event = "event";
  std::vector<std::string> conventional;
  std::vector<std::string> dbm;

  static CsvSchema from_json(const nlohmann::json& j);
  static CsvSchema from_file(const std::string& path);
  nlohmann::json to_json() const;
};

SurvivalDataset read_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "<stream>");
SurvivalDataset load_csv(const std::string& path, const CsvSchema& schema);

// Writes header "time,event,<features...>" with shortest round-trip decimal
// formatting, so read_csv(write_csv(ds)) reproduces ds bit-exactly. Lines
// starting with '#' are metadata and skipped on read.
void write_csv(std::ostream& out, const SurvivalDataset& ds, const std::vector<std::string>& metadata = {});
CsvSchema schema_for(const SurvivalDataset& ds);

// Shortest decimal that parses back to the same double.
std::string format_double(double v);

// Keeps features whose sample variance is >= threshold, plus everything named
// in `protected_names`. Column order is preserved.
SurvivalDataset variance_filter(const SurvivalDataset& ds, double threshold,
                                const std::set<std::string>& protected_names = {});

// d equal-width intervals [t_s, t_{s+1}) over [0, end]; the last interval is
// closed on the right.
class TimeGrid {
public:
  TimeGrid() = default;
  static TimeGrid equal_width(double end, int intervals);
  static TimeGrid from_boundaries(std::vector<double> boundaries);

  int intervals() const { return static_cast<int>(boundaries_.size()) - 1; }
  double end() const { return boundaries_.back(); }
  const std::vector<double>& boundaries() const { return boundaries_; }

  // Interval index in [0, d). Times past the end clamp into the last interval.
  int interval_of(double t) const;

  nlohmann::json to_json() const;
  static TimeGrid from_json(const nlohmann::json& j);

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
  std::vector<double> boundaries_;
};

inline constexpr int kDefaultIntervals = 16;

struct Discretized {
  TimeGrid grid;
  std::vector<int> interval;
  std::vector<std::uint8_t> events;
};

// Equal-width grid over [0, max time + eps] with eps relative to max time, so
// the maximum lands inside the last interval.
Discretized discretize(const SurvivalDataset& ds, int intervals = kDefaultIntervals);
TimeGrid make_grid(const SurvivalDataset& ds, int intervals = kDefaultIntervals);

}  // namespace survloco
