#pragma once

#include <string>
#include <vector>

namespace survloco::svg {

struct Series {
  std::string label;
  std::vector<double> values;
  std::string group;  // series sharing a group get the same fill
};

struct Marker {
  std::string label;
  double value = 0.0;
};

// Tukey boxplots (whiskers at 1.5 IQR), one per series, with the median printed above each box.
std::string boxplot(const std::vector<Series>& series, const std::string& title, const std::string& y_label,
                    const std::string& comment = {});

// Histogram of integer-valued data (one bar per value in [lo, hi]) with
// vertical marker lines.
std::string histogram(const std::vector<double>& values, int lo, int hi, const std::vector<Marker>& markers,
                      const std::string& title, const std::string& x_label, const std::string& comment = {});

std::string escape(const std::string& text);

}  // namespace survloco::svg
