#include "survloco/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "survloco/eval.hpp"

namespace survloco::svg {

namespace {

constexpr double kWidthPerBox = 60.0;
constexpr double kHeight = 360.0;
constexpr double kLeft = 60.0, kRight = 20.0, kTop = 40.0, kBottom = 90.0;
const char* const kPalette[] = {"#8ecae6", "#ffb703", "#90be6d", "#f28482", "#b8b8ff", "#cdb4db"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void header(std::ostringstream& out, double w, double h, const std::string& comment) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (!comment.empty()) {
    std::string c = comment;
    for (std::size_t p; (p = c.find("--")) != std::string::npos;) c.replace(p, 2, "- -");
    out << "<!--\n" << c << "\n-->\n";
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void y_axis(std::ostringstream& out, double lo, double hi, double plot_w, const std::string& label) {
  const double plot_h = kHeight - kTop - kBottom;
  for (int t = 0; t <= 5; ++t) {
    const double v = lo + (hi - lo) * t / 5.0;
    const double y = kTop + plot_h * (1.0 - t / 5.0);
    out << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(y) << "\" x2=\"" << num(kLeft + plot_w) << "\" y2=\""
        << num(y) << "\" stroke=\"#eee\"/>\n";
    out << "<text x=\"" << num(kLeft - 4) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  out << "<text transform=\"translate(14," << num(kTop + plot_h / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(label) << "</text>\n";
}

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string boxplot(const std::vector<Series>& series, const std::string& title, const std::string& y_label,
                    const std::string& comment) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double plot_w = kWidthPerBox * double(std::max<std::size_t>(series.size(), 1));
  const double plot_h = kHeight - kTop - kBottom;
  const auto y_of = [&](double v) { return kTop + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream out;
  header(out, kLeft + plot_w + kRight, kHeight, comment);
  out << "<text x=\"" << num((kLeft + plot_w + kRight) / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
      << escape(title) << "</text>\n";
  y_axis(out, lo, hi, plot_w, y_label);

  std::vector<std::string> groups;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string group = s.group.empty() ? s.label : s.group;
    auto g = std::find(groups.begin(), groups.end(), group);
    if (g == groups.end()) g = groups.insert(groups.end(), group);
    const char* fill = kPalette[std::size_t(g - groups.begin()) % std::size(kPalette)];
    const double cx = kLeft + kWidthPerBox * (double(k) + 0.5);
    if (!s.values.empty()) {
      const double q1 = quantile(s.values, 0.25), q2 = quantile(s.values, 0.5), q3 = quantile(s.values, 0.75);
      const double iqr = q3 - q1;
      double wlo = q1, whi = q3;
      for (double v : s.values) {
        if (v >= q1 - 1.5 * iqr) wlo = std::min(wlo, v);
        if (v <= q3 + 1.5 * iqr) whi = std::max(whi, v);
      }
      const double bw = kWidthPerBox * 0.6;
      out << "<line x1=\"" << num(cx) << "\" y1=\"" << num(y_of(wlo)) << "\" x2=\"" << num(cx) << "\" y2=\""
          << num(y_of(whi)) << "\" stroke=\"black\"/>\n";
      out << "<rect x=\"" << num(cx - bw / 2) << "\" y=\"" << num(y_of(q3)) << "\" width=\"" << num(bw)
          << "\" height=\"" << num(std::max(0.5, y_of(q1) - y_of(q3))) << "\" fill=\"" << fill
          << "\" stroke=\"black\"/>\n";
      out << "<line x1=\"" << num(cx - bw / 2) << "\" y1=\"" << num(y_of(q2)) << "\" x2=\"" << num(cx + bw / 2)
          << "\" y2=\"" << num(y_of(q2)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
      for (double v : s.values)
        if (v < wlo || v > whi)
          out << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(y_of(v)) << "\" r=\"2\" fill=\"none\" stroke=\"black\"/>\n";
      out << "<text x=\"" << num(cx) << "\" y=\"" << num(y_of(whi) - 4) << "\" text-anchor=\"middle\">" << num(q2)
          << "</text>\n";
    }
    out << "<text transform=\"translate(" << num(cx + 4) << "," << num(kHeight - kBottom + 8)
        << ") rotate(45)\">" << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string histogram(const std::vector<double>& values, int lo, int hi, const std::vector<Marker>& markers,
                      const std::string& title, const std::string& x_label, const std::string& comment) {
  if (hi < lo) std::swap(lo, hi);
  const std::size_t bins = std::size_t(hi - lo + 1);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    const long b = std::lround(v) - lo;
    if (b >= 0 && std::size_t(b) < bins) ++counts[std::size_t(b)];
  }
  const double top = double(std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end())));
  const double bar_w = std::max(6.0, 480.0 / double(bins));
  const double plot_w = bar_w * double(bins);
  const double plot_h = kHeight - kTop - kBottom;
  const auto x_of = [&](double v) { return kLeft + (v - lo + 0.5) * bar_w; };

  std::ostringstream out;
  header(out, kLeft + plot_w + kRight, kHeight, comment);
  out << "<text x=\"" << num((kLeft + plot_w + kRight) / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">"
      << escape(title) << "</text>\n";
  y_axis(out, 0.0, top, plot_w, "count");
  for (std::size_t b = 0; b < bins; ++b) {
    const double h = plot_h * double(counts[b]) / top;
    out << "<rect x=\"" << num(kLeft + double(b) * bar_w) << "\" y=\"" << num(kTop + plot_h - h) << "\" width=\""
        << num(bar_w - 1) << "\" height=\"" << num(h) << "\" fill=\"#8ecae6\" stroke=\"#457b9d\"/>\n";
  }
  const std::size_t step = std::max<std::size_t>(1, bins / 10);
  for (std::size_t b = 0; b < bins; b += step)
    out << "<text x=\"" << num(x_of(double(lo) + double(b))) << "\" y=\"" << num(kTop + plot_h + 14)
        << "\" text-anchor=\"middle\">" << (lo + int(b)) << "</text>\n";
  out << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(kTop + plot_h + 32) << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
  const char* colors[] = {"#d62828", "#2a9d8f", "#6a4c93"};
  for (std::size_t k = 0; k < markers.size(); ++k) {
    const double x = x_of(markers[k].value);
    const char* c = colors[k % std::size(colors)];
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(x) << "\" y2=\""
        << num(kTop + plot_h) << "\" stroke=\"" << c << "\" stroke-dasharray=\"4 3\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(kLeft + 4) << "\" y=\"" << num(kTop + plot_h + 50 + 14 * double(k)) << "\" fill=\"" << c
        << "\">" << escape(markers[k].label) << " = " << num(markers[k].value) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace survloco::svg
