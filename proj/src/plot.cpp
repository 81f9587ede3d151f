#include "gmah/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gmah/checkpoint.hpp"
#include "gmah/error.hpp"

namespace gmah {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    } else if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

}  // namespace

std::vector<double> smooth(std::span<const double> series, double weight) {
  if (series.empty()) throw DomainError("cannot smooth an empty series");
  if (!(weight >= 0.0 && weight < 1.0)) throw DomainError("smoothing weight must lie in [0, 1)");
  std::vector<double> out(series.size());
  double last = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double x = series[i];
    if (std::isnan(x)) {
      out[i] = x;
      continue;
    }
    last = std::isnan(last) ? x : weight * last + (1.0 - weight) * x;
    out[i] = last;
  }
  return out;
}

bool CsvTable::has(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw SchemaError("missing column '" + name + "'");
  const std::size_t k = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[k]);
  return out;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw SchemaError(path.string() + ": missing header");
  t.columns = split(line);
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.columns.size())
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + " has " +
                        std::to_string(cells.size()) + " cells, expected " + std::to_string(t.columns.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      if (c == "nan" || c.empty()) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (end == c.c_str() || *end != '\0')
        throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": not a number '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string render_curves(const std::vector<CurveRun>& runs, const CurveOptions& opts) {
  if (runs.empty()) throw DomainError("no runs to plot");
  if (opts.columns.empty()) throw DomainError("no columns to plot");

  struct Series {
    std::string label;
    std::vector<double> x, raw, smoothed;
  };
  std::vector<Series> series;
  Range xr, yr;
  for (const auto& run : runs) {
    const CsvTable t = read_csv(run.csv);
    const auto x = t.column(opts.x_column);
    for (const auto& col : opts.columns) {
      Series s;
      s.label = opts.columns.size() > 1 ? run.label + " " + col : run.label;
      s.x = x;
      s.raw = t.column(col);
      s.smoothed = s.raw.empty() ? s.raw : smooth(s.raw, opts.weight);
      for (double v : s.x) xr.add(v);
      for (double v : s.raw) yr.add(v);
      series.push_back(std::move(s));
    }
  }
  xr.finish();
  yr.finish();

  constexpr double W = 820, H = 480, L = 70, R = 190, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return T + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 "
    << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  if (!opts.title.empty())
    o << "<text x=\"" << fmt(L + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(opts.title)
      << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0, yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    o << "<line x1=\"" << fmt(px(xv)) << "\" y1=\"" << fmt(T + ph) << "\" x2=\"" << fmt(px(xv)) << "\" y2=\""
      << fmt(T + ph + 5) << "\" stroke=\"#444\"/>\n";
    o << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << fmt(T + ph + 18) << "\" text-anchor=\"middle\">"
      << tick_label(xv) << "</text>\n";
    o << "<line x1=\"" << fmt(L - 5) << "\" y1=\"" << fmt(py(yv)) << "\" x2=\"" << fmt(L) << "\" y2=\""
      << fmt(py(yv)) << "\" stroke=\"#444\"/>\n";
    o << "<text x=\"" << fmt(L - 8) << "\" y=\"" << fmt(py(yv) + 4) << "\" text-anchor=\"end\">" << tick_label(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << fmt(L + pw / 2) << "\" y=\"" << fmt(H - 10) << "\" text-anchor=\"middle\">"
    << escape(opts.x_column) << "</text>\n";

  auto path = [&](const std::vector<double>& x, const std::vector<double>& y) {
    std::string d;
    bool pen = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
        pen = false;
        continue;
      }
      d += (pen ? " L" : (d.empty() ? "M" : " M")) + fmt(px(x[i])) + ',' + fmt(py(y[i]));
      pen = true;
    }
    return d.empty() ? std::string("M0,0") : d;
  };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    const auto& s = series[k];
    o << "<path d=\"" << path(s.x, s.raw) << "\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1\" stroke-opacity=\"0.3\"/>\n";
    o << "<path d=\"" << path(s.x, s.smoothed) << "\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"2.2\"/>\n";
    const double ly = T + 10 + 18.0 * static_cast<double>(k);
    o << "<line x1=\"" << fmt(W - R + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(W - R + 36) << "\" y2=\""
      << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2.2\"/>\n";
    o << "<text x=\"" << fmt(W - R + 42) << "\" y=\"" << fmt(ly + 4) << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_curves(const std::vector<CurveRun>& runs, const CurveOptions& opts, const std::filesystem::path& out) {
  write_text_file(out, render_curves(runs, opts));
}

std::string render_heatmap(const EvalReport& report) {
  const int w = report.grid_width, h = report.grid_height;
  if (w < 1 || h < 1) throw SchemaError("report has no grid dimensions");
  for (const auto& m : report.heatmaps)
    if (m.size() != static_cast<std::size_t>(w * h)) throw SchemaError("heatmap size differs from the grid");
  const int panels = static_cast<int>(report.heatmaps.size());
  constexpr int cell = 32, gap = 30, margin = 20, title = 28;
  const int pw = w * cell, width = 2 * margin + panels * pw + std::max(0, panels - 1) * gap;
  const int height = 2 * margin + title + h * cell;

  long peak = 0;
  for (const auto& m : report.heatmaps)
    for (long v : m) peak = std::max(peak, v);

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  o << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  for (int a = 0; a < panels; ++a) {
    const int x0 = margin + a * (pw + gap), y0 = margin + title;
    o << "<g id=\"agent" << a << "\">\n";
    o << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << margin + 14 << "\" text-anchor=\"middle\" font-size=\"13\">agent "
      << a << "</text>\n";
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const long v = report.heatmaps[a][static_cast<std::size_t>(y * w + x)];
        const double s = peak > 0 ? static_cast<double>(v) / static_cast<double>(peak) : 0.0;
        // Linear from near-white to dark blue.
        const int r = static_cast<int>(std::lround(247 - s * (247 - 8)));
        const int g = static_cast<int>(std::lround(251 - s * (251 - 48)));
        const int b = static_cast<int>(std::lround(255 - s * (255 - 107)));
        o << "<rect x=\"" << x0 + x * cell << "\" y=\"" << y0 + y * cell << "\" width=\"" << cell << "\" height=\""
          << cell << "\" fill=\"rgb(" << r << ',' << g << ',' << b << ")\" stroke=\"#ccc\"/>\n";
        o << "<text x=\"" << x0 + x * cell + cell / 2 << "\" y=\"" << y0 + y * cell + cell / 2 + 4
          << "\" text-anchor=\"middle\" fill=\"" << (s > 0.5 ? "white" : "black") << "\">" << v << "</text>\n";
      }
    }
    o << "</g>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_heatmap(const EvalReport& report, const std::filesystem::path& out) {
  write_text_file(out, render_heatmap(report));
}

}  // namespace gmah
