#include "rectattn/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rectattn/errors.hpp"
#include "rectattn/rsat.hpp"

namespace rectattn {

namespace {

constexpr double kWidth = 700, kHeight = 420;
constexpr double kLeft = 70, kRight = 210, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b"};

std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t line_no)
{
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("line " + std::to_string(line_no) + ": '" + s + "' is not a finite number");
  }
}

std::string num(double x)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string tick_label(double x)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

struct Range {
  double lo, hi;
};

Range padded(double lo, double hi)
{
  if (hi - lo < 1e-12) {
    const double pad = std::max(std::abs(hi) * 0.1, 0.05);
    return {lo - pad, hi + pad};
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

}  // namespace

std::vector<SweepPoint> parse_sweep_csv(const std::string& csv)
{
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("CSV is empty");
  const auto header = split_csv_line(line);
  auto column = [&](const char* name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(std::string("CSV has no '") + name + "' column");
    return std::size_t(it - header.begin());
  };
  const std::size_t c_variant = column("variant"), c_sparsity = column("sparsity"),
                    c_l1 = column("normalized_l1"), c_cos = column("cosine_similarity");

  std::vector<SweepPoint> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw SchemaError("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(header.size()));
    points.push_back({cells[c_variant], parse_number(cells[c_sparsity], line_no),
                      parse_number(cells[c_l1], line_no), parse_number(cells[c_cos], line_no)});
  }
  if (points.empty()) throw SchemaError("CSV has no data rows");
  return points;
}

std::string render_metric_svg(const std::vector<SweepPoint>& points, const std::string& metric)
{
  if (points.empty()) throw SchemaError("no points to plot");
  auto value = [&](const SweepPoint& p) {
    if (metric == "normalized_l1") return p.normalized_l1;
    if (metric == "cosine_similarity") return p.cosine_similarity;
    throw SchemaError("unknown metric '" + metric + "'");
  };

  // Series keep first-appearance order so colours are stable.
  std::vector<std::string> names;
  for (const auto& p : points)
    if (std::find(names.begin(), names.end(), p.variant) == names.end()) names.push_back(p.variant);

  double x_lo = points[0].sparsity, x_hi = x_lo, y_lo = value(points[0]), y_hi = y_lo;
  for (const auto& p : points) {
    x_lo = std::min(x_lo, p.sparsity);
    x_hi = std::max(x_hi, p.sparsity);
    y_lo = std::min(y_lo, value(p));
    y_hi = std::max(y_hi, value(p));
  }
  const Range xr = padded(x_lo, x_hi), yr = padded(y_lo, y_hi);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto sy = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
       num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
       metric + " vs sparsity</text>\n";
  s += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" +
       num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    s += "<line x1=\"" + num(sx(fx)) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(sx(fx)) +
         "\" y2=\"" + num(kTop + ph + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(sx(fx)) + "\" y=\"" + num(kTop + ph + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(fx) +
         "</text>\n";
    s += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(sy(fy)) + "\" x2=\"" + num(kLeft) +
         "\" y2=\"" + num(sy(fy)) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(sy(fy) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(fy) +
         "</text>\n";
  }
  s += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 15) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">sparsity</text>\n";
  s += "<text x=\"18\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       num(kTop + ph / 2) + ")\" font-family=\"sans-serif\" font-size=\"13\">" + metric + "</text>\n";

  for (std::size_t si = 0; si < names.size(); ++si) {
    const char* colour = kPalette[si % std::size(kPalette)];
    std::vector<std::pair<double, double>> series;
    for (const auto& p : points)
      if (p.variant == names[si]) series.emplace_back(p.sparsity, value(p));
    std::stable_sort(series.begin(), series.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    if (series.size() > 1) {
      s += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < series.size(); ++i)
        s += (i ? " " : "") + num(sx(series[i].first)) + "," + num(sy(series[i].second));
      s += "\"/>\n";
    }
    for (const auto& [x, y] : series)
      s += "<circle cx=\"" + num(sx(x)) + "\" cy=\"" + num(sy(y)) + "\" r=\"4\" fill=\"" + colour +
           "\"/>\n";
    const double ly = kTop + 10 + 20 * double(si);
    s += "<rect x=\"" + num(kWidth - kRight + 15) + "\" y=\"" + num(ly - 8) +
         "\" width=\"12\" height=\"12\" fill=\"" + colour + "\"/>\n";
    s += "<text x=\"" + num(kWidth - kRight + 32) + "\" y=\"" + num(ly + 2) +
         "\" font-family=\"sans-serif\" font-size=\"12\">" + names[si] + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::vector<std::filesystem::path> render_plots(const std::filesystem::path& csv_path,
                                                const std::filesystem::path& out_dir)
{
  const auto points = parse_sweep_csv(read_file(csv_path));
  std::vector<std::pair<std::filesystem::path, std::string>> files;
  for (const char* metric : {"normalized_l1", "cosine_similarity"})
    files.emplace_back(out_dir / (std::string("sweep_") + metric + ".svg"),
                       render_metric_svg(points, metric));
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());
  std::vector<std::filesystem::path> written;
  for (const auto& [path, svg] : files) {
    write_file_atomic(path, svg);
    written.push_back(path);
  }
  return written;
}

}  // namespace rectattn
