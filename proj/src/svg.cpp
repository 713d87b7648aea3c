#include "skelrep/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace skelrep {

namespace {

const char* kPalette[] = {"#2ca02c", "#d62728", "#1f77b4", "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

// "--" terminates an XML comment early; keep echoes inert.
std::string comment_block(const std::string& text) {
  if (text.empty()) return "";
  std::string safe = text;
  std::size_t at = 0;
  while ((at = safe.find("--", at)) != std::string::npos) safe.replace(at, 2, "- -");
  return "<!-- " + safe + " -->\n";
}

struct Axis {
  double lo = 0, hi = 1;   // data range
  double a = 0, b = 1;     // pixel range
  double to(double x) const { return hi == lo ? (a + b) / 2 : a + (x - lo) / (hi - lo) * (b - a); }
};

}  // namespace

std::string render_pose_svg(const SkeletonTopology& topo,
                            const std::vector<std::pair<std::string, Pose>>& named,
                            const std::string& comment) {
  if (named.empty()) throw std::invalid_argument("render: no poses");
  const int J = topo.joint_count();
  for (const auto& [name, p] : named)
    if (static_cast<int>(p.joints.size()) != J)
      throw std::invalid_argument("render: pose \"" + name + "\" has wrong joint count");

  double lo = 1e300, hi = -1e300;
  for (const auto& [name, p] : named)
    for (const auto& v : p.joints)
      for (double x : v) lo = std::min(lo, x), hi = std::max(hi, x);
  double pad = 0.05 * std::max(hi - lo, 1e-9);
  lo -= pad, hi += pad;

  const double panel = 420, margin = 30, top = 40;
  const double width = 2 * panel + 3 * margin, height = panel + top + margin;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << comment_block(comment);
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes: u = projected horizontal (x or z), v = world y, SVG y flipped
  for (int side = 0; side < 2; ++side) {
    double x0 = margin + side * (panel + margin);
    Axis ux{lo, hi, x0, x0 + panel};
    Axis uy{lo, hi, top + panel, top};  // flipped
    out << "<text x=\"" << num(x0 + panel / 2) << "\" y=\"" << top - 14
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"14\">"
        << (side == 0 ? "front (x, y)" : "side (z, y)") << "</text>\n";
    out << "<rect x=\"" << num(x0) << "\" y=\"" << top << "\" width=\"" << panel << "\" height=\""
        << panel << "\" fill=\"none\" stroke=\"#ccc\"/>\n";
    for (std::size_t n = 0; n < named.size(); ++n) {
      const Pose& p = named[n].second;
      const char* color = kPalette[n % kPaletteSize];
      auto u = [&](const Vec3& v) { return ux.to(side == 0 ? v[0] : v[2]); };
      for (const auto& bone : topo.bones)
        out << "<line x1=\"" << num(u(p.joints[bone.first])) << "\" y1=\""
            << num(uy.to(p.joints[bone.first][1])) << "\" x2=\"" << num(u(p.joints[bone.second]))
            << "\" y2=\"" << num(uy.to(p.joints[bone.second][1])) << "\" stroke=\"" << color
            << "\" stroke-width=\"2.5\" stroke-opacity=\"0.85\"/>\n";
      for (const auto& v : p.joints)
        out << "<circle cx=\"" << num(u(v)) << "\" cy=\"" << num(uy.to(v[1])) << "\" r=\"3\" fill=\""
            << color << "\"/>\n";
    }
  }
  for (std::size_t n = 0; n < named.size(); ++n)
    out << "<text x=\"" << num(margin + 6) << "\" y=\"" << num(top + 18 + 18.0 * n)
        << "\" font-family=\"monospace\" font-size=\"13\" fill=\"" << kPalette[n % kPaletteSize]
        << "\">" << named[n].first << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::string render_metrics_svg(const std::vector<std::string>& header,
                               const std::vector<std::vector<double>>& rows,
                               const std::vector<std::string>& columns,
                               const std::string& comment) {
  if (rows.empty()) throw std::invalid_argument("render: no metric rows");
  if (columns.empty()) throw std::invalid_argument("render: no columns selected");
  std::vector<std::size_t> idx;
  for (const auto& c : columns) {
    auto it = std::find(header.begin(), header.end(), c);
    if (it == header.end()) throw std::invalid_argument("render: no metrics column \"" + c + "\"");
    idx.push_back(it - header.begin());
  }
  for (const auto& r : rows)
    if (r.size() != header.size())
      throw std::invalid_argument("render: ragged metrics row");

  Axis x{rows.front()[0], rows.back()[0], 70, 880};
  double lo = 1e300, hi = -1e300;
  for (const auto& r : rows)
    for (std::size_t i : idx) lo = std::min(lo, r[i]), hi = std::max(hi, r[i]);
  if (hi == lo) hi = lo + 1;
  double pad = 0.05 * (hi - lo);
  Axis y{lo - pad, hi + pad, 380, 20};  // flipped

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"420\" "
         "viewBox=\"0 0 900 420\">\n";
  out << comment_block(comment);
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<rect x=\"70\" y=\"20\" width=\"810\" height=\"360\" fill=\"none\" stroke=\"#ccc\"/>\n";

  for (int t = 0; t <= 4; ++t) {
    double xv = x.lo + t * (x.hi - x.lo) / 4, yv = y.lo + t * (y.hi - y.lo) / 4;
    char xl[32], yl[32];
    std::snprintf(xl, sizeof xl, "%.4g", xv);
    std::snprintf(yl, sizeof yl, "%.4g", yv);
    out << "<line x1=\"" << num(x.to(xv)) << "\" y1=\"380\" x2=\"" << num(x.to(xv))
        << "\" y2=\"20\" stroke=\"#eee\"/>\n";
    out << "<text x=\"" << num(x.to(xv)) << "\" y=\"398\" text-anchor=\"middle\" "
           "font-family=\"monospace\" font-size=\"11\">" << xl << "</text>\n";
    out << "<line x1=\"70\" y1=\"" << num(y.to(yv)) << "\" x2=\"880\" y2=\"" << num(y.to(yv))
        << "\" stroke=\"#eee\"/>\n";
    out << "<text x=\"64\" y=\"" << num(y.to(yv) + 4) << "\" text-anchor=\"end\" "
           "font-family=\"monospace\" font-size=\"11\">" << yl << "</text>\n";
  }
  out << "<text x=\"475\" y=\"414\" text-anchor=\"middle\" font-family=\"monospace\" "
         "font-size=\"12\">step</text>\n";

  for (std::size_t s = 0; s < idx.size(); ++s) {
    out << "<polyline fill=\"none\" stroke=\"" << kPalette[s % kPaletteSize]
        << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : rows) out << num(x.to(r[0])) << ',' << num(y.to(r[idx[s]])) << ' ';
    out << "\"/>\n";
    out << "<text x=\"76\" y=\"" << num(34 + 16.0 * s) << "\" font-family=\"monospace\" "
           "font-size=\"12\" fill=\"" << kPalette[s % kPaletteSize] << "\">" << columns[s]
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (header.empty()) {
      header = cells;
      continue;
    }
    if (cells.size() != header.size()) throw std::runtime_error("csv: ragged row in " + path);
    std::vector<double> row;
    for (const auto& c : cells) {
      char* end = nullptr;
      row.push_back(std::strtod(c.c_str(), &end));
      if (end == c.c_str()) throw std::runtime_error("csv: non-numeric cell \"" + c + "\"");
    }
    rows.push_back(std::move(row));
  }
  if (header.empty()) throw std::runtime_error("csv: no header in " + path);
  return {header, rows};
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace skelrep
