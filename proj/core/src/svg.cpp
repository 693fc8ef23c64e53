#include "mpslam/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "mpslam/scenario.hpp"

namespace mpslam {

namespace {

std::string f3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

const char* kPalette[10] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

SvgCanvas::SvgCanvas(double width_px, double height_px) : w_(width_px), h_(height_px) {}

void SvgCanvas::fit(double xmin, double xmax, double ymin, double ymax, double margin_px) {
  margin_ = margin_px;
  const double dx = std::max(xmax - xmin, 1e-9);
  const double dy = std::max(ymax - ymin, 1e-9);
  const double s = std::min((w_ - 2 * margin_) / dx, (h_ - 2 * margin_) / dy);
  sx_ = sy_ = s;
  // Center the data box inside the viewport.
  x0_ = xmin - ((w_ - 2 * margin_) / s - dx) / 2;
  y0_ = ymin - ((h_ - 2 * margin_) / s - dy) / 2;
}

double SvgCanvas::px(double x) const { return margin_ + (x - x0_) * sx_; }
double SvgCanvas::py(double y) const { return h_ - margin_ - (y - y0_) * sy_; }

void SvgCanvas::polyline(const std::vector<std::pair<double, double>>& world_pts,
                         const std::string& stroke, double width_px, bool dashed) {
  if (world_pts.empty()) return;
  body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + f3(width_px) +
           "\"";
  if (dashed) body_ += " stroke-dasharray=\"6 4\"";
  body_ += " points=\"";
  for (std::size_t i = 0; i < world_pts.size(); ++i) {
    if (i) body_ += ' ';
    body_ += f3(px(world_pts[i].first)) + "," + f3(py(world_pts[i].second));
  }
  body_ += "\"/>\n";
}

void SvgCanvas::line(double x0, double y0, double x1, double y1, const std::string& stroke,
                     double width_px, bool dashed) {
  body_ += "<line x1=\"" + f3(px(x0)) + "\" y1=\"" + f3(py(y0)) + "\" x2=\"" + f3(px(x1)) +
           "\" y2=\"" + f3(py(y1)) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
           f3(width_px) + "\"";
  if (dashed) body_ += " stroke-dasharray=\"6 4\"";
  body_ += "/>\n";
}

void SvgCanvas::circle(double x, double y, double radius_px, const std::string& fill,
                       const std::string& stroke) {
  body_ += "<circle cx=\"" + f3(px(x)) + "\" cy=\"" + f3(py(y)) + "\" r=\"" + f3(radius_px) +
           "\" fill=\"" + fill + "\"";
  if (stroke != "none") body_ += " stroke=\"" + stroke + "\" stroke-width=\"1.5\"";
  body_ += "/>\n";
}

void SvgCanvas::square(double x, double y, double half_px, const std::string& fill) {
  body_ += "<rect x=\"" + f3(px(x) - half_px) + "\" y=\"" + f3(py(y) - half_px) + "\" width=\"" +
           f3(2 * half_px) + "\" height=\"" + f3(2 * half_px) + "\" fill=\"" + fill + "\"/>\n";
}

void SvgCanvas::cross(double x, double y, double half_px, const std::string& stroke,
                      double width_px) {
  const double cx = px(x), cy = py(y);
  body_ += "<path d=\"M " + f3(cx - half_px) + " " + f3(cy - half_px) + " L " + f3(cx + half_px) +
           " " + f3(cy + half_px) + " M " + f3(cx - half_px) + " " + f3(cy + half_px) + " L " +
           f3(cx + half_px) + " " + f3(cy - half_px) + "\" stroke=\"" + stroke +
           "\" stroke-width=\"" + f3(width_px) + "\" fill=\"none\"/>\n";
}

void SvgCanvas::text(double x_px, double y_px, const std::string& s, double size_px,
                     const std::string& fill) {
  std::string esc;
  for (char c : s) {
    if (c == '&') esc += "&amp;";
    else if (c == '<') esc += "&lt;";
    else if (c == '>') esc += "&gt;";
    else esc += c;
  }
  body_ += "<text x=\"" + f3(x_px) + "\" y=\"" + f3(y_px) + "\" font-family=\"sans-serif\" " +
           "font-size=\"" + f3(size_px) + "\" fill=\"" + fill + "\">" + esc + "</text>\n";
}

void SvgCanvas::legend(double x_px, double y_px, const std::string& color, const std::string& label,
                       bool dashed) {
  body_ += "<line x1=\"" + f3(x_px) + "\" y1=\"" + f3(y_px - 4) + "\" x2=\"" + f3(x_px + 24) +
           "\" y2=\"" + f3(y_px - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"";
  if (dashed) body_ += " stroke-dasharray=\"6 4\"";
  body_ += "/>\n";
  text(x_px + 30, y_px, label);
}

std::string SvgCanvas::str() const {
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f3(w_) +
                    "\" height=\"" + f3(h_) + "\" viewBox=\"0 0 " + f3(w_) + " " + f3(h_) +
                    "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out += body_;
  out += "</svg>\n";
  return out;
}

void SvgCanvas::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("", "cannot open for writing: " + path);
  out << str();
}

void plot_trajectory(const std::string& path, const std::vector<Vec3>& est,
                     const std::vector<Vec3>& truth) {
  SvgCanvas svg(800, 600);
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto grow = [&](const std::vector<Vec3>& ps) {
    for (const Vec3& p : ps) {
      xmin = std::min(xmin, p.x());
      xmax = std::max(xmax, p.x());
      ymin = std::min(ymin, p.y());
      ymax = std::max(ymax, p.y());
    }
  };
  grow(est);
  grow(truth);
  if (!std::isfinite(xmin)) xmin = xmax = ymin = ymax = 0.0;
  svg.fit(xmin, xmax, ymin, ymax);

  std::vector<std::pair<double, double>> pts;
  for (const Vec3& p : truth) pts.push_back({p.x(), p.y()});
  svg.polyline(pts, "#888888", 1.5, /*dashed=*/true);
  pts.clear();
  for (const Vec3& p : est) pts.push_back({p.x(), p.y()});
  svg.polyline(pts, "#1f77b4", 2.0);

  svg.legend(56, 24, "#1f77b4", "estimated trajectory");
  if (!truth.empty()) svg.legend(56, 42, "#888888", "ground truth", /*dashed=*/true);
  svg.save(path);
}

void plot_feature_map(const std::string& path, const std::map<int, Vec3>& features,
                      const std::vector<Vec3>& truth_features,
                      const std::vector<Vec3>& agent_path) {
  SvgCanvas svg(800, 600);
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto grow = [&](double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  };
  for (const auto& [k, p] : features) grow(p.x(), p.y());
  for (const Vec3& p : truth_features) grow(p.x(), p.y());
  for (const Vec3& p : agent_path) grow(p.x(), p.y());
  if (!std::isfinite(xmin)) xmin = xmax = ymin = ymax = 0.0;
  svg.fit(xmin, xmax, ymin, ymax);

  std::vector<std::pair<double, double>> pts;
  for (const Vec3& p : agent_path) pts.push_back({p.x(), p.y()});
  svg.polyline(pts, "#bbbbbb", 1.0);

  for (std::size_t l = 0; l < truth_features.size(); ++l) {
    const Vec3& p = truth_features[l];
    if (l == 0) svg.square(p.x(), p.y(), 6.0, "#d62728");
    else svg.circle(p.x(), p.y(), 5.0, "none", "#d62728");
  }
  for (const auto& [k, p] : features) {
    svg.cross(p.x(), p.y(), 5.0, "#1f77b4", 2.0);
    svg.text(svg.px(p.x()) + 8, svg.py(p.y()) - 6, std::to_string(k), 11.0, "#1f77b4");
  }

  svg.legend(56, 24, "#1f77b4", "estimated feature (track id)");
  if (!truth_features.empty()) svg.legend(56, 42, "#d62728", "true anchors (square = physical)");
  svg.save(path);
}

void plot_track_distances(const std::string& path, const std::vector<DistRow>& rows) {
  SvgCanvas svg(900, 600);
  double nmin = std::numeric_limits<double>::infinity(), nmax = -nmin;
  double dmin = nmin, dmax = -nmin;
  std::set<int> ids;
  for (const DistRow& r : rows) {
    nmin = std::min(nmin, (double)r.n);
    nmax = std::max(nmax, (double)r.n);
    dmin = std::min(dmin, r.d_m);
    dmax = std::max(dmax, r.d_m);
    ids.insert(r.track);
  }
  if (!std::isfinite(nmin)) nmin = nmax = dmin = dmax = 0.0;
  svg.fit(nmin, nmax, dmin, dmax, 50.0);

  // Axes along the data box.
  svg.line(nmin, dmin, nmax, dmin, "#333333", 1.0);
  svg.line(nmin, dmin, nmin, dmax, "#333333", 1.0);
  svg.text(svg.px(nmax) - 64, svg.py(dmin) + 28, "snapshot n");
  svg.text(svg.px(nmin) - 36, svg.py(dmax) - 10, "d (m)");

  int color_idx = 0;
  double legend_y = 24;
  for (int id : ids) {
    const std::string color = kPalette[color_idx % 10];
    std::vector<std::pair<double, double>> pts;
    for (const DistRow& r : rows)
      if (r.track == id) pts.push_back({(double)r.n, r.d_m});
    std::sort(pts.begin(), pts.end());
    svg.polyline(pts, color, 1.5);
    if (color_idx < 10) {
      svg.legend(svg.px(nmin) + 10 + 150.0 * (color_idx / 5), legend_y + 18.0 * (color_idx % 5),
                 color, "track " + std::to_string(id));
    }
    ++color_idx;
  }
  svg.save(path);
}

}  // namespace mpslam
