#pragma once
// Deterministic SVG plotting for pipeline artifacts: no timestamps, fixed
// floating formatting, stable element order — identical inputs give
// byte-identical files.

#include <map>
#include <string>
#include <vector>

#include "mpslam/ekf.hpp"
#include "mpslam/types.hpp"

namespace mpslam {

// Minimal SVG writer working in a y-up world frame; fit() establishes the
// world-to-viewport mapping (uniform scale, margins, y flipped).
class SvgCanvas {
 public:
  SvgCanvas(double width_px, double height_px);

  void fit(double xmin, double xmax, double ymin, double ymax, double margin_px = 40.0);
  double px(double x) const;
  double py(double y) const;

  void polyline(const std::vector<std::pair<double, double>>& world_pts, const std::string& stroke,
                double width_px, bool dashed = false);
  void line(double x0, double y0, double x1, double y1, const std::string& stroke, double width_px,
            bool dashed = false);
  void circle(double x, double y, double radius_px, const std::string& fill,
              const std::string& stroke = "none");
  void square(double x, double y, double half_px, const std::string& fill);
  void cross(double x, double y, double half_px, const std::string& stroke, double width_px);
  void text(double x_px, double y_px, const std::string& s, double size_px = 12.0,
            const std::string& fill = "#333333");
  // Legend entry at viewport coordinates: swatch + label.
  void legend(double x_px, double y_px, const std::string& color, const std::string& label,
              bool dashed = false);

  std::string str() const;
  void save(const std::string& path) const;

 private:
  double w_, h_;
  double sx_ = 1.0, sy_ = 1.0, x0_ = 0.0, y0_ = 0.0, margin_ = 40.0;
  std::string body_;
};

// Estimated trajectory (solid) with optional truth overlay (dashed), top view.
void plot_trajectory(const std::string& path, const std::vector<Vec3>& est,
                     const std::vector<Vec3>& truth);

// Estimated features (crosses, labeled by track id) against optional truth
// anchors (index 0 drawn as the physical anchor, the rest as circles),
// with an optional agent path for context.
void plot_feature_map(const std::string& path, const std::map<int, Vec3>& features,
                      const std::vector<Vec3>& truth_features, const std::vector<Vec3>& agent_path);

// Per-track distance-vs-snapshot polylines from the distance table.
void plot_track_distances(const std::string& path, const std::vector<DistRow>& rows);

}  // namespace mpslam
