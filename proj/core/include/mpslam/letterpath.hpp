#pragma once
// Parametric letter-path generator: renders uppercase text as one connected
// waypoint polyline (strokes joined pen-down), scaled so the text bounding
// box covers a requested area. Feeds trajectory_from_waypoints.

#include <string>
#include <vector>

#include <Eigen/Core>

#include "mpslam/types.hpp"

namespace mpslam {

// Waypoints (z = 0) tracing `text` (A-Z and space) as a single connected
// polyline whose bounding box has area `area_m2`, centered at `origin_xy`.
// Throws std::invalid_argument on unsupported characters or area <= 0.
std::vector<Vec3> letter_waypoints(const std::string& text, double area_m2,
                                   const Eigen::Vector2d& origin_xy = Eigen::Vector2d::Zero());

}  // namespace mpslam
