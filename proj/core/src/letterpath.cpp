#include "mpslam/letterpath.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace mpslam {

namespace {

using P = Eigen::Vector2d;
using Stroke = std::vector<P>;

// Stroke font on a [0, 0.7] x [0, 1] cell; multi-stroke letters get visible
// connector segments because the pen never lifts.
const std::map<char, std::vector<Stroke>>& font() {
  static const std::map<char, std::vector<Stroke>> f = {
      {'A', {{{0, 0}, {0.35, 1}, {0.7, 0}}, {{0.12, 0.35}, {0.58, 0.35}}}},
      {'B',
       {{{0, 0},
         {0, 1},
         {0.55, 1},
         {0.7, 0.875},
         {0.7, 0.625},
         {0.55, 0.5},
         {0, 0.5},
         {0.55, 0.5},
         {0.7, 0.375},
         {0.7, 0.125},
         {0.55, 0},
         {0, 0}}}},
      {'C',
       {{{0.7, 0.85}, {0.55, 1}, {0.15, 1}, {0, 0.85}, {0, 0.15}, {0.15, 0}, {0.55, 0}, {0.7, 0.15}}}},
      {'D', {{{0, 0}, {0, 1}, {0.45, 1}, {0.65, 0.85}, {0.7, 0.6}, {0.7, 0.4}, {0.65, 0.15}, {0.45, 0}, {0, 0}}}},
      {'E', {{{0.7, 1}, {0, 1}, {0, 0.5}, {0.5, 0.5}, {0, 0.5}, {0, 0}, {0.7, 0}}}},
      {'F', {{{0.7, 1}, {0, 1}, {0, 0.5}, {0.5, 0.5}, {0, 0.5}, {0, 0}}}},
      {'G',
       {{{0.7, 0.85},
         {0.55, 1},
         {0.15, 1},
         {0, 0.85},
         {0, 0.15},
         {0.15, 0},
         {0.55, 0},
         {0.7, 0.15},
         {0.7, 0.45},
         {0.4, 0.45}}}},
      {'H', {{{0, 1}, {0, 0}, {0, 0.5}, {0.7, 0.5}, {0.7, 1}, {0.7, 0}}}},
      {'I', {{{0.35, 1}, {0.35, 0}}}},
      {'J', {{{0.6, 1}, {0.6, 0.15}, {0.45, 0}, {0.15, 0}, {0, 0.15}}}},
      {'K', {{{0, 1}, {0, 0}, {0, 0.45}, {0.65, 1}, {0, 0.45}, {0.65, 0}}}},
      {'L', {{{0, 1}, {0, 0}, {0.7, 0}}}},
      {'M', {{{0, 0}, {0, 1}, {0.35, 0.5}, {0.7, 1}, {0.7, 0}}}},
      {'N', {{{0, 0}, {0, 1}, {0.7, 0}, {0.7, 1}}}},
      {'O',
       {{{0.15, 0}, {0, 0.15}, {0, 0.85}, {0.15, 1}, {0.55, 1}, {0.7, 0.85}, {0.7, 0.15}, {0.55, 0}, {0.15, 0}}}},
      {'P', {{{0, 0}, {0, 1}, {0.55, 1}, {0.7, 0.85}, {0.7, 0.6}, {0.55, 0.45}, {0, 0.45}}}},
      {'Q',
       {{{0.15, 0}, {0, 0.15}, {0, 0.85}, {0.15, 1}, {0.55, 1}, {0.7, 0.85}, {0.7, 0.15}, {0.55, 0}, {0.15, 0}},
        {{0.45, 0.25}, {0.72, -0.04}}}},
      {'R',
       {{{0, 0}, {0, 1}, {0.55, 1}, {0.7, 0.85}, {0.7, 0.6}, {0.55, 0.45}, {0, 0.45}, {0.4, 0.45}, {0.7, 0}}}},
      {'S',
       {{{0.7, 0.85},
         {0.55, 1},
         {0.15, 1},
         {0, 0.85},
         {0, 0.65},
         {0.15, 0.5},
         {0.55, 0.5},
         {0.7, 0.35},
         {0.7, 0.15},
         {0.55, 0},
         {0.15, 0},
         {0, 0.15}}}},
      {'T', {{{0, 1}, {0.7, 1}, {0.35, 1}, {0.35, 0}}}},
      {'U', {{{0, 1}, {0, 0.2}, {0.15, 0}, {0.55, 0}, {0.7, 0.2}, {0.7, 1}}}},
      {'V', {{{0, 1}, {0.35, 0}, {0.7, 1}}}},
      {'W', {{{0, 1}, {0.15, 0}, {0.35, 0.6}, {0.55, 0}, {0.7, 1}}}},
      {'X', {{{0, 1}, {0.7, 0}, {0.35, 0.5}, {0, 0}, {0.7, 1}}}},
      {'Y', {{{0, 1}, {0.35, 0.5}, {0.7, 1}, {0.35, 0.5}, {0.35, 0}}}},
      {'Z', {{{0, 1}, {0.7, 1}, {0, 0}, {0.7, 0}}}},
  };
  return f;
}

constexpr double kAdvance = 0.9;       // letter cell pitch
constexpr double kSpaceAdvance = 0.5;  // blank advance for ' '

}  // namespace

std::vector<Vec3> letter_waypoints(const std::string& text, double area_m2,
                                   const Eigen::Vector2d& origin_xy) {
  if (!(area_m2 > 0.0)) throw std::invalid_argument("letter_waypoints: area must be > 0");
  std::vector<P> pts;
  double cursor = 0.0;
  for (char ch : text) {
    if (ch == ' ') {
      cursor += kSpaceAdvance;
      continue;
    }
    const char up = (char)std::toupper((unsigned char)ch);
    auto it = font().find(up);
    if (it == font().end())
      throw std::invalid_argument(std::string("letter_waypoints: unsupported character '") + ch +
                                  "'");
    for (const Stroke& s : it->second)
      for (const P& q : s) pts.push_back(P(q.x() + cursor, q.y()));
    cursor += kAdvance;
  }
  if (pts.size() < 2) throw std::invalid_argument("letter_waypoints: text renders no path");
  // drop zero-length repeats at stroke joins
  std::vector<P> path;
  for (const P& q : pts)
    if (path.empty() || (q - path.back()).norm() > 1e-12) path.push_back(q);
  if (path.size() < 2) throw std::invalid_argument("letter_waypoints: text renders no path");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const P& q : path) {
    xmin = std::min(xmin, q.x());
    xmax = std::max(xmax, q.x());
    ymin = std::min(ymin, q.y());
    ymax = std::max(ymax, q.y());
  }
  const double w = std::max(xmax - xmin, 1e-9), h = std::max(ymax - ymin, 1e-9);
  const double s = std::sqrt(area_m2 / (w * h));
  const double cx = (xmin + xmax) / 2.0, cy = (ymin + ymax) / 2.0;
  std::vector<Vec3> out;
  out.reserve(path.size());
  for (const P& q : path)
    out.push_back(
        Vec3(origin_xy.x() + s * (q.x() - cx), origin_xy.y() + s * (q.y() - cy), 0.0));
  return out;
}

}  // namespace mpslam
