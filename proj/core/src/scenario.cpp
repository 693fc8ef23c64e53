#include "mpslam/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mpslam/letterpath.hpp"

namespace mpslam {

namespace {

using nlohmann::json;

double num_at(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw ConfigError(ptr, "expected a number");
  return v.get<double>();
}

int int_at(const json& v, const std::string& ptr) {
  if (!v.is_number_integer()) throw ConfigError(ptr, "expected an integer");
  return v.get<int>();
}

bool bool_at(const json& v, const std::string& ptr) {
  if (!v.is_boolean()) throw ConfigError(ptr, "expected a boolean");
  return v.get<bool>();
}

const json& require(const json& j, const std::string& base, const char* key) {
  if (!j.is_object()) throw ConfigError(base.empty() ? "/" : base, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(base + "/" + key, "missing required field");
  return *it;
}

Vec3 vec3_at(const json& v, const std::string& ptr) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(ptr, "expected an array of 3 numbers");
  return Vec3(num_at(v[0], ptr + "/0"), num_at(v[1], ptr + "/1"), num_at(v[2], ptr + "/2"));
}

std::vector<Vec3> points_at(const json& v, const std::string& ptr) {
  if (!v.is_array() || v.empty()) throw ConfigError(ptr, "expected a non-empty array of points");
  std::vector<Vec3> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(vec3_at(v[i], ptr + "/" + std::to_string(i)));
  return out;
}

}  // namespace

Eigen::Matrix3Xd array_elements(int nrx, double spacing_wl) {
  if (nrx < 1) throw ConfigError("/rf/nrx", "must be >= 1");
  if (!(spacing_wl > 0.0)) throw ConfigError("/rf/spacing_wavelengths", "must be > 0");
  Eigen::Matrix3Xd el(3, nrx);
  const int m = (int)std::lround(std::sqrt((double)nrx));
  if (m * m == nrx && m > 1) {
    // square grid in the local y-z plane, centered
    for (int iz = 0; iz < m; ++iz)
      for (int iy = 0; iy < m; ++iy) {
        const int c = iz * m + iy;
        el(0, c) = 0.0;
        el(1, c) = (iy - (m - 1) / 2.0) * spacing_wl;
        el(2, c) = (iz - (m - 1) / 2.0) * spacing_wl;
      }
  } else {
    // uniform line along local y, centered
    for (int i = 0; i < nrx; ++i) {
      el(0, i) = 0.0;
      el(1, i) = (i - (nrx - 1) / 2.0) * spacing_wl;
      el(2, i) = 0.0;
    }
  }
  return el;
}

Scenario parse_scenario(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& ex) {
    throw ConfigError("", std::string("JSON parse error: ") + ex.what());
  }
  if (!doc.is_object()) throw ConfigError("/", "scenario document must be a JSON object");
  Scenario sc;

  // ---- surfaces (optional; empty = free space, LOS only) ----
  if (doc.contains("surfaces")) {
    const json& surfs = doc.at("surfaces");
    if (!surfs.is_array()) throw ConfigError("/surfaces", "expected an array");
    for (std::size_t i = 0; i < surfs.size(); ++i) {
      const std::string base = "/surfaces/" + std::to_string(i);
      const json& s = surfs[i];
      Surface surf;
      surf.n = vec3_at(require(s, base, "normal"), base + "/normal");
      if (surf.n.norm() < 1e-12) throw ConfigError(base + "/normal", "must be a nonzero vector");
      surf.n.normalize();
      surf.offset = num_at(require(s, base, "offset"), base + "/offset");
      const json& ext = require(s, base, "extent");
      if (!ext.is_array() || ext.size() != 4)
        throw ConfigError(base + "/extent", "expected [u0, u1, v0, v1]");
      surf.u0 = num_at(ext[0], base + "/extent/0");
      surf.u1 = num_at(ext[1], base + "/extent/1");
      surf.v0 = num_at(ext[2], base + "/extent/2");
      surf.v1 = num_at(ext[3], base + "/extent/3");
      if (!(surf.u0 < surf.u1) || !(surf.v0 < surf.v1))
        throw ConfigError(base + "/extent", "requires u0 < u1 and v0 < v1");
      if (s.contains("loss")) {
        surf.loss = num_at(s.at("loss"), base + "/loss");
        if (!(surf.loss > 0.0) || surf.loss > 1.0)
          throw ConfigError(base + "/loss", "must be in (0, 1]");
      }
      sc.surfaces.push_back(surf);
    }
  }

  // ---- physical anchor + array pose ----
  {
    const json& pa = require(doc, "", "pa");
    sc.pa = vec3_at(require(pa, "/pa", "position"), "/pa/position");
    sc.pose.origin = sc.pa;
    sc.pose.R = Eigen::Matrix3d::Identity();
    if (pa.contains("array")) {
      const json& arr = pa.at("array");
      if (!arr.is_object()) throw ConfigError("/pa/array", "expected an object");
      if (arr.contains("ypr")) {
        const json& ypr = arr.at("ypr");
        if (!ypr.is_array() || ypr.size() != 3)
          throw ConfigError("/pa/array/ypr", "expected [yaw, pitch, roll]");
        sc.pose.R = rotation_ypr(num_at(ypr[0], "/pa/array/ypr/0"),
                                 num_at(ypr[1], "/pa/array/ypr/1"),
                                 num_at(ypr[2], "/pa/array/ypr/2"));
      }
    }
  }

  // ---- rf ----
  {
    const json& rf = require(doc, "", "rf");
    sc.rf.fc_hz = num_at(require(rf, "/rf", "fc_hz"), "/rf/fc_hz");
    sc.rf.bw_hz = num_at(require(rf, "/rf", "bw_hz"), "/rf/bw_hz");
    sc.rf.nf = int_at(require(rf, "/rf", "nf"), "/rf/nf");
    const int nrx = int_at(require(rf, "/rf", "nrx"), "/rf/nrx");
    const double spacing =
        num_at(require(rf, "/rf", "spacing_wavelengths"), "/rf/spacing_wavelengths");
    sc.rf.elements_wl = array_elements(nrx, spacing);
    try {
      sc.rf.validate();
    } catch (const std::exception& ex) {
      throw ConfigError("/rf", ex.what());
    }
  }

  // ---- flags (optional) ----
  if (doc.contains("flags")) {
    const json& fl = doc.at("flags");
    if (!fl.is_object()) throw ConfigError("/flags", "expected an object");
    if (fl.contains("planar_agent"))
      sc.flags.planar_agent = bool_at(fl.at("planar_agent"), "/flags/planar_agent");
    if (fl.contains("max_order")) {
      sc.flags.max_order = int_at(fl.at("max_order"), "/flags/max_order");
      if (sc.flags.max_order < 0 || sc.flags.max_order > 4)
        throw ConfigError("/flags/max_order", "must be in [0, 4]");
    }
  }

  // ---- trajectory (positions[] | waypoints+step | text+area+step) ----
  {
    const json& tr = require(doc, "", "trajectory");
    if (!tr.is_object()) throw ConfigError("/trajectory", "expected an object");
    double dt_s = 1.0;
    if (tr.contains("dt_s")) {
      dt_s = num_at(tr.at("dt_s"), "/trajectory/dt_s");
      if (!(dt_s > 0.0)) throw ConfigError("/trajectory/dt_s", "must be > 0");
    }
    const int forms = (tr.contains("positions") ? 1 : 0) + (tr.contains("waypoints") ? 1 : 0) +
                      (tr.contains("text") ? 1 : 0);
    if (forms != 1)
      throw ConfigError("/trajectory",
                        "exactly one of 'positions', 'waypoints' or 'text' must be given");
    if (tr.contains("positions")) {
      sc.traj.p = points_at(tr.at("positions"), "/trajectory/positions");
      sc.traj.dt_s = dt_s;
    } else {
      double step = 0.004;
      if (tr.contains("step")) {
        step = num_at(tr.at("step"), "/trajectory/step");
        if (!(step > 0.0)) throw ConfigError("/trajectory/step", "must be > 0");
      }
      std::vector<Vec3> way;
      if (tr.contains("waypoints")) {
        way = points_at(tr.at("waypoints"), "/trajectory/waypoints");
      } else {
        const json& txt = tr.at("text");
        if (!txt.is_string()) throw ConfigError("/trajectory/text", "expected a string");
        double area = 2.0;
        if (tr.contains("area")) {
          area = num_at(tr.at("area"), "/trajectory/area");
          if (!(area > 0.0)) throw ConfigError("/trajectory/area", "must be > 0");
        }
        Eigen::Vector2d origin(0.0, 0.0);
        if (tr.contains("origin")) {
          const json& o = tr.at("origin");
          if (!o.is_array() || o.size() != 2)
            throw ConfigError("/trajectory/origin", "expected [x, y]");
          origin.x() = num_at(o[0], "/trajectory/origin/0");
          origin.y() = num_at(o[1], "/trajectory/origin/1");
        }
        try {
          way = letter_waypoints(txt.get<std::string>(), area, origin);
        } catch (const std::invalid_argument& ex) {
          throw ConfigError("/trajectory/text", ex.what());
        }
      }
      sc.traj = trajectory_from_waypoints(way, step, dt_s);
    }
  }

  // ---- cross-field invariants ----
  const double half_lambda = sc.rf.lambda_c() / 2.0;
  for (std::size_t i = 1; i < sc.traj.p.size(); ++i) {
    if ((sc.traj.p[i] - sc.traj.p[i - 1]).norm() >= half_lambda)
      throw ConfigError("/trajectory",
                        "consecutive positions must be spaced below half a carrier wavelength (" +
                            std::to_string(half_lambda) + " m) for phase-coherent tracking");
  }
  if (sc.flags.planar_agent) {
    for (std::size_t i = 1; i < sc.traj.p.size(); ++i) {
      if (std::abs(sc.traj.p[i].z() - sc.traj.p[0].z()) > 1e-9)
        throw ConfigError("/trajectory",
                          "planar_agent flag requires all trajectory z components equal");
    }
  }
  for (std::size_t i = 0; i < sc.surfaces.size(); ++i) {
    try {
      sc.surfaces[i].validate();
    } catch (const std::exception& ex) {
      throw ConfigError("/surfaces/" + std::to_string(i), ex.what());
    }
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open scenario file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace mpslam
