#pragma once
// Scenario description files: reflecting surfaces, physical anchor and array
// pose, agent trajectory, RF constants, behavior flags. JSON on disk;
// validation failures carry the JSON pointer of the offending field.

#include <stdexcept>
#include <string>
#include <vector>

#include "mpslam/geometry.hpp"
#include "mpslam/types.hpp"

namespace mpslam {

// Configuration/parse failure (distinct from numerical failures so the CLI
// can map it to its own exit code). `pointer` is the JSON pointer of the
// offending field, also embedded in what().
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& pointer, const std::string& message)
      : std::runtime_error(pointer.empty() ? message : pointer + ": " + message),
        pointer_(pointer) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

struct ScenarioFlags {
  bool planar_agent = true;
  int max_order = 1;  // mirror-image recursion depth
};

struct Scenario {
  std::vector<Surface> surfaces;
  Vec3 pa = Vec3::Zero();  // physical anchor position
  ArrayPose pose;          // receive array pose (origin = pa)
  Trajectory traj;
  RfConfig rf;
  ScenarioFlags flags;
};

// Receive-element layout in wavelengths, local frame: a sqrt(n) x sqrt(n)
// grid in the local y-z plane when n is a perfect square, else a uniform
// line along local y; centered either way.
Eigen::Matrix3Xd array_elements(int nrx, double spacing_wl);

// Parse + validate a scenario document. Throws ConfigError with the JSON
// pointer of the first offending field.
Scenario parse_scenario(const std::string& json_text);

// Load from a file path (throws ConfigError on missing/unreadable file).
Scenario load_scenario(const std::string& path);

}  // namespace mpslam
