#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "cellvis/pointcloud.hpp"

namespace cellvis {

/// Desk-scale synthetic scene description.
///
/// Generators:
///  - "static-sphere":   evenly spread points on a sphere surface (Fibonacci
///                       lattice under a seeded random rotation), identical
///                       every frame.
///  - "translating-box": points on a box surface moving at `velocity` m/frame.
///  - "orbiting-camera": a standing figure (box torso + sphere head) with the
///                       camera circling it.
///
/// Trajectories ("trajectory" key, defaulted per generator):
///  - "constant": camera `camera_distance` in front (+z) of the scene, looking at it.
///  - "pan":      starts like "constant", then moves at `camera_velocity` m/frame
///                while yawing at `yaw_rate` rad/frame.
///  - "orbit":    circle of radius `orbit_radius` around the scene centroid with
///                period `orbit_period` frames, always facing the centroid.
struct SynthSpec {
  std::string generator = "static-sphere";
  std::uint64_t seed = 0;
  int frames = 10;
  int points = 2000;

  std::string trajectory;  // empty: generator default
  double fps = 30.0;
  Vec3 center{0.0, 0.9, 0.0};
  double radius = 0.5;
  Vec3 boxSize{0.4, 0.4, 0.4};
  Vec3 velocity{0.01, 0.0, 0.0};
  double cameraDistance = 3.0;
  double orbitRadius = 3.0;
  int orbitPeriod = 120;
  double yawRate = 0.01;
  Vec3 cameraVelocity{0.0, 0.0, 0.0};
  /// Emit integer 10-bit source coordinates (positions / kDefaultSourceScale).
  bool quantize10bit = false;

  static SynthSpec fromJson(const nlohmann::json& j);
  nlohmann::json toJson() const;
};

struct SynthScene {
  FrameSequence sequence;
  Trajectory trajectory;
};

/// Deterministic for a fixed spec. Throws ConfigError for unknown names.
SynthScene synthScene(const SynthSpec& spec);

/// Pose at `frame` for the spec's trajectory around `centroid`.
Pose6DoF synthPose(const SynthSpec& spec, const Vec3& centroid, int frame);

}  // namespace cellvis
