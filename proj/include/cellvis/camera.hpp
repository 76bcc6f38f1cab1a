#pragma once

#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "cellvis/geometry.hpp"

namespace cellvis {

/// Wraps an angle in radians into [-pi, pi).
double canonicalAngle(double radians);

/// Viewer pose: position in meters and yaw/pitch/roll in radians.
///
/// Convention used throughout the toolkit: yaw rotates about +Y, pitch about
/// +X, roll about +Z, composed as R = Rz(roll) * Ry(yaw) * Rx(pitch). The
/// camera looks along +Z of its own frame, so the viewing direction in world
/// space is R * (0, 0, 1).
struct Pose6DoF {
  Vec3 position;
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  /// Same pose with angles wrapped into [-pi, pi).
  Pose6DoF canonical() const;
  bool isValid() const;

  friend bool operator==(const Pose6DoF&, const Pose6DoF&) = default;
};

struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 960.0;
  double cy = 540.0;
  int width = 1920;
  int height = 1080;
  double dNear = 0.05;
  double dFar = 50.0;

  /// Throws ParameterError when an invariant is violated.
  void validate() const;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
  /// False when the point is at or behind the camera plane (z <= 0).
  bool valid = false;
};

Mat3 rotationMatrix(const Pose6DoF& pose);

/// p_cam = R^T (p_world - position).
Vec3 worldToCamera(const Vec3& point, const Pose6DoF& pose);
std::vector<Vec3> worldToCamera(std::span<const Vec3> points, const Pose6DoF& pose);

Projection project(const Vec3& pointCam, const CameraIntrinsics& intrinsics);
std::vector<Projection> project(std::span<const Vec3> pointsCam,
                                const CameraIntrinsics& intrinsics);

/// 0 <= u < width, 0 <= v < height, dNear < z < dFar.
bool inFrustum(const Projection& p, const CameraIntrinsics& intrinsics);
bool inFrustum(const Vec3& pointCam, const CameraIntrinsics& intrinsics);
std::vector<std::uint8_t> inFrustum(std::span<const Vec3> pointsCam,
                                    const CameraIntrinsics& intrinsics);

/// World-space points straight to a frustum mask for the given pose.
std::vector<std::uint8_t> frustumMaskWorld(std::span<const Vec3> pointsWorld,
                                           const Pose6DoF& pose,
                                           const CameraIntrinsics& intrinsics);

struct SinCos {
  double sin = 0.0;
  double cos = 1.0;
};

struct AngleEncoding {
  SinCos yaw;
  SinCos pitch;
  SinCos roll;
};

struct Orientation {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

AngleEncoding encodeAngles(const Pose6DoF& pose);

/// atan2 per pair; pairs need not be unit length. Throws
/// DegenerateEncodingError for a (0, 0) pair.
Orientation decodeAngles(const AngleEncoding& enc);

}  // namespace cellvis
