#include "cellvis/camera.hpp"

#include <cmath>
#include <string>

#include "cellvis/errors.hpp"
#include "cellvis/kernels.hpp"

namespace cellvis {

double canonicalAngle(double radians) {
  constexpr double twoPi = 2.0 * std::numbers::pi;
  double wrapped = radians - twoPi * std::floor((radians + std::numbers::pi) / twoPi);
  // floor() rounding can land exactly on +pi for inputs a hair below it.
  if (wrapped >= std::numbers::pi) wrapped -= twoPi;
  if (wrapped < -std::numbers::pi) wrapped = -std::numbers::pi;
  return wrapped;
}

Pose6DoF Pose6DoF::canonical() const {
  return {position, canonicalAngle(yaw), canonicalAngle(pitch), canonicalAngle(roll)};
}

bool Pose6DoF::isValid() const {
  auto inRange = [](double a) {
    return std::isfinite(a) && a >= -std::numbers::pi && a < std::numbers::pi;
  };
  return isFinite(position) && inRange(yaw) && inRange(pitch) && inRange(roll);
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw ParameterError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw ParameterError("intrinsics: image size must be positive");
  if (!(dNear > 0.0) || !(dNear < dFar))
    throw ParameterError("intrinsics: require 0 < d_near < d_far, got d_near=" +
                         std::to_string(dNear) + " d_far=" + std::to_string(dFar));
}

Mat3 rotationMatrix(const Pose6DoF& pose) {
  const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
  const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
  const double cr = std::cos(pose.roll), sr = std::sin(pose.roll);

  Mat3 rx{{1, 0, 0, 0, cp, -sp, 0, sp, cp}};
  Mat3 ry{{cy, 0, sy, 0, 1, 0, -sy, 0, cy}};
  Mat3 rz{{cr, -sr, 0, sr, cr, 0, 0, 0, 1}};
  return rz * ry * rx;
}

Vec3 worldToCamera(const Vec3& point, const Pose6DoF& pose) {
  return rotationMatrix(pose).transposed() * (point - pose.position);
}

std::vector<Vec3> worldToCamera(std::span<const Vec3> points, const Pose6DoF& pose) {
  const Mat3 rt = rotationMatrix(pose).transposed();
  std::vector<Vec3> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = rt * (points[i] - pose.position);
  return out;
}

Projection project(const Vec3& p, const CameraIntrinsics& intr) {
  Projection out;
  out.z = p.z;
  if (p.z <= 0.0) return out;
  out.u = intr.fx * p.x / p.z + intr.cx;
  out.v = intr.fy * p.y / p.z + intr.cy;
  out.valid = true;
  return out;
}

std::vector<Projection> project(std::span<const Vec3> pointsCam, const CameraIntrinsics& intr) {
  std::vector<Projection> out(pointsCam.size());
  for (std::size_t i = 0; i < pointsCam.size(); ++i) out[i] = project(pointsCam[i], intr);
  return out;
}

bool inFrustum(const Projection& p, const CameraIntrinsics& intr) {
  return p.valid && p.u >= 0.0 && p.u < intr.width && p.v >= 0.0 && p.v < intr.height &&
         p.z > intr.dNear && p.z < intr.dFar;
}

bool inFrustum(const Vec3& pointCam, const CameraIntrinsics& intr) {
  return inFrustum(project(pointCam, intr), intr);
}

std::vector<std::uint8_t> inFrustum(std::span<const Vec3> pointsCam,
                                    const CameraIntrinsics& intr) {
  std::vector<std::uint8_t> out(pointsCam.size());
  for (std::size_t i = 0; i < pointsCam.size(); ++i) out[i] = inFrustum(pointsCam[i], intr);
  return out;
}

std::vector<std::uint8_t> frustumMaskWorld(std::span<const Vec3> pointsWorld,
                                           const Pose6DoF& pose,
                                           const CameraIntrinsics& intr) {
  std::vector<std::uint8_t> out(pointsWorld.size());
  kernels::parallel::frustumMask(pointsWorld, pose, intr, out);
  return out;
}

AngleEncoding encodeAngles(const Pose6DoF& pose) {
  auto enc = [](double a) { return SinCos{std::sin(a), std::cos(a)}; };
  return {enc(pose.yaw), enc(pose.pitch), enc(pose.roll)};
}

Orientation decodeAngles(const AngleEncoding& enc) {
  auto dec = [](const SinCos& sc, const char* name) {
    if (sc.sin == 0.0 && sc.cos == 0.0)
      throw DegenerateEncodingError(std::string("decode_angles: zero (sin, cos) pair for ") +
                                    name);
    if (!std::isfinite(sc.sin) || !std::isfinite(sc.cos))
      throw ArgumentError(std::string("decode_angles: non-finite pair for ") + name);
    return canonicalAngle(std::atan2(sc.sin, sc.cos));
  };
  return {dec(enc.yaw, "yaw"), dec(enc.pitch, "pitch"), dec(enc.roll, "roll")};
}

}  // namespace cellvis
