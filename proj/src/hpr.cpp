#include "cellvis/hpr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cellvis/errors.hpp"
#include "cellvis/hull.hpp"
#include "cellvis/kernels.hpp"

namespace cellvis {

namespace {
constexpr double kCoincident = 1e-9;
}

double HprParams::radiusFor(double maxDistance) const {
  return std::pow(10.0, gamma) * maxDistance;
}

std::vector<Vec3> sphericalFlip(std::span<const Vec3> points, const Vec3& viewpoint,
                                double radius) {
  double maxDist = 0.0;
  for (const auto& p : points) maxDist = std::max(maxDist, norm(p - viewpoint));
  if (!(radius >= maxDist) || !(radius > 0.0))
    throw ParameterError("spherical_flip: radius " + std::to_string(radius) +
                         " does not exceed max distance " + std::to_string(maxDist));
  std::vector<Vec3> out(points.size());
  kernels::parallel::sphericalFlip(points, viewpoint, radius, out);
  return out;
}

VisibilityResult hprVisible(std::span<const Vec3> points, const Vec3& viewpoint,
                            const HprParams& params) {
  VisibilityResult result;
  result.viewpoint = viewpoint;
  if (points.empty()) return result;

  std::vector<std::uint32_t> flippedToInput;
  std::vector<Vec3> candidates;
  flippedToInput.reserve(points.size());
  candidates.reserve(points.size());
  double maxDist = 0.0;
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    const double d = norm(points[i] - viewpoint);
    if (d <= kCoincident) {
      result.visibleIndices.push_back(i);
    } else {
      flippedToInput.push_back(i);
      candidates.push_back(points[i]);
      maxDist = std::max(maxDist, d);
    }
  }
  if (!candidates.empty()) {
    const double radius = params.radiusFor(maxDist);
    if (!(radius > maxDist))
      throw ParameterError("hpr: gamma " + std::to_string(params.gamma) +
                           " gives a flip radius not exceeding the cloud extent");
    std::vector<Vec3> flipped(candidates.size() + 1);
    kernels::parallel::sphericalFlip(candidates, viewpoint, radius,
                                     std::span(flipped).first(candidates.size()));
    flipped.back() = viewpoint;
    const auto viewpointIdx = static_cast<std::uint32_t>(candidates.size());
    for (auto h : convexHull3d(flipped))
      if (h != viewpointIdx) result.visibleIndices.push_back(flippedToInput[h]);
  }
  std::sort(result.visibleIndices.begin(), result.visibleIndices.end());
  return result;
}

VisibilityResult zbufferOracle(std::span<const Vec3> points, const Pose6DoF& pose,
                               const CameraIntrinsics& intr, int splatPx, double depthSlack) {
  if (splatPx < 1) throw ArgumentError("zbuffer_oracle: splat_px must be >= 1");
  if (!(depthSlack >= 0.0)) throw ArgumentError("zbuffer_oracle: depth slack must be >= 0");
  VisibilityResult result;
  result.viewpoint = pose.position;

  const Mat3 rt = rotationMatrix(pose).transposed();
  struct Splat {
    std::uint32_t index;
    double depth;
    int px, py;
  };
  std::vector<Splat> splats;
  int minX = std::numeric_limits<int>::max(), minY = minX;
  int maxX = std::numeric_limits<int>::min(), maxY = maxX;
  const int half = splatPx / 2;
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    const Projection pr = project(rt * (points[i] - pose.position), intr);
    if (!inFrustum(pr, intr)) continue;
    const int px = static_cast<int>(std::floor(pr.u));
    const int py = static_cast<int>(std::floor(pr.v));
    splats.push_back({i, pr.z, px, py});
    minX = std::min(minX, std::max(0, px - half));
    minY = std::min(minY, std::max(0, py - half));
    maxX = std::max(maxX, std::min(intr.width - 1, px - half + splatPx - 1));
    maxY = std::max(maxY, std::min(intr.height - 1, py - half + splatPx - 1));
  }
  if (splats.empty()) return result;

  const int w = maxX - minX + 1, h = maxY - minY + 1;
  constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<double> depth(static_cast<std::size_t>(w) * h,
                            std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> owner(depth.size(), kNone);
  for (std::uint32_t s = 0; s < splats.size(); ++s) {
    const auto& sp = splats[s];
    for (int y = std::max(minY, sp.py - half); y <= std::min(maxY, sp.py - half + splatPx - 1); ++y)
      for (int x = std::max(minX, sp.px - half); x <= std::min(maxX, sp.px - half + splatPx - 1);
           ++x) {
        const std::size_t cell = static_cast<std::size_t>(y - minY) * w + (x - minX);
        // Ties keep the earlier point so the result is order-deterministic.
        if (sp.depth < depth[cell]) {
          depth[cell] = sp.depth;
          owner[cell] = s;
        }
      }
  }
  // A point survives if it is within the depth slack of the front surface at
  // any pixel of its footprint. The slack is the world-space width of the
  // footprint at the point's depth, scaled by `depthSlack`.
  for (std::uint32_t s = 0; s < splats.size(); ++s) {
    const auto& sp = splats[s];
    const double slack = depthSlack * splatPx * sp.depth / intr.fx;
    bool seen = false;
    for (int y = std::max(minY, sp.py - half);
         !seen && y <= std::min(maxY, sp.py - half + splatPx - 1); ++y)
      for (int x = std::max(minX, sp.px - half);
           !seen && x <= std::min(maxX, sp.px - half + splatPx - 1); ++x) {
        const std::size_t cell = static_cast<std::size_t>(y - minY) * w + (x - minX);
        seen = owner[cell] == s || sp.depth <= depth[cell] + slack;
      }
    if (seen) result.visibleIndices.push_back(sp.index);
  }
  std::sort(result.visibleIndices.begin(), result.visibleIndices.end());
  return result;
}

double jaccard(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

}  // namespace cellvis
