#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cellvis/camera.hpp"
#include "cellvis/geometry.hpp"

namespace cellvis {

struct HprParams {
  /// Flip radius R = 10^gamma * (max distance from the viewpoint).
  double gamma = 1.0;

  double radiusFor(double maxDistance) const;
};

struct VisibilityResult {
  std::vector<std::uint32_t> visibleIndices;  // sorted, unique
  Vec3 viewpoint;
};

/// Spherical inversion about `viewpoint`: with q = p - viewpoint the image is
/// viewpoint + q + 2 (R - |q|) q / |q|. Points within 1e-9 of the viewpoint
/// are returned unchanged. Throws ParameterError when some point lies farther
/// than R from the viewpoint.
std::vector<Vec3> sphericalFlip(std::span<const Vec3> points, const Vec3& viewpoint,
                                double radius);

/// Hidden point removal: flip, add the viewpoint, take the convex hull; a
/// point is visible iff its flipped image is a hull vertex.
VisibilityResult hprVisible(std::span<const Vec3> points, const Vec3& viewpoint,
                            const HprParams& params = {});

/// Rendering-style reference: every in-frustum point paints a
/// splatPx x splatPx block centered on its pixel into a depth buffer. A point
/// is visible iff at some pixel of its block it is the nearest point, or lies
/// within `depthSlack * splatPx * z / fx` (the block's world-space width at its
/// depth) behind the nearest one. depthSlack = 0 gives a strict z-buffer.
VisibilityResult zbufferOracle(std::span<const Vec3> points, const Pose6DoF& pose,
                               const CameraIntrinsics& intrinsics, int splatPx = 3,
                               double depthSlack = 1.0);

/// |A ∩ B| / |A ∪ B| for sorted unique index sets; 1 when both are empty.
double jaccard(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

}  // namespace cellvis
