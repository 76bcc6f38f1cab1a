#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cellvis/geometry.hpp"

namespace cellvis {

/// Indices (sorted) of the extreme points of the input set.
///
/// Quickhull with outside sets. Plane tests use a distance tolerance of
/// 1e-10 times the bounding-box diagonal; points within it of a face count as
/// on the face and are not hull vertices. Degenerate inputs: fewer than four
/// points are returned unchanged; coincident, collinear and coplanar sets
/// return the extreme points of the lower-dimensional hull.
std::vector<std::uint32_t> convexHull3d(std::span<const Vec3> points);

/// Tolerance used for `points`.
double hullEpsilon(std::span<const Vec3> points);

}  // namespace cellvis
