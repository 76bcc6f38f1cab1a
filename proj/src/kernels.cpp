#include "cellvis/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cellvis::kernels {
namespace {

// Per-element bodies shared by both variants so the arithmetic is identical.

struct FrustumOp {
  Mat3 rt;
  Vec3 position;
  const CameraIntrinsics* intr;

  std::uint8_t operator()(const Vec3& p) const {
    return inFrustum(project(rt * (p - position), *intr), *intr) ? 1 : 0;
  }
};

inline int clampAxis(double rel, double size, int dim, bool& clamped) {
  double f = std::floor(rel / size);
  if (f < 0.0 || std::isnan(f)) {
    clamped = true;
    return 0;
  }
  if (f > dim - 1) {
    clamped = true;
    return dim - 1;
  }
  return static_cast<int>(f);
}

inline std::uint32_t cellOf(const Vec3& p, const GridIndexer& g, bool& clamped) {
  const int ix = clampAxis(p.x - g.origin.x, g.cellSize.x, g.dims[0], clamped);
  const int iy = clampAxis(p.y - g.origin.y, g.cellSize.y, g.dims[1], clamped);
  const int iz = clampAxis(p.z - g.origin.z, g.cellSize.z, g.dims[2], clamped);
  return static_cast<std::uint32_t>(ix + g.dims[0] * (iy + g.dims[1] * iz));
}

inline VoxelKey keyOf(const Vec3& p, double voxelSize) {
  return {static_cast<std::int64_t>(std::floor(p.x / voxelSize)),
          static_cast<std::int64_t>(std::floor(p.y / voxelSize)),
          static_cast<std::int64_t>(std::floor(p.z / voxelSize))};
}

inline Vec3 flipOne(const Vec3& p, const Vec3& viewpoint, double radius) {
  const Vec3 q = p - viewpoint;
  const double len = norm(q);
  if (len <= 1e-9) return p;
  return viewpoint + q + (2.0 * (radius - len) / len) * q;
}

inline std::uint32_t viewportCountOne(std::size_t cell, const GridIndexer& g, int n,
                                      const FrustumOp& op) {
  const int ix = static_cast<int>(cell % g.dims[0]);
  const int iy = static_cast<int>((cell / g.dims[0]) % g.dims[1]);
  const int iz = static_cast<int>(cell / (static_cast<std::size_t>(g.dims[0]) * g.dims[1]));
  std::uint32_t count = 0;
  for (int c = 0; c < n; ++c)
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) {
        const Vec3 s{g.origin.x + (ix + (a + 0.5) / n) * g.cellSize.x,
                     g.origin.y + (iy + (b + 0.5) / n) * g.cellSize.y,
                     g.origin.z + (iz + (c + 0.5) / n) * g.cellSize.z};
        count += op(s);
      }
  return count;
}

std::size_t cellCount(const GridIndexer& g) {
  return static_cast<std::size_t>(g.dims[0]) * g.dims[1] * g.dims[2];
}

}  // namespace

int threadCount() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void frustumMask(std::span<const Vec3> world, const Pose6DoF& pose,
                 const CameraIntrinsics& intr, std::span<std::uint8_t> out) {
  const FrustumOp op{rotationMatrix(pose).transposed(), pose.position, &intr};
  for (std::size_t i = 0; i < world.size(); ++i) out[i] = op(world[i]);
}

std::size_t assignCells(std::span<const Vec3> points, const GridIndexer& grid,
                        std::span<std::uint32_t> out) {
  std::size_t clampedCount = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool clamped = false;
    out[i] = cellOf(points[i], grid, clamped);
    clampedCount += clamped;
  }
  return clampedCount;
}

void voxelKeys(std::span<const Vec3> points, double voxelSize, std::span<VoxelKey> out) {
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = keyOf(points[i], voxelSize);
}

void sphericalFlip(std::span<const Vec3> points, const Vec3& viewpoint, double radius,
                   std::span<Vec3> out) {
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = flipOne(points[i], viewpoint, radius);
}

void viewportCounts(const GridIndexer& grid, int perAxis, const Pose6DoF& pose,
                    const CameraIntrinsics& intr, std::span<std::uint32_t> out) {
  const FrustumOp op{rotationMatrix(pose).transposed(), pose.position, &intr};
  for (std::size_t c = 0; c < cellCount(grid); ++c)
    out[c] = viewportCountOne(c, grid, perAxis, op);
}

}  // namespace serial

namespace parallel {

void frustumMask(std::span<const Vec3> world, const Pose6DoF& pose,
                 const CameraIntrinsics& intr, std::span<std::uint8_t> out) {
  const FrustumOp op{rotationMatrix(pose).transposed(), pose.position, &intr};
  const auto n = static_cast<std::ptrdiff_t>(world.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = op(world[i]);
}

std::size_t assignCells(std::span<const Vec3> points, const GridIndexer& grid,
                        std::span<std::uint32_t> out) {
  std::size_t clampedCount = 0;
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static) reduction(+ : clampedCount)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    bool clamped = false;
    out[i] = cellOf(points[i], grid, clamped);
    clampedCount += clamped;
  }
  return clampedCount;
}

void voxelKeys(std::span<const Vec3> points, double voxelSize, std::span<VoxelKey> out) {
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = keyOf(points[i], voxelSize);
}

void sphericalFlip(std::span<const Vec3> points, const Vec3& viewpoint, double radius,
                   std::span<Vec3> out) {
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = flipOne(points[i], viewpoint, radius);
}

void viewportCounts(const GridIndexer& grid, int perAxis, const Pose6DoF& pose,
                    const CameraIntrinsics& intr, std::span<std::uint32_t> out) {
  const FrustumOp op{rotationMatrix(pose).transposed(), pose.position, &intr};
  const auto n = static_cast<std::ptrdiff_t>(cellCount(grid));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < n; ++c)
    out[c] = viewportCountOne(static_cast<std::size_t>(c), grid, perAxis, op);
}

}  // namespace parallel
}  // namespace cellvis::kernels
