#pragma once

// Data-parallel inner loops of the feature pipeline. Every kernel exists
// twice with identical signatures: `serial` is the plain reference used by
// tests, `parallel` is the OpenMP version used by the library. Outputs are
// element-wise identical regardless of thread count.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cellvis/camera.hpp"
#include "cellvis/geometry.hpp"

namespace cellvis::kernels {

struct GridIndexer {
  Vec3 origin;
  Vec3 cellSize;
  std::array<int, 3> dims{1, 1, 1};
};

struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

#define CELLVIS_KERNEL_DECLS                                                           \
  /* Frustum membership of world points under a pose; one byte per point. */         \
  void frustumMask(std::span<const Vec3> world, const Pose6DoF& pose,                  \
                   const CameraIntrinsics& intr, std::span<std::uint8_t> out);         \
  /* Raster (x-fastest) cell index per point, clamped into the grid. Returns the   */ \
  /* number of points that needed clamping.                                        */ \
  std::size_t assignCells(std::span<const Vec3> points, const GridIndexer& grid,       \
                          std::span<std::uint32_t> out);                               \
  void voxelKeys(std::span<const Vec3> points, double voxelSize,                       \
                 std::span<VoxelKey> out);                                             \
  void sphericalFlip(std::span<const Vec3> points, const Vec3& viewpoint,              \
                     double radius, std::span<Vec3> out);                              \
  /* Per-cell count of lattice samples (perAxis^3 per cell) inside the frustum. */    \
  void viewportCounts(const GridIndexer& grid, int perAxis, const Pose6DoF& pose,      \
                      const CameraIntrinsics& intr, std::span<std::uint32_t> out);

namespace serial {
CELLVIS_KERNEL_DECLS
}  // namespace serial

namespace parallel {
CELLVIS_KERNEL_DECLS
}  // namespace parallel

#undef CELLVIS_KERNEL_DECLS

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int threadCount();

}  // namespace cellvis::kernels
