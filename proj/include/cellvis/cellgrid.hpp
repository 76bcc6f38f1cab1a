#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cellvis/camera.hpp"
#include "cellvis/geometry.hpp"
#include "cellvis/hpr.hpp"
#include "cellvis/kernels.hpp"
#include "cellvis/pointcloud.hpp"

namespace cellvis {

using GridDims = std::array<int, 3>;

inline constexpr GridDims kDefaultGridDims{5, 6, 8};

/// Fixed partition of the video's bounding box. Cells are numbered in raster
/// order with x fastest: id = ix + nx * (iy + ny * iz).
struct CellGrid {
  Vec3 bboxMin;
  Vec3 bboxMax;
  GridDims dims{1, 1, 1};
  Vec3 cellSize;

  std::size_t cellCount() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::array<int, 3> coords(std::size_t cell) const;
  std::size_t cellId(int ix, int iy, int iz) const {
    return static_cast<std::size_t>(ix) + dims[0] * (static_cast<std::size_t>(iy) +
                                                     static_cast<std::size_t>(dims[1]) * iz);
  }
  Vec3 cellCenter(std::size_t cell) const;
  kernels::GridIndexer indexer() const { return {bboxMin, cellSize, dims}; }
};

inline constexpr double kGridInflation = 1e-6;

/// Bounding box over every point of every frame, inflated by 1e-6 on each
/// side. Throws ArgumentError when all frames are empty or dims are not positive.
CellGrid buildGrid(std::span<const PointCloudFrame> frames, const GridDims& dims = kDefaultGridDims);
CellGrid buildGrid(const FrameSequence& sequence, const GridDims& dims = kDefaultGridDims);
/// Grid over the box [lo, hi] with the same inflation as buildGrid.
CellGrid gridFromBounds(const Vec3& lo, const Vec3& hi, const GridDims& dims = kDefaultGridDims);

struct GridGraph {
  std::size_t nodeCount = 0;
  int connectivity = 6;
  std::vector<std::vector<std::uint32_t>> adjacency;  // sorted, no self loops

  std::size_t edgeCount() const;  // undirected
};

/// Throws ConfigError unless connectivity is 6 or 26.
GridGraph buildGraph(const GridDims& dims, int connectivity);
inline GridGraph buildGraph(const CellGrid& grid, int connectivity) {
  return buildGraph(grid.dims, connectivity);
}

struct CellAssignment {
  std::vector<std::uint32_t> cellOfPoint;
  std::vector<std::uint32_t> counts;   // o_i
  std::vector<double> occupancyNorm;   // o_i / max_j o_j
  std::size_t clampedPoints = 0;       // points outside the bbox, clamped inward
};

CellAssignment assignCells(const PointCloudFrame& frame, const CellGrid& grid);

/// Lattice samples per cell must be a perfect cube (n^3 with offsets (k+0.5)/n).
std::vector<double> viewportFeature(const CellGrid& grid, const Pose6DoF& pose,
                                    const CameraIntrinsics& intrinsics, int samplesPerCell = 64);

struct VisibilityFeature {
  std::vector<double> v;                 // visible count / o_i, 0 for empty cells
  std::vector<std::uint32_t> visibleCounts;
  std::size_t totalVisible = 0;          // visible, in-frustum original points
};

/// voxel_downsample -> HPR -> frustum filter -> upsample -> per-cell ratio.
/// `assignment` must come from assignCells(frame, grid).
VisibilityFeature visibilityFeature(const PointCloudFrame& frame, const CellAssignment& assignment,
                                    const Pose6DoF& pose, const CameraIntrinsics& intrinsics,
                                    const HprParams& hpr, double voxelSize);
VisibilityFeature visibilityFeature(const PointCloudFrame& frame, const CellGrid& grid,
                                    const Pose6DoF& pose, const CameraIntrinsics& intrinsics,
                                    const HprParams& hpr, double voxelSize);

/// Per cell: center (x, y, z) and distance from the center to the viewer.
std::vector<std::array<double, 4>> otherFeatures(const CellGrid& grid, const Pose6DoF& pose);

struct FeatureOptions {
  CameraIntrinsics intrinsics;
  HprParams hpr;
  double voxelSize = 8.0;  // frame units
  int samplesPerCell = 64;
};

struct CellFeatureFrame {
  std::uint64_t frameIndex = 0;
  std::vector<std::uint32_t> occupancy;
  std::vector<double> occupancyNorm;
  std::vector<double> viewport;
  std::vector<double> visibility;
  std::vector<std::array<double, 4>> aux;
  std::size_t totalVisible = 0;
  std::size_t clampedPoints = 0;

  std::size_t cellCount() const { return occupancy.size(); }
};

CellFeatureFrame computeFrameFeatures(const PointCloudFrame& frame, const CellGrid& grid,
                                      const Pose6DoF& pose, const FeatureOptions& options);

/// Features for every frame, in parallel over frames, ordered by input.
/// `poses[i]` belongs to `frames[i]`.
std::vector<CellFeatureFrame> computeSequenceFeatures(std::span<const PointCloudFrame> frames,
                                                      std::span<const Pose6DoF> poses,
                                                      const CellGrid& grid,
                                                      const FeatureOptions& options);

/// Channel order of the model input and of FVT1 files.
inline const std::vector<std::string> kFeatureChannels = {
    "occupancy_norm", "f", "v", "center_x", "center_y", "center_z", "dist"};

enum FeatureChannel : int {
  kOccupancy = 0,
  kViewport = 1,
  kVisibility = 2,
  kCenterX = 3,
  kCenterY = 4,
  kCenterZ = 5,
  kDistance = 6,
};

/// Dense (T, cells, channels) float32 block, time-major.
struct FeatureTensor {
  std::size_t frames = 0;
  std::size_t cells = 0;
  std::vector<std::string> channels;
  std::vector<float> data;

  float at(std::size_t t, std::size_t cell, std::size_t ch) const {
    return data[(t * cells + cell) * channels.size() + ch];
  }
  float& at(std::size_t t, std::size_t cell, std::size_t ch) {
    return data[(t * cells + cell) * channels.size() + ch];
  }
};

FeatureTensor toFeatureTensor(std::span<const CellFeatureFrame> frames);

/// FVT1: "FVT1", u32 T, u32 cells, u32 channels, per channel (u32 length,
/// name bytes), then T*cells*channels little-endian float32 values.
void writeFvt(const std::filesystem::path& path, const FeatureTensor& tensor);
std::vector<char> encodeFvt(const FeatureTensor& tensor);
FeatureTensor readFvt(const std::filesystem::path& path);
FeatureTensor decodeFvt(std::span<const char> bytes);

/// CSV with header "frame,cell_0,...": one row per frame for one channel.
void writeChannelCsv(const std::filesystem::path& path, const FeatureTensor& tensor,
                     std::size_t channel);

struct CorrelationResult {
  std::vector<std::uint32_t> cells;
  std::vector<double> r;            // row-major |cells| x |cells|
  std::vector<std::uint8_t> degenerate;  // per cell: series was constant

  double at(std::size_t i, std::size_t j) const { return r[i * cells.size() + j]; }
};

/// Pearson correlation of two series. Returns 0 and sets `degenerate` when
/// either is constant. Throws ArgumentError on length mismatch or < 2 samples.
double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate = nullptr);

/// Correlation across time between the chosen cells' series of one channel.
CorrelationResult correlationAnalysis(const FeatureTensor& tensor, std::size_t channel,
                                      std::span<const std::uint32_t> cells);

struct DecayPoint {
  int distance = 0;
  double meanCorrelation = 0.0;
  std::size_t pairs = 0;  // non-degenerate pairs at this offset
};

/// Mean correlation of cell pairs `d` steps apart along `axis` (0 x, 1 y,
/// 2 z) for d = 1..maxDistance. Pairs with a constant series are skipped.
std::vector<DecayPoint> correlationDecay(const FeatureTensor& tensor, std::size_t channel,
                                         const GridDims& dims, int axis, int maxDistance);

}  // namespace cellvis
