#include "cellvis/cellgrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cellvis/errors.hpp"

namespace cellvis {

std::array<int, 3> CellGrid::coords(std::size_t cell) const {
  return {static_cast<int>(cell % dims[0]), static_cast<int>((cell / dims[0]) % dims[1]),
          static_cast<int>(cell / (static_cast<std::size_t>(dims[0]) * dims[1]))};
}

Vec3 CellGrid::cellCenter(std::size_t cell) const {
  const auto c = coords(cell);
  return {bboxMin.x + (c[0] + 0.5) * cellSize.x, bboxMin.y + (c[1] + 0.5) * cellSize.y,
          bboxMin.z + (c[2] + 0.5) * cellSize.z};
}

CellGrid buildGrid(std::span<const PointCloudFrame> frames, const GridDims& dims) {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw ArgumentError("build_grid: dims must be positive");
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vec3 lo{inf, inf, inf}, hi{-inf, -inf, -inf};
  bool any = false;
  for (const auto& f : frames)
    for (const auto& p : f.positions) {
      any = true;
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
  if (!any) throw ArgumentError("build_grid: all frames are empty");
  return gridFromBounds(lo, hi, dims);
}

CellGrid gridFromBounds(const Vec3& lo, const Vec3& hi, const GridDims& dims) {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw ArgumentError("build_grid: dims must be positive");
  CellGrid g;
  g.dims = dims;
  g.bboxMin = lo - Vec3{kGridInflation, kGridInflation, kGridInflation};
  g.bboxMax = hi + Vec3{kGridInflation, kGridInflation, kGridInflation};
  for (int a = 0; a < 3; ++a) g.cellSize[a] = (g.bboxMax[a] - g.bboxMin[a]) / dims[a];
  return g;
}

CellGrid buildGrid(const FrameSequence& sequence, const GridDims& dims) {
  return buildGrid(std::span<const PointCloudFrame>(sequence.frames), dims);
}

std::size_t GridGraph::edgeCount() const {
  std::size_t twice = 0;
  for (const auto& n : adjacency) twice += n.size();
  return twice / 2;
}

GridGraph buildGraph(const GridDims& dims, int connectivity) {
  if (connectivity != 6 && connectivity != 26)
    throw ConfigError("build_graph: connectivity must be 6 or 26, got " +
                      std::to_string(connectivity));
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw ArgumentError("build_graph: dims must be positive");
  CellGrid shape;
  shape.dims = dims;
  GridGraph g;
  g.nodeCount = shape.cellCount();
  g.connectivity = connectivity;
  g.adjacency.resize(g.nodeCount);
  for (std::size_t id = 0; id < g.nodeCount; ++id) {
    const auto c = shape.coords(id);
    auto& nbrs = g.adjacency[id];
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
          if (manhattan == 0) continue;
          if (connectivity == 6 && manhattan != 1) continue;
          const int x = c[0] + dx, y = c[1] + dy, z = c[2] + dz;
          if (x < 0 || y < 0 || z < 0 || x >= dims[0] || y >= dims[1] || z >= dims[2]) continue;
          nbrs.push_back(static_cast<std::uint32_t>(shape.cellId(x, y, z)));
        }
    std::sort(nbrs.begin(), nbrs.end());
  }
  return g;
}

CellAssignment assignCells(const PointCloudFrame& frame, const CellGrid& grid) {
  CellAssignment a;
  a.cellOfPoint.resize(frame.size());
  a.clampedPoints = kernels::parallel::assignCells(frame.positions, grid.indexer(), a.cellOfPoint);
  a.counts.assign(grid.cellCount(), 0);
  for (auto c : a.cellOfPoint) ++a.counts[c];
  const auto maxCount = a.counts.empty() ? 0u : *std::max_element(a.counts.begin(), a.counts.end());
  a.occupancyNorm.assign(grid.cellCount(), 0.0);
  if (maxCount > 0)
    for (std::size_t i = 0; i < a.counts.size(); ++i)
      a.occupancyNorm[i] = static_cast<double>(a.counts[i]) / maxCount;
  return a;
}

std::vector<double> viewportFeature(const CellGrid& grid, const Pose6DoF& pose,
                                    const CameraIntrinsics& intr, int samplesPerCell) {
  const int perAxis = static_cast<int>(std::lround(std::cbrt(static_cast<double>(samplesPerCell))));
  if (samplesPerCell <= 0 || perAxis * perAxis * perAxis != samplesPerCell)
    throw ArgumentError("viewport_feature: samples per cell must be a perfect cube, got " +
                        std::to_string(samplesPerCell));
  std::vector<std::uint32_t> counts(grid.cellCount());
  kernels::parallel::viewportCounts(grid.indexer(), perAxis, pose, intr, counts);
  std::vector<double> f(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    f[i] = static_cast<double>(counts[i]) / samplesPerCell;
  return f;
}

VisibilityFeature visibilityFeature(const PointCloudFrame& frame, const CellAssignment& assignment,
                                    const Pose6DoF& pose, const CameraIntrinsics& intr,
                                    const HprParams& hpr, double voxelSize) {
  const std::size_t cells = assignment.counts.size();
  VisibilityFeature out;
  out.v.assign(cells, 0.0);
  out.visibleCounts.assign(cells, 0);
  if (frame.empty()) return out;

  const Downsampled ds = voxelDownsample(frame, voxelSize);
  const VisibilityResult vis = hprVisible(ds.frame.positions, pose.position, hpr);

  std::vector<Vec3> visiblePositions;
  visiblePositions.reserve(vis.visibleIndices.size());
  for (auto r : vis.visibleIndices) visiblePositions.push_back(ds.frame.positions[r]);
  std::vector<std::uint8_t> inView(visiblePositions.size());
  kernels::parallel::frustumMask(visiblePositions, pose, intr, inView);
  std::vector<std::uint32_t> kept;
  kept.reserve(vis.visibleIndices.size());
  for (std::size_t k = 0; k < vis.visibleIndices.size(); ++k)
    if (inView[k]) kept.push_back(vis.visibleIndices[k]);

  const auto originals = upsampleVisibility(ds.mapping, kept);
  out.totalVisible = originals.size();
  for (auto idx : originals) ++out.visibleCounts[assignment.cellOfPoint[idx]];
  for (std::size_t i = 0; i < cells; ++i)
    if (assignment.counts[i] > 0)
      out.v[i] = static_cast<double>(out.visibleCounts[i]) / assignment.counts[i];
  return out;
}

VisibilityFeature visibilityFeature(const PointCloudFrame& frame, const CellGrid& grid,
                                    const Pose6DoF& pose, const CameraIntrinsics& intr,
                                    const HprParams& hpr, double voxelSize) {
  return visibilityFeature(frame, assignCells(frame, grid), pose, intr, hpr, voxelSize);
}

std::vector<std::array<double, 4>> otherFeatures(const CellGrid& grid, const Pose6DoF& pose) {
  std::vector<std::array<double, 4>> e(grid.cellCount());
  for (std::size_t i = 0; i < e.size(); ++i) {
    const Vec3 c = grid.cellCenter(i);
    e[i] = {c.x, c.y, c.z, norm(c - pose.position)};
  }
  return e;
}

CellFeatureFrame computeFrameFeatures(const PointCloudFrame& frame, const CellGrid& grid,
                                      const Pose6DoF& pose, const FeatureOptions& options) {
  CellFeatureFrame out;
  out.frameIndex = frame.frameIndex;
  const CellAssignment a = assignCells(frame, grid);
  out.occupancy = a.counts;
  out.occupancyNorm = a.occupancyNorm;
  out.clampedPoints = a.clampedPoints;
  out.viewport = viewportFeature(grid, pose, options.intrinsics, options.samplesPerCell);
  VisibilityFeature v =
      visibilityFeature(frame, a, pose, options.intrinsics, options.hpr, options.voxelSize);
  out.visibility = std::move(v.v);
  out.totalVisible = v.totalVisible;
  out.aux = otherFeatures(grid, pose);
  return out;
}

std::vector<CellFeatureFrame> computeSequenceFeatures(std::span<const PointCloudFrame> frames,
                                                      std::span<const Pose6DoF> poses,
                                                      const CellGrid& grid,
                                                      const FeatureOptions& options) {
  if (frames.size() != poses.size())
    throw ArgumentError("feature extraction: " + std::to_string(frames.size()) + " frames but " +
                        std::to_string(poses.size()) + " poses");
  options.intrinsics.validate();
  std::vector<CellFeatureFrame> out(frames.size());
  const auto n = static_cast<std::ptrdiff_t>(frames.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = computeFrameFeatures(frames[i], grid, poses[i], options);
    } catch (...) {
#pragma omp critical(cellvis_feature_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

FeatureTensor toFeatureTensor(std::span<const CellFeatureFrame> frames) {
  FeatureTensor t;
  t.frames = frames.size();
  t.cells = frames.empty() ? 0 : frames[0].cellCount();
  t.channels = kFeatureChannels;
  t.data.resize(t.frames * t.cells * t.channels.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    if (fr.cellCount() != t.cells) throw ShapeError("feature tensor: cell count differs by frame");
    for (std::size_t c = 0; c < t.cells; ++c) {
      t.at(f, c, kOccupancy) = static_cast<float>(fr.occupancyNorm[c]);
      t.at(f, c, kViewport) = static_cast<float>(fr.viewport[c]);
      t.at(f, c, kVisibility) = static_cast<float>(fr.visibility[c]);
      for (int k = 0; k < 4; ++k) t.at(f, c, kCenterX + k) = static_cast<float>(fr.aux[c][k]);
    }
  }
  return t;
}

}  // namespace cellvis
