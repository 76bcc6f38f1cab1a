#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellvis/camera.hpp"
#include "cellvis/geometry.hpp"

namespace cellvis {

using Color = std::array<std::uint8_t, 3>;

struct Point {
  Vec3 position;
  Color color{0, 0, 0};
};

/// One frame of a point cloud video. Stored as parallel position/color
/// arrays so the geometry kernels can work on contiguous positions.
struct PointCloudFrame {
  std::uint64_t frameIndex = 0;
  std::vector<Vec3> positions;
  std::vector<Color> colors;
  /// Meters per unit that has been applied to `positions`; 1 for raw data.
  double sourceScale = 1.0;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  Point point(std::size_t i) const { return {positions[i], colors[i]}; }
  void push_back(const Point& p) {
    positions.push_back(p.position);
    colors.push_back(p.color);
  }
};

struct FrameSequence {
  std::vector<PointCloudFrame> frames;
  double fps = 30.0;

  /// Throws OrderingError if frame indices are not strictly increasing.
  void validate() const;
};

/// Downsampled-to-original correspondence in CSR layout: the originals
/// represented by downsampled point r are members[offsets[r] .. offsets[r+1]).
struct VoxelMapping {
  double voxelSize = 0.0;
  std::size_t originalCount = 0;
  std::vector<std::uint32_t> offsets{0};
  std::vector<std::uint32_t> members;

  std::size_t representativeCount() const { return offsets.size() - 1; }
  std::span<const std::uint32_t> representativeOf(std::size_t r) const {
    return {members.data() + offsets[r], members.data() + offsets[r + 1]};
  }
};

struct TrajectoryRecord {
  std::uint64_t frameIndex = 0;
  Pose6DoF pose;
};

using Trajectory = std::vector<TrajectoryRecord>;

enum class AngleUnit { Degrees, Radians };

AngleUnit parseAngleUnit(const std::string& text);

enum class PlyEncoding { Ascii, BinaryLittleEndian };

PointCloudFrame loadPly(const std::filesystem::path& path);
PointCloudFrame parsePly(std::string_view bytes);
void writePly(const std::filesystem::path& path, const PointCloudFrame& frame,
              PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

/// 10-bit source coordinates mapped so the full 1024-unit range spans 1.8 m.
inline constexpr double kDefaultSourceScale = 1.8 / 1024.0;

PointCloudFrame toWorldMeters(const PointCloudFrame& frame,
                              double sourceScale = kDefaultSourceScale);

struct Downsampled {
  PointCloudFrame frame;
  VoxelMapping mapping;
};

/// One centroid per occupied voxel of edge `voxelSize` (frame units).
/// Representatives are ordered by voxel key.
Downsampled voxelDownsample(const PointCloudFrame& frame, double voxelSize);

/// Original indices whose representative is among `visibleDownsampled`,
/// returned sorted.
std::vector<std::uint32_t> upsampleVisibility(const VoxelMapping& mapping,
                                              std::span<const std::uint32_t> visibleDownsampled);

Trajectory loadTrajectoryCsv(const std::filesystem::path& path, AngleUnit unit);
Trajectory parseTrajectoryCsv(std::string_view text, AngleUnit unit);
/// Writes angles in `unit` with round-trip precision.
void writeTrajectoryCsv(const std::filesystem::path& path, const Trajectory& trajectory,
                        AngleUnit unit = AngleUnit::Radians);

}  // namespace cellvis
