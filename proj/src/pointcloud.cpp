#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "cellvis/errors.hpp"
#include "cellvis/kernels.hpp"
#include "cellvis/pointcloud.hpp"

namespace cellvis {

void FrameSequence::validate() const {
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i].frameIndex <= frames[i - 1].frameIndex)
      throw OrderingError("frame sequence: frame index " +
                          std::to_string(frames[i].frameIndex) + " does not follow " +
                          std::to_string(frames[i - 1].frameIndex));
}

AngleUnit parseAngleUnit(const std::string& text) {
  if (text == "degrees" || text == "deg") return AngleUnit::Degrees;
  if (text == "radians" || text == "rad") return AngleUnit::Radians;
  throw ConfigError("unknown angle unit '" + text + "' (expected degrees or radians)");
}

PointCloudFrame toWorldMeters(const PointCloudFrame& frame, double sourceScale) {
  if (!(sourceScale > 0.0) || !std::isfinite(sourceScale))
    throw ArgumentError("to_world_meters: source scale must be positive, got " +
                        std::to_string(sourceScale));
  PointCloudFrame out = frame;
  for (auto& p : out.positions) p *= sourceScale;
  out.sourceScale = frame.sourceScale * sourceScale;
  return out;
}

Downsampled voxelDownsample(const PointCloudFrame& frame, double voxelSize) {
  if (!(voxelSize > 0.0)) throw ArgumentError("voxel_downsample: voxel size must be positive");
  Downsampled result;
  result.frame.frameIndex = frame.frameIndex;
  result.frame.sourceScale = frame.sourceScale;
  result.mapping.voxelSize = voxelSize;
  result.mapping.originalCount = frame.size();
  if (frame.empty()) return result;

  std::vector<kernels::VoxelKey> keys(frame.size());
  kernels::parallel::voxelKeys(frame.positions, voxelSize, keys);

  std::vector<std::uint32_t> order(frame.size());
  kernels::VoxelKey lo = keys.front(), hi = keys.front();
  for (const auto& k : keys) {
    lo = {std::min(lo.x, k.x), std::min(lo.y, k.y), std::min(lo.z, k.z)};
    hi = {std::max(hi.x, k.x), std::max(hi.y, k.y), std::max(hi.z, k.z)};
  }
  const auto nx = static_cast<unsigned __int128>(hi.x - lo.x) + 1;
  const auto ny = static_cast<unsigned __int128>(hi.y - lo.y) + 1;
  const auto nz = static_cast<unsigned __int128>(hi.z - lo.z) + 1;
  if (nx * ny * nz <= std::numeric_limits<std::uint64_t>::max()) {
    // Dense keys compare like the (x, y, z) tuples; a stable LSD radix sort
    // keeps equal keys in index order.
    std::vector<std::uint64_t> dense(keys.size());
    std::uint64_t maxKey = 0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const auto& k = keys[i];
      dense[i] = (static_cast<std::uint64_t>(k.x - lo.x) * static_cast<std::uint64_t>(ny) +
                  static_cast<std::uint64_t>(k.y - lo.y)) *
                     static_cast<std::uint64_t>(nz) +
                 static_cast<std::uint64_t>(k.z - lo.z);
      maxKey = std::max(maxKey, dense[i]);
    }
    std::iota(order.begin(), order.end(), 0u);
    std::vector<std::uint32_t> buffer(order.size());
    for (int shift = 0; shift < 64 && (maxKey >> shift) != 0; shift += 8) {
      std::array<std::size_t, 257> count{};
      for (auto idx : order) ++count[((dense[idx] >> shift) & 0xff) + 1];
      for (int b = 0; b < 256; ++b) count[b + 1] += count[b];
      for (auto idx : order) buffer[count[(dense[idx] >> shift) & 0xff]++] = idx;
      order.swap(buffer);
    }
  } else {
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
  }

  auto& mapping = result.mapping;
  mapping.members = order;
  mapping.offsets.clear();
  mapping.offsets.push_back(0);
  for (std::size_t i = 1; i < order.size(); ++i)
    if (keys[order[i]] != keys[order[i - 1]])
      mapping.offsets.push_back(static_cast<std::uint32_t>(i));
  mapping.offsets.push_back(static_cast<std::uint32_t>(order.size()));

  const std::size_t reps = mapping.representativeCount();
  result.frame.positions.resize(reps);
  result.frame.colors.resize(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    Vec3 sum;
    double rgb[3] = {0, 0, 0};
    const auto members = mapping.representativeOf(r);
    for (auto idx : members) {
      sum += frame.positions[idx];
      for (int c = 0; c < 3; ++c) rgb[c] += frame.colors[idx][c];
    }
    const double n = static_cast<double>(members.size());
    result.frame.positions[r] = sum / n;
    for (int c = 0; c < 3; ++c)
      result.frame.colors[r][c] = static_cast<std::uint8_t>(std::lround(rgb[c] / n));
  }
  return result;
}

std::vector<std::uint32_t> upsampleVisibility(const VoxelMapping& mapping,
                                              std::span<const std::uint32_t> visible) {
  std::vector<std::uint32_t> out;
  for (auto r : visible) {
    if (r >= mapping.representativeCount())
      throw ArgumentError("upsample_visibility: index " + std::to_string(r) +
                          " outside downsampled range " +
                          std::to_string(mapping.representativeCount()));
    const auto members = mapping.representativeOf(r);
    out.insert(out.end(), members.begin(), members.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

std::vector<std::string_view> splitCsv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos
                                                    ? std::string_view::npos
                                                    : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t'))
      field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parseNumber(std::string_view field, std::size_t lineNo) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || p != field.data() + field.size() || !std::isfinite(v))
    throw ParseError("trajectory csv line " + std::to_string(lineNo) + ": bad number '" +
                     std::string(field) + "'");
  return v;
}

}  // namespace

Trajectory parseTrajectoryCsv(std::string_view text, AngleUnit unit) {
  static constexpr std::array<std::string_view, 7> kColumns = {"frame", "x",     "y",   "z",
                                                               "yaw",   "pitch", "roll"};
  Trajectory out;
  std::array<int, 7> col{};
  bool haveHeader = false;
  std::size_t lineNo = 0;
  std::size_t pos = 0;
  const double toRad = unit == AngleUnit::Degrees ? std::numbers::pi / 180.0 : 1.0;

  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    const auto fields = splitCsv(line);
    if (!haveHeader) {
      for (std::size_t c = 0; c < kColumns.size(); ++c) {
        auto it = std::find(fields.begin(), fields.end(), kColumns[c]);
        if (it == fields.end())
          throw SchemaError("trajectory csv: missing column '" + std::string(kColumns[c]) + "'");
        col[c] = static_cast<int>(it - fields.begin());
      }
      haveHeader = true;
      continue;
    }
    const int maxCol = *std::max_element(col.begin(), col.end());
    if (static_cast<int>(fields.size()) <= maxCol)
      throw SchemaError("trajectory csv line " + std::to_string(lineNo) + ": expected at least " +
                        std::to_string(maxCol + 1) + " fields");

    const double frame = parseNumber(fields[col[0]], lineNo);
    if (frame < 0 || frame != std::floor(frame))
      throw ParseError("trajectory csv line " + std::to_string(lineNo) +
                       ": frame must be a non-negative integer");
    TrajectoryRecord rec;
    rec.frameIndex = static_cast<std::uint64_t>(frame);
    rec.pose.position = {parseNumber(fields[col[1]], lineNo), parseNumber(fields[col[2]], lineNo),
                         parseNumber(fields[col[3]], lineNo)};
    rec.pose.yaw = canonicalAngle(parseNumber(fields[col[4]], lineNo) * toRad);
    rec.pose.pitch = canonicalAngle(parseNumber(fields[col[5]], lineNo) * toRad);
    rec.pose.roll = canonicalAngle(parseNumber(fields[col[6]], lineNo) * toRad);
    if (!out.empty() && rec.frameIndex <= out.back().frameIndex)
      throw OrderingError("trajectory csv line " + std::to_string(lineNo) + ": frame " +
                          std::to_string(rec.frameIndex) + " not after " +
                          std::to_string(out.back().frameIndex));
    out.push_back(rec);
  }
  if (!haveHeader) throw SchemaError("trajectory csv: empty file, header required");
  return out;
}

Trajectory loadTrajectoryCsv(const std::filesystem::path& path, AngleUnit unit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trajectory csv: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parseTrajectoryCsv(text, unit);
}

void writeTrajectoryCsv(const std::filesystem::path& path, const Trajectory& trajectory,
                        AngleUnit unit) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory csv: " + path.string());
  out << "frame,x,y,z,yaw,pitch,roll\n" << std::setprecision(17);
  const double k = unit == AngleUnit::Degrees ? 180.0 / std::numbers::pi : 1.0;
  for (const auto& r : trajectory) {
    const auto& p = r.pose;
    out << r.frameIndex << ',' << p.position.x << ',' << p.position.y << ',' << p.position.z
        << ',' << p.yaw * k << ',' << p.pitch * k << ',' << p.roll * k << '\n';
  }
}

}  // namespace cellvis
