#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <tuple>

#include "cellvis/errors.hpp"
#include "cellvis/pointcloud.hpp"
#include "cellvis/synth.hpp"
#include "test_util.hpp"

using namespace cellvis;

TEST_SUITE("pointcloud") {

TEST_CASE("ascii ply with one vertex at the origin") {
  const auto f = parsePly(
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n0 0 0\n");
  REQUIRE(f.size() == 1);
  CHECK(f.positions[0].x == 0.0);
  CHECK(f.positions[0].y == 0.0);
  CHECK(f.positions[0].z == 0.0);
}

TEST_CASE("short body is a length mismatch") {
  std::string text =
      "ply\nformat ascii 1.0\nelement vertex 10\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n";
  for (int i = 0; i < 9; ++i) text += "1 2 3\n";
  CHECK_THROWS_AS(parsePly(text), LengthMismatchError);
}

TEST_CASE("malformed header names the line") {
  const std::string text =
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nbogus line\nend_header\n0\n";
  try {
    parsePly(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 5") != std::string::npos);
  }
}

TEST_CASE("binary and ascii round trips keep points and colors") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  PointCloudFrame f;
  for (int i = 0; i < 200; ++i)
    f.push_back({{std::round(u(rng)), std::round(u(rng)), std::round(u(rng))},
                 {static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(2 * i), 7}});
  const auto dir = test::scratchDir("ply_roundtrip");
  for (auto enc : {PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian}) {
    const auto path = dir / (enc == PlyEncoding::Ascii ? "a.ply" : "b.ply");
    writePly(path, f, enc);
    const auto g = loadPly(path);
    REQUIRE(g.size() == f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      CHECK(g.positions[i].x == f.positions[i].x);
      CHECK(g.positions[i].z == f.positions[i].z);
      CHECK(g.colors[i] == f.colors[i]);
    }
  }
}

TEST_CASE("to_world_meters") {
  PointCloudFrame f;
  f.push_back({{1024, 1024, 1024}});
  const auto m = toWorldMeters(f, 1.8 / 1024.0);
  CHECK(m.positions[0].x == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(m.positions[0].y == doctest::Approx(1.8).epsilon(1e-15));
  const auto same = toWorldMeters(f, 1.0);
  CHECK(same.positions[0].z == 1024.0);
  CHECK_THROWS_AS(toWorldMeters(f, 0.0), ArgumentError);
  CHECK_THROWS_AS(toWorldMeters(f, -2.0), ArgumentError);
}

TEST_CASE("voxel downsample on simple inputs") {
  PointCloudFrame f;
  f.push_back({{0.1, 0.1, 0.1}});
  f.push_back({{0.2, 0.3, 0.4}});
  auto d = voxelDownsample(f, 1.0);
  REQUIRE(d.frame.size() == 1);
  CHECK(d.mapping.representativeOf(0).size() == 2);
  CHECK(d.frame.positions[0].x == doctest::Approx(0.15));

  PointCloudFrame grid;
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) grid.push_back({{double(x), double(y), 0.0}});
  CHECK(voxelDownsample(grid, 0.5).frame.size() == grid.size());

  CHECK(voxelDownsample(PointCloudFrame{}, 8.0).frame.empty());
  CHECK_THROWS_AS(voxelDownsample(grid, 0.0), ArgumentError);
}

TEST_CASE("voxel count matches a hash-count oracle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 64.0);
    PointCloudFrame f;
    for (int i = 0; i < 1000; ++i) f.push_back({{u(rng), u(rng), u(rng)}});
    std::map<std::tuple<long, long, long>, std::vector<std::uint32_t>> oracle;
    for (std::uint32_t i = 0; i < f.size(); ++i) {
      const auto& p = f.positions[i];
      oracle[{std::lround(std::floor(p.x / 8)), std::lround(std::floor(p.y / 8)),
              std::lround(std::floor(p.z / 8))}]
          .push_back(i);
    }
    const auto d = voxelDownsample(f, 8.0);
    REQUIRE(d.frame.size() == oracle.size());
    std::size_t r = 0;
    for (const auto& [key, members] : oracle) {
      const auto got = d.mapping.representativeOf(r++);
      std::vector<std::uint32_t> sorted(got.begin(), got.end());
      std::sort(sorted.begin(), sorted.end());
      CHECK(sorted == members);
    }
  }
}

TEST_CASE("voxel mapping partitions the originals and upsampling inverts it") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 5.0);
  PointCloudFrame f;
  for (int i = 0; i < 3000; ++i) f.push_back({{n(rng), n(rng), n(rng)}});
  const auto d = voxelDownsample(f, 1.5);
  std::set<std::uint32_t> seen;
  std::size_t total = 0;
  for (std::size_t r = 0; r < d.mapping.representativeCount(); ++r)
    for (auto i : d.mapping.representativeOf(r)) {
      CHECK(seen.insert(i).second);
      ++total;
    }
  CHECK(total == f.size());

  std::vector<std::uint32_t> all(d.frame.size());
  std::iota(all.begin(), all.end(), 0u);
  const auto up = upsampleVisibility(d.mapping, all);
  REQUIRE(up.size() == f.size());
  for (std::uint32_t i = 0; i < up.size(); ++i) CHECK(up[i] == i);
  CHECK(upsampleVisibility(d.mapping, {}).empty());
  const std::uint32_t bad = static_cast<std::uint32_t>(d.frame.size());
  CHECK_THROWS_AS(upsampleVisibility(d.mapping, {&bad, 1}), ArgumentError);
}

TEST_CASE("upsampling one representative returns exactly its members") {
  VoxelMapping m;
  m.originalCount = 10;
  m.offsets = {0, 3, 10};
  m.members = {3, 7, 9, 0, 1, 2, 4, 5, 6, 8};
  const std::uint32_t r = 0;
  CHECK(upsampleVisibility(m, {&r, 1}) == std::vector<std::uint32_t>{3, 7, 9});
}

TEST_CASE("trajectory csv canonicalizes angles") {
  const auto deg = parseTrajectoryCsv("frame,x,y,z,yaw,pitch,roll\n0,0,0,2,180,0,0\n",
                                      AngleUnit::Degrees);
  REQUIRE(deg.size() == 1);
  CHECK(deg[0].pose.yaw == -std::numbers::pi);
  CHECK(deg[0].pose.position.z == 2.0);

  const auto rad = parseTrajectoryCsv("frame,x,y,z,yaw,pitch,roll\n0,0,0,0,0,0,0\n",
                                      AngleUnit::Radians);
  CHECK(rad[0].pose.yaw == 0.0);
}

TEST_CASE("trajectory csv errors") {
  CHECK_THROWS_AS(parseTrajectoryCsv("frame,x,y,z,yaw,pitch\n0,0,0,0,0,0\n", AngleUnit::Radians),
                  SchemaError);
  CHECK_THROWS_AS(parseTrajectoryCsv("frame,x,y,z,yaw,pitch,roll\n1,0,0,0,0,0,0\n0,0,0,0,0,0,0\n",
                                     AngleUnit::Radians),
                  OrderingError);
  CHECK_THROWS_AS(parseAngleUnit("gradians"), ConfigError);
}

TEST_CASE("trajectory loading is idempotent on canonical radians") {
  Trajectory t;
  for (int i = 0; i < 20; ++i) {
    TrajectoryRecord r;
    r.frameIndex = i;
    r.pose.position = {0.1 * i, 1.0, -0.5 * i};
    r.pose.yaw = canonicalAngle(0.4 * i);
    r.pose.pitch = canonicalAngle(-0.2 * i);
    r.pose.roll = canonicalAngle(0.05 * i);
    t.push_back(r);
  }
  const auto dir = test::scratchDir("trajectory");
  writeTrajectoryCsv(dir / "t.csv", t);
  const auto once = loadTrajectoryCsv(dir / "t.csv", AngleUnit::Radians);
  writeTrajectoryCsv(dir / "t2.csv", once);
  const auto twice = loadTrajectoryCsv(dir / "t2.csv", AngleUnit::Radians);
  REQUIRE(twice.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(twice[i].pose.yaw == once[i].pose.yaw);
    CHECK(once[i].pose.yaw == t[i].pose.yaw);
    CHECK(once[i].pose.position.z == t[i].pose.position.z);
  }

  writeTrajectoryCsv(dir / "deg.csv", t, AngleUnit::Degrees);
  const auto deg = loadTrajectoryCsv(dir / "deg.csv", AngleUnit::Degrees);
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(deg[i].pose.yaw == doctest::Approx(t[i].pose.yaw).epsilon(1e-14));
}

TEST_CASE("synthetic scenes are deterministic") {
  SynthSpec spec;
  spec.generator = "static-sphere";
  spec.frames = 10;
  spec.seed = 7;
  const auto a = synthScene(spec);
  const auto b = synthScene(spec);
  REQUIRE(a.sequence.frames.size() == 10);
  for (std::size_t f = 0; f < 10; ++f) {
    REQUIRE(a.sequence.frames[f].size() == b.sequence.frames[f].size());
    for (std::size_t i = 0; i < a.sequence.frames[f].size(); ++i)
      CHECK(a.sequence.frames[f].positions[i] == b.sequence.frames[f].positions[i]);
  }
  spec.generator = "nope";
  CHECK_THROWS_AS(synthScene(spec), ConfigError);
}

TEST_CASE("orbit trajectory is periodic") {
  SynthSpec spec;
  spec.generator = "orbiting-camera";
  spec.orbitPeriod = 120;
  const Vec3 c{0.0, 0.9, 0.0};
  const auto p0 = synthPose(spec, c, 0);
  const auto p120 = synthPose(spec, c, 120);
  CHECK(p120.position.x == doctest::Approx(p0.position.x).epsilon(1e-12));
  CHECK(std::abs(p120.position.z - p0.position.z) < 1e-12);
  CHECK(std::abs(std::remainder(p120.yaw - p0.yaw, 2 * std::numbers::pi)) < 1e-12);
}

TEST_CASE("translating box drifts by the velocity") {
  SynthSpec spec;
  spec.generator = "translating-box";
  spec.frames = 91;
  spec.points = 500;
  spec.velocity = {0.01, 0.0, 0.0};
  const auto s = synthScene(spec);
  auto centroidX = [](const PointCloudFrame& f) {
    double x = 0.0;
    for (const auto& p : f.positions) x += p.x;
    return x / static_cast<double>(f.size());
  };
  CHECK(centroidX(s.sequence.frames[90]) - centroidX(s.sequence.frames[0]) ==
        doctest::Approx(0.9).epsilon(1e-9));
}

}  // TEST_SUITE
