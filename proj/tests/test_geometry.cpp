#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "cellvis/camera.hpp"
#include "cellvis/errors.hpp"
#include "cellvis/hpr.hpp"
#include "cellvis/hull.hpp"
#include "cellvis/synth.hpp"

using namespace cellvis;

namespace {

// Extreme points by facet enumeration: a triple spans a supporting plane when
// every point lies on one side of it; its corners are hull vertices. Only
// valid for point sets in general position.
std::vector<std::uint32_t> bruteForceHull(const std::vector<Vec3>& p) {
  const std::size_t n = p.size();
  std::set<std::uint32_t> out;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c) {
        const Vec3 normal = cross(p[b] - p[a], p[c] - p[a]);
        if (norm(normal) < 1e-12) continue;
        int pos = 0, neg = 0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == a || k == b || k == c) continue;
          const double s = dot(normal, p[k] - p[a]);
          if (s > 0) ++pos;
          if (s < 0) ++neg;
        }
        if (pos == 0 || neg == 0) out.insert({static_cast<std::uint32_t>(a),
                                              static_cast<std::uint32_t>(b),
                                              static_cast<std::uint32_t>(c)});
      }
  return {out.begin(), out.end()};
}

Mat3 rx(double a) {
  Mat3 m;
  m.m = {1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a)};
  return m;
}
Mat3 ry(double a) {
  Mat3 m;
  m.m = {std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a)};
  return m;
}
Mat3 rz(double a) {
  Mat3 m;
  m.m = {std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1};
  return m;
}

}  // namespace

TEST_SUITE("camera") {

TEST_CASE("rotation convention") {
  const Mat3 id = rotationMatrix(Pose6DoF{});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(id(r, c) == (r == c ? 1.0 : 0.0));

  Pose6DoF yaw;
  yaw.yaw = std::numbers::pi / 2;
  const Vec3 x = rotationMatrix(yaw) * Vec3{1, 0, 0};
  CHECK(std::abs(x.x) < 1e-15);
  CHECK(x.z == doctest::Approx(-1.0));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> a(-std::numbers::pi, std::numbers::pi);
  for (int i = 0; i < 50; ++i) {
    Pose6DoF p;
    p.yaw = a(rng);
    p.pitch = a(rng);
    p.roll = a(rng);
    const Mat3 r = rotationMatrix(p);
    const Mat3 expected = rz(p.roll) * ry(p.yaw) * rx(p.pitch);
    for (int k = 0; k < 9; ++k) CHECK(std::abs(r.m[k] - expected.m[k]) < 1e-12);
    const Mat3 rtr = r.transposed() * r;
    for (int rr = 0; rr < 3; ++rr)
      for (int c = 0; c < 3; ++c) CHECK(std::abs(rtr(rr, c) - (rr == c ? 1.0 : 0.0)) < 1e-12);
  }
}

TEST_CASE("world to camera") {
  Pose6DoF p;
  p.position = {1, 2, 3};
  p.yaw = 0.7;
  p.pitch = -0.2;
  const Vec3 at = worldToCamera(p.position, p);
  CHECK(norm(at) < 1e-15);
  const Vec3 ahead = p.position + rotationMatrix(p) * Vec3{0, 0, 1};
  const Vec3 cam = worldToCamera(ahead, p);
  CHECK(std::abs(cam.x) < 1e-12);
  CHECK(std::abs(cam.y) < 1e-12);
  CHECK(cam.z == doctest::Approx(1.0));
  const Vec3 q{0.3, -4, 2};
  CHECK(worldToCamera(q, Pose6DoF{}) == q);
}

TEST_CASE("projection") {
  const CameraIntrinsics in;
  const auto c = project(Vec3{0, 0, 1}, in);
  CHECK(c.valid);
  CHECK(c.u == 960.0);
  CHECK(c.v == 540.0);
  CHECK_FALSE(project(Vec3{0, 0, -1}, in).valid);
  const auto off = project(Vec3{0.1, 0, 1}, in);
  CHECK(off.u == doctest::Approx(1012.5).epsilon(1e-15));
  CHECK(off.v == 540.0);
}

TEST_CASE("frustum bounds") {
  const CameraIntrinsics in;
  CHECK(inFrustum(Vec3{0, 0, (in.dNear + in.dFar) / 2}, in));
  CHECK_FALSE(inFrustum(Vec3{0, 0, in.dFar}, in));
  CHECK_FALSE(inFrustum(Vec3{0, 0, in.dNear}, in));
  Projection p{0.0, 0.0, 1.0, true};
  CHECK(inFrustum(p, in));
  p.u = in.width;
  CHECK_FALSE(inFrustum(p, in));
  p.u = in.width - 1e-9;
  CHECK(inFrustum(p, in));
  p.v = in.height;
  CHECK_FALSE(inFrustum(p, in));
  p.v = 0.0;
  p.u = -1e-12;
  CHECK_FALSE(inFrustum(p, in));
}

TEST_CASE("angle encoding") {
  Pose6DoF p;
  const auto e = encodeAngles(p);
  CHECK(e.yaw.sin == 0.0);
  CHECK(e.yaw.cos == 1.0);
  p.yaw = 2.5;
  p.pitch = -1.0;
  p.roll = 3.0;
  const auto d = decodeAngles(encodeAngles(p));
  CHECK(d.yaw == doctest::Approx(2.5));
  CHECK(d.pitch == doctest::Approx(-1.0));
  CHECK(d.roll == doctest::Approx(3.0));
  AngleEncoding bad;
  bad.pitch = {0.0, 0.0};
  CHECK_THROWS_AS(decodeAngles(bad), DegenerateEncodingError);
  CHECK(canonicalAngle(std::numbers::pi) == -std::numbers::pi);
  CHECK(canonicalAngle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
}

}  // TEST_SUITE

TEST_SUITE("hull") {

TEST_CASE("small fixed hulls") {
  std::vector<Vec3> cube;
  for (int i = 0; i < 8; ++i) cube.push_back({double(i & 1), double((i >> 1) & 1), double(i >> 2)});
  cube.push_back({0.5, 0.5, 0.5});
  CHECK(convexHull3d(cube) == std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5, 6, 7});

  const std::vector<Vec3> tet{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  CHECK(convexHull3d(tet).size() == 4);
  const std::vector<Vec3> three{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  CHECK(convexHull3d(three).size() == 3);
}

TEST_CASE("coplanar input returns the planar hull") {
  std::vector<Vec3> square{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0.5, 0.5, 0}};
  CHECK(convexHull3d(square) == std::vector<std::uint32_t>{0, 1, 2, 3});
}

TEST_CASE("quickhull matches brute-force facet enumeration") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int instance = 0; instance < 20; ++instance) {
    std::vector<Vec3> pts;
    while (pts.size() < 50) {
      Vec3 v{n(rng), n(rng), n(rng)};
      if (instance % 2) v = v / norm(v) * std::cbrt(std::uniform_real_distribution<>(0, 1)(rng));
      pts.push_back(v);
    }
    CHECK(convexHull3d(pts) == bruteForceHull(pts));
  }
}

}  // TEST_SUITE

TEST_SUITE("hpr") {

TEST_CASE("spherical flip arithmetic") {
  const std::vector<Vec3> pts{{1, 0, 0}, {0, 3, 0}};
  const auto f = sphericalFlip(pts, Vec3{0, 0, 0}, 3.0);
  CHECK(f[0].x == doctest::Approx(5.0));
  CHECK(f[1].y == doctest::Approx(3.0));
  CHECK_THROWS_AS(sphericalFlip(pts, Vec3{0, 0, 0}, 2.0), ParameterError);
}

TEST_CASE("hpr trivial inputs") {
  CHECK(hprVisible({}, Vec3{0, 0, 0}).visibleIndices.empty());
  const std::vector<Vec3> one{{0, 0, 2}};
  CHECK(hprVisible(one, Vec3{0, 0, 0}).visibleIndices == std::vector<std::uint32_t>{0});
}

TEST_CASE("sphere seen from outside") {
  SynthSpec spec;
  spec.points = 2000;
  spec.seed = 7;
  spec.frames = 1;
  spec.cameraDistance = 10.0;
  const auto scene = synthScene(spec);
  const auto& pts = scene.sequence.frames[0].positions;
  const auto& pose = scene.trajectory[0].pose;
  const auto vis = hprVisible(pts, pose.position);
  const Vec3 toEye = (pose.position - spec.center) / norm(pose.position - spec.center);
  for (auto i : vis.visibleIndices) {
    const Vec3 n = (pts[i] - spec.center) / norm(pts[i] - spec.center);
    CHECK(dot(n, toEye) > -0.1);
  }

  for (std::uint64_t seed : {1u, 2u, 3u, 7u}) {
    spec.seed = seed;
    const auto s = synthScene(spec);
    const auto h = hprVisible(s.sequence.frames[0].positions, s.trajectory[0].pose.position);
    const auto z = zbufferOracle(s.sequence.frames[0].positions, s.trajectory[0].pose,
                                 CameraIntrinsics{}, 3);
    CHECK(jaccard(h.visibleIndices, z.visibleIndices) >= 0.9);
  }
}

TEST_CASE("occluded point behind a dense disk") {
  std::vector<Vec3> pts;
  for (int i = -20; i <= 20; ++i)
    for (int j = -20; j <= 20; ++j) pts.push_back({i * 0.01, j * 0.01, 1.0});
  const auto farIdx = static_cast<std::uint32_t>(pts.size());
  pts.push_back({0.001, 0.001, 2.0});
  Pose6DoF pose;
  const auto z = zbufferOracle(pts, pose, CameraIntrinsics{}, 1, 0.0);
  const auto h = hprVisible(pts, pose.position);
  auto has = [](const VisibilityResult& r, std::uint32_t i) {
    return std::binary_search(r.visibleIndices.begin(), r.visibleIndices.end(), i);
  };
  CHECK_FALSE(has(z, farIdx));
  CHECK_FALSE(has(h, farIdx));
}

TEST_CASE("z-buffer oracle basics") {
  Pose6DoF pose;
  const CameraIntrinsics in;
  const std::vector<Vec3> one{{0, 0, 2}};
  CHECK(zbufferOracle(one, pose, in, 3, 0.0).visibleIndices.size() == 1);
  const std::vector<Vec3> stacked{{0, 0, 1}, {0, 0, 2}};
  CHECK(zbufferOracle(stacked, pose, in, 1, 0.0).visibleIndices == std::vector<std::uint32_t>{0});
  const std::vector<Vec3> behind{{0, 0, -1}, {0, 0, 100}};
  CHECK(zbufferOracle(behind, pose, in, 3, 0.0).visibleIndices.empty());
}

TEST_CASE("jaccard") {
  const std::vector<std::uint32_t> a{1, 2, 3}, b{2, 3, 4};
  CHECK(jaccard(a, b) == doctest::Approx(0.5));
  CHECK(jaccard({}, {}) == 1.0);
}

}  // TEST_SUITE
