#include "cellvis/synth.hpp"

#include <cmath>
#include <random>
#include <set>

#include "cellvis/errors.hpp"

namespace cellvis {
namespace {

using nlohmann::json;

Vec3 vecFromJson(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(std::string("synth: '") + key + "' must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vecToJson(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 sphereSample(std::mt19937_64& rng, const Vec3& center, double radius) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 d;
  double len = 0.0;
  do {
    d = {normal(rng), normal(rng), normal(rng)};
    len = norm(d);
  } while (len < 1e-12);
  return center + d * (radius / len);
}

// Evenly spread sphere points (spherical Fibonacci lattice), turned by a
// seed-drawn uniform random rotation.
std::vector<Vec3> fibonacciSphere(std::mt19937_64& rng, int count, const Vec3& center,
                                  double radius) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u1 = unit(rng), u2 = unit(rng), u3 = unit(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double qx = a * std::sin(2.0 * std::numbers::pi * u2);
  const double qy = a * std::cos(2.0 * std::numbers::pi * u2);
  const double qz = b * std::sin(2.0 * std::numbers::pi * u3);
  const double qw = b * std::cos(2.0 * std::numbers::pi * u3);
  const Mat3 rot{{1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw),
                  2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw),
                  2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)}};

  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double th = golden * i;
    out.push_back(center + rot * Vec3{r * std::cos(th), y, r * std::sin(th)} * radius);
  }
  return out;
}

Vec3 boxSurfaceSample(std::mt19937_64& rng, const Vec3& center, const Vec3& size) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double areas[3] = {size.y * size.z, size.x * size.z, size.x * size.y};
  const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
  double pick = unit(rng) * total;
  int axis = 0;
  for (; axis < 2; ++axis) {
    if (pick < 2.0 * areas[axis]) break;
    pick -= 2.0 * areas[axis];
  }
  Vec3 local{(unit(rng) - 0.5) * size.x, (unit(rng) - 0.5) * size.y,
             (unit(rng) - 0.5) * size.z};
  local[axis] = (unit(rng) < 0.5 ? -0.5 : 0.5) * size[axis];
  return center + local;
}

Color colorFor(const Vec3& p) {
  auto channel = [](double v) {
    return static_cast<std::uint8_t>(
        std::lround(127.5 + 127.5 * std::sin(v * 7.0)));
  };
  return {channel(p.x), channel(p.y), channel(p.z)};
}

std::string defaultTrajectory(const std::string& generator) {
  if (generator == "static-sphere") return "constant";
  if (generator == "translating-box") return "pan";
  return "orbit";
}

}  // namespace

SynthSpec SynthSpec::fromJson(const json& j) {
  if (!j.is_object()) throw ConfigError("synth: spec must be a JSON object");
  static const std::set<std::string> topKeys = {"generator", "seed", "frames", "points", "params"};
  for (const auto& [k, v] : j.items())
    if (!topKeys.count(k)) throw ConfigError("synth: unknown key '" + k + "'");

  SynthSpec s;
  try {
    s.generator = j.value("generator", s.generator);
    s.seed = j.value("seed", s.seed);
    s.frames = j.value("frames", s.frames);
    s.points = j.value("points", s.points);
    if (j.contains("params")) {
      const json& p = j.at("params");
      static const std::set<std::string> paramKeys = {
          "trajectory",  "fps",          "center",       "radius",         "box_size",
          "velocity",    "camera_distance", "orbit_radius", "orbit_period", "yaw_rate",
          "camera_velocity", "quantize_10bit"};
      for (const auto& [k, v] : p.items())
        if (!paramKeys.count(k)) throw ConfigError("synth: unknown param '" + k + "'");
      s.trajectory = p.value("trajectory", s.trajectory);
      s.fps = p.value("fps", s.fps);
      if (p.contains("center")) s.center = vecFromJson(p["center"], "center");
      s.radius = p.value("radius", s.radius);
      if (p.contains("box_size")) s.boxSize = vecFromJson(p["box_size"], "box_size");
      if (p.contains("velocity")) s.velocity = vecFromJson(p["velocity"], "velocity");
      s.cameraDistance = p.value("camera_distance", s.cameraDistance);
      s.orbitRadius = p.value("orbit_radius", s.orbitRadius);
      s.orbitPeriod = p.value("orbit_period", s.orbitPeriod);
      s.yawRate = p.value("yaw_rate", s.yawRate);
      if (p.contains("camera_velocity"))
        s.cameraVelocity = vecFromJson(p["camera_velocity"], "camera_velocity");
      s.quantize10bit = p.value("quantize_10bit", s.quantize10bit);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  return s;
}

json SynthSpec::toJson() const {
  return {{"generator", generator},
          {"seed", seed},
          {"frames", frames},
          {"points", points},
          {"params",
           {{"trajectory", trajectory.empty() ? defaultTrajectory(generator) : trajectory},
            {"fps", fps},
            {"center", vecToJson(center)},
            {"radius", radius},
            {"box_size", vecToJson(boxSize)},
            {"velocity", vecToJson(velocity)},
            {"camera_distance", cameraDistance},
            {"orbit_radius", orbitRadius},
            {"orbit_period", orbitPeriod},
            {"yaw_rate", yawRate},
            {"camera_velocity", vecToJson(cameraVelocity)},
            {"quantize_10bit", quantize10bit}}}};
}

Pose6DoF synthPose(const SynthSpec& spec, const Vec3& centroid, int frame) {
  const std::string kind = spec.trajectory.empty() ? defaultTrajectory(spec.generator)
                                                   : spec.trajectory;
  Pose6DoF pose;
  if (kind == "constant") {
    pose.position = centroid + Vec3{0.0, 0.0, spec.cameraDistance};
    pose.yaw = canonicalAngle(std::numbers::pi);
  } else if (kind == "pan") {
    pose.position = centroid + Vec3{0.0, 0.0, spec.cameraDistance} + spec.cameraVelocity * frame;
    pose.yaw = canonicalAngle(std::numbers::pi + spec.yawRate * frame);
  } else if (kind == "orbit") {
    if (spec.orbitPeriod <= 0) throw ConfigError("synth: orbit_period must be positive");
    const int phase = ((frame % spec.orbitPeriod) + spec.orbitPeriod) % spec.orbitPeriod;
    const double a = 2.0 * std::numbers::pi * phase / spec.orbitPeriod;
    pose.position = centroid + Vec3{spec.orbitRadius * std::sin(a), 0.0,
                                    spec.orbitRadius * std::cos(a)};
    pose.yaw = canonicalAngle(a + std::numbers::pi);
  } else {
    throw ConfigError("synth: unknown trajectory '" + kind + "'");
  }
  return pose;
}

SynthScene synthScene(const SynthSpec& spec) {
  if (spec.generator != "static-sphere" && spec.generator != "translating-box" &&
      spec.generator != "orbiting-camera")
    throw ConfigError("synth: unknown generator '" + spec.generator + "'");
  if (spec.frames < 0 || spec.points < 0)
    throw ConfigError("synth: frames and points must be non-negative");

  std::mt19937_64 rng(spec.seed);
  std::vector<Vec3> base;
  base.reserve(spec.points);
  Vec3 centroid = spec.center;

  if (spec.generator == "static-sphere") {
    base = fibonacciSphere(rng, spec.points, spec.center, spec.radius);
  } else if (spec.generator == "translating-box") {
    for (int i = 0; i < spec.points; ++i)
      base.push_back(boxSurfaceSample(rng, spec.center, spec.boxSize));
  } else {
    // Standing figure about 1.8 m tall with its feet at y = 0.
    const Vec3 torsoSize{0.45, 1.45, 0.28};
    const Vec3 torsoCenter{spec.center.x, 0.725, spec.center.z};
    const double headRadius = 0.14;
    const Vec3 headCenter{spec.center.x, 1.45 + headRadius + 0.02, spec.center.z};
    const double torsoArea = 2.0 * (torsoSize.x * torsoSize.y + torsoSize.y * torsoSize.z +
                                    torsoSize.x * torsoSize.z);
    const double headArea = 4.0 * std::numbers::pi * headRadius * headRadius;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < spec.points; ++i) {
      if (unit(rng) * (torsoArea + headArea) < headArea)
        base.push_back(sphereSample(rng, headCenter, headRadius));
      else
        base.push_back(boxSurfaceSample(rng, torsoCenter, torsoSize));
    }
    centroid = {spec.center.x, 0.9, spec.center.z};
  }

  SynthScene scene;
  scene.sequence.fps = spec.fps;
  scene.sequence.frames.reserve(spec.frames);
  for (int t = 0; t < spec.frames; ++t) {
    PointCloudFrame frame;
    frame.frameIndex = static_cast<std::uint64_t>(t);
    const Vec3 shift = spec.generator == "translating-box" ? spec.velocity * t : Vec3{};
    frame.positions.reserve(base.size());
    frame.colors.reserve(base.size());
    for (const auto& p : base) {
      Vec3 q = p + shift;
      frame.colors.push_back(colorFor(p));
      if (spec.quantize10bit)
        q = {std::round(q.x / kDefaultSourceScale), std::round(q.y / kDefaultSourceScale),
             std::round(q.z / kDefaultSourceScale)};
      frame.positions.push_back(q);
    }
    scene.sequence.frames.push_back(std::move(frame));

    scene.trajectory.push_back({static_cast<std::uint64_t>(t), synthPose(spec, centroid, t)});
  }
  return scene;
}

}  // namespace cellvis
