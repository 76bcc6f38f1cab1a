#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellvis/camera.hpp"
#include "cellvis/cellgrid.hpp"
#include "cellvis/dataset.hpp"
#include "cellvis/hpr.hpp"
#include "cellvis/model.hpp"
#include "cellvis/pointcloud.hpp"
#include "cellvis/tensor.hpp"
#include "cellvis/training.hpp"

namespace cellvis {

/// One user watching one video: a directory of PLY frames (taken in file
/// name order) and that user's trajectory CSV.
struct SequenceSource {
  std::string id;
  std::filesystem::path frames;
  std::filesystem::path trajectory;
};

struct RunConfig {
  std::uint64_t seed = 0;
  double fps = 30.0;
  AngleUnit angleUnit = AngleUnit::Degrees;
  double sourceScale = kDefaultSourceScale;

  std::filesystem::path outputDir;
  std::filesystem::path featuresDir;
  std::vector<SequenceSource> sequences;

  GridDims grid = kDefaultGridDims;
  int connectivity = 6;
  CameraIntrinsics intrinsics;
  HprParams hpr;
  double downsample = 8.0;  // source units
  int samplesPerCell = 64;

  int hiddenDim = 128;
  int heads = 4;
  int graphLayers = 1;
  int history = 90;
  AttentionMode attention = AttentionMode::SoftmaxScaled;

  TrainOptions train;
  int trainStride = 1;
  nn::Precision precision = nn::Precision::Float64;

  std::vector<int> horizons;
  std::vector<Target> targets;
  std::vector<std::string> methods;
  int evalStride = 10;

  SplitSpec split;

  int lrHistory = 30;
  int tlrHistory = 90;
  int baselineHistory = 90;
  int baselineHidden = 60;

  std::string correlateSequence;
  std::string correlateChannel;
  int correlateAxis = 0;
  int correlateMaxDistance = 4;

  int benchPoints = 100000;
  int benchFrames = 30;

  /// The effective configuration with defaults filled in.
  nlohmann::json effective;

  /// Voxel edge in meters (downsample * source_scale).
  FeatureOptions featureOptions() const;
  ModelConfig modelConfig(int horizon, Target target) const;
  std::string fingerprint() const;

  /// Relative paths resolve against `baseDir`. Throws ConfigError on unknown
  /// keys, wrong types or invalid values.
  static RunConfig fromJson(const nlohmann::json& j, const std::filesystem::path& baseDir = {});
  static RunConfig load(const std::filesystem::path& path);
};

/// Every key with its default, as nested JSON.
const nlohmann::ordered_json& configDefaults();

/// "key = default  description" lines for every config key.
std::string configReference();

}  // namespace cellvis
