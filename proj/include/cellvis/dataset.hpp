#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "cellvis/cellgrid.hpp"

namespace cellvis {

enum class Target { Visibility, Viewport };

std::string toString(Target t);
/// "visibility" or "viewport"; ConfigError otherwise.
Target parseTarget(const std::string& text);

/// Frames of one user watching one video, as extracted features.
struct SequenceFeatures {
  std::string id;
  std::shared_ptr<const FeatureTensor> features;
  std::size_t frameOffset = 0;  // source frame of features' frame 0
};

/// History frames [start, start + history) and the target frame
/// start + history - 1 + horizon of one sequence.
struct WindowedSample {
  std::shared_ptr<const FeatureTensor> features;
  std::string source;
  std::size_t start = 0;
  std::size_t history = 0;
  std::size_t horizon = 0;
  std::size_t frameOffset = 0;

  std::size_t cells() const { return features->cells; }
  /// Indices into `features`; add frameOffset for source frame numbers.
  std::size_t targetFrame() const { return start + history - 1 + horizon; }
  std::size_t sourceTargetFrame() const { return frameOffset + targetFrame(); }
  std::size_t sourceHistoryEnd() const { return frameOffset + start + history; }
  double feature(std::size_t step, std::size_t cell, std::size_t channel) const {
    return features->at(start + step, cell, channel);
  }
  std::vector<double> target(Target t) const;
  /// Normalized occupancy of the target frame.
  std::vector<double> targetOccupancy() const;
  /// 1 where the target frame's cell holds points, else 0.
  std::vector<double> mask() const;
};

/// Sliding windows; count = floor((T - h - f) / stride) + 1. A sequence
/// shorter than h + f yields no windows and logs a warning.
std::vector<WindowedSample> makeWindows(const SequenceFeatures& sequence, std::size_t history,
                                        std::size_t horizon, std::size_t stride = 1);
std::size_t windowCount(std::size_t frames, std::size_t history, std::size_t horizon,
                        std::size_t stride);

inline constexpr std::size_t kInputChannels = 7;

/// Per-channel standardization of the raw cell features.
struct Standardizer {
  std::array<double, kInputChannels> mean{};
  std::array<double, kInputChannels> stddev{1, 1, 1, 1, 1, 1, 1};

  double apply(std::size_t channel, double value) const {
    return (value - mean[channel]) / stddev[channel];
  }
};

/// Mean and population standard deviation over every frame and cell of the
/// given sequences. Channels with deviation below 1e-8 keep a divisor of 1.
Standardizer fitStandardizer(const std::vector<SequenceFeatures>& sequences);

/// Train sequences are used whole. Each test sequence is cut in time: the
/// first `testFraction` is the test part and the rest validation. Windows
/// never straddle the cut.
struct SplitSpec {
  std::vector<std::string> trainIds;
  std::vector<std::string> testIds;
  double testFraction = 0.5;
};

struct SplitWindows {
  std::vector<WindowedSample> train;
  std::vector<WindowedSample> validation;
  std::vector<WindowedSample> test;
};

/// Throws ConfigError when ids overlap or are missing from `sequences`.
SplitWindows splitWindows(const std::vector<SequenceFeatures>& sequences, const SplitSpec& split,
                          std::size_t history, std::size_t horizon, std::size_t trainStride,
                          std::size_t evalStride);

/// Copy of frames [begin, end) of a feature tensor.
std::shared_ptr<const FeatureTensor> sliceFrames(const FeatureTensor& t, std::size_t begin,
                                                 std::size_t end);

}  // namespace cellvis
