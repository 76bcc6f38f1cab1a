#pragma once

// Pose-extrapolation baselines. Each predicts the viewer's future pose; the
// pose is then turned into cell features with the same extraction code used
// for ground truth.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cellvis/camera.hpp"
#include "cellvis/cellgrid.hpp"
#include "cellvis/tensor.hpp"
#include "cellvis/training.hpp"

namespace cellvis {

inline constexpr std::size_t kPoseChannels = 9;

/// x, y, z, sin/cos yaw, sin/cos pitch, sin/cos roll.
using EncodedPose = std::array<double, kPoseChannels>;

EncodedPose encodePose(const Pose6DoF& pose);
/// Angles decoded by atan2 into [-pi, pi).
Pose6DoF decodePose(const EncodedPose& encoded);

/// Encoded poses of consecutive frames, oldest first.
struct PoseWindow {
  std::vector<EncodedPose> steps;

  static PoseWindow fromPoses(std::span<const Pose6DoF> poses);
  std::size_t length() const { return steps.size(); }
  std::vector<double> channel(std::size_t c) const;
};

/// Least-squares line through (0, s_0) .. (n-1, s_{n-1}) evaluated at
/// n - 1 + horizon. Needs n >= 2.
double linearExtrapolate(std::span<const double> series, double horizon);

/// Line through the longest strictly monotone suffix (differences beyond
/// `tolerance`); the last value when that suffix has fewer than 2 entries.
double truncatedExtrapolate(std::span<const double> series, double horizon,
                            double tolerance = 1e-12);
/// Start index of the suffix used by truncatedExtrapolate.
std::size_t monotoneSuffixStart(std::span<const double> series, double tolerance = 1e-12);

/// Throws ArgumentError for windows shorter than 2.
Pose6DoF lrPredict(const PoseWindow& window, int horizon);
Pose6DoF tlrPredict(const PoseWindow& window, int horizon);

enum class BaselineKind { LR, TLR, MMLP, MLSTM };

std::string toString(BaselineKind k);
/// "lr", "tlr", "m-mlp", "m-lstm" (case-insensitive); ConfigError otherwise.
BaselineKind parseBaselineKind(const std::string& text);
/// Default history in frames: 30 for LR, 90 for the others.
int defaultHistory(BaselineKind k);

/// One training pair: `history` encoded poses and the pose `horizon` frames
/// after the last of them.
struct PoseSample {
  std::vector<EncodedPose> history;
  EncodedPose target{};
};

std::vector<PoseSample> makePoseSamples(std::span<const Pose6DoF> poses, int history, int horizon,
                                        int stride = 1);

struct LearnedBaselineConfig {
  int history = 90;
  int horizon = 30;
  int hidden = 60;
  std::uint64_t seed = 0;
};

/// Jointly predicts all 9 encoded channels from the flattened window:
/// 9*history -> hidden -> hidden -> 9 with relu.
class MlpBaseline {
 public:
  explicit MlpBaseline(const LearnedBaselineConfig& config);
  MlpBaseline(const MlpBaseline&) = delete;
  MlpBaseline& operator=(const MlpBaseline&) = delete;
  MlpBaseline(MlpBaseline&&) = default;
  MlpBaseline& operator=(MlpBaseline&&) = default;

  const LearnedBaselineConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  bool trained() const { return trained_; }
  void markTrained() { trained_ = true; }

  /// (batch, 9*history) -> (batch, 9).
  nn::Tensor forward(const nn::Tensor& x) const;
  nn::Tensor batchInput(std::span<const PoseSample* const> samples) const;
  /// Throws StateError when untrained.
  Pose6DoF predict(const PoseWindow& window) const;

  nn::Checkpoint toCheckpoint() const;
  static MlpBaseline fromCheckpoint(const nn::Checkpoint& ckpt);

 private:
  LearnedBaselineConfig config_;
  nn::ParameterSet params_;
  nn::Tensor w1_, b1_, w2_, b2_, w3_, b3_;
  bool trained_ = false;
};

/// Two stacked LSTM layers of `hidden` units over the window, then a linear
/// map from the last hidden state to the 9 channels.
class LstmBaseline {
 public:
  explicit LstmBaseline(const LearnedBaselineConfig& config);
  LstmBaseline(const LstmBaseline&) = delete;
  LstmBaseline& operator=(const LstmBaseline&) = delete;
  LstmBaseline(LstmBaseline&&) = default;
  LstmBaseline& operator=(LstmBaseline&&) = default;

  const LearnedBaselineConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  bool trained() const { return trained_; }
  void markTrained() { trained_ = true; }

  /// steps[t] has shape (batch, 9); returns (batch, 9).
  nn::Tensor forward(const std::vector<nn::Tensor>& steps) const;
  std::vector<nn::Tensor> batchInput(std::span<const PoseSample* const> samples) const;
  Pose6DoF predict(const PoseWindow& window) const;

  nn::Checkpoint toCheckpoint() const;
  static LstmBaseline fromCheckpoint(const nn::Checkpoint& ckpt);

 private:
  struct Layer {
    nn::Tensor wi, ui, bi, wf, uf, bf, wg, ug, bg, wo, uo, bo;
  };
  Layer makeLayer(const std::string& prefix, std::size_t in, std::mt19937_64& rng);

  LearnedBaselineConfig config_;
  nn::ParameterSet params_;
  std::vector<Layer> layers_;
  nn::Tensor wout_, bout_;
  bool trained_ = false;
};

/// MSE on encoded channels. Marks the model trained.
TrainResult trainBaseline(MlpBaseline& model, const std::vector<PoseSample>& trainSet,
                          const std::vector<PoseSample>& validation, const TrainOptions& options,
                          const std::function<void(const EpochLog&)>& onEpoch = {});
TrainResult trainBaseline(LstmBaseline& model, const std::vector<PoseSample>& trainSet,
                          const std::vector<PoseSample>& validation, const TrainOptions& options,
                          const std::function<void(const EpochLog&)>& onEpoch = {});

/// Window of `history` poses ending at index `end - 1`. Missing leading
/// frames repeat the first available pose.
PoseWindow poseWindowEndingAt(std::span<const Pose6DoF> poses, std::size_t end, int history);

struct PoseFeatures {
  std::vector<double> viewport;
  std::vector<double> visibility;
};

/// Viewport and visibility features of `frame` seen from `pose`, computed by
/// the same code path as ground-truth extraction.
PoseFeatures poseToFeatures(const Pose6DoF& pose, const PointCloudFrame& frame,
                            const CellGrid& grid, const FeatureOptions& options);

}  // namespace cellvis
