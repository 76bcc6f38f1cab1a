#include "cellvis/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <json.hpp>

#include "cellvis/errors.hpp"

namespace cellvis {

using nlohmann::json;
using nn::Tensor;

EncodedPose encodePose(const Pose6DoF& pose) {
  const AngleEncoding a = encodeAngles(pose);
  return {pose.position.x, pose.position.y, pose.position.z, a.yaw.sin,  a.yaw.cos,
          a.pitch.sin,     a.pitch.cos,     a.roll.sin,      a.roll.cos};
}

Pose6DoF decodePose(const EncodedPose& e) {
  const Orientation o = decodeAngles({{e[3], e[4]}, {e[5], e[6]}, {e[7], e[8]}});
  Pose6DoF p;
  p.position = {e[0], e[1], e[2]};
  p.yaw = o.yaw;
  p.pitch = o.pitch;
  p.roll = o.roll;
  return p.canonical();
}

PoseWindow PoseWindow::fromPoses(std::span<const Pose6DoF> poses) {
  PoseWindow w;
  for (const auto& p : poses) w.steps.push_back(encodePose(p));
  return w;
}

std::vector<double> PoseWindow::channel(std::size_t c) const {
  std::vector<double> s(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) s[t] = steps[t][c];
  return s;
}

double linearExtrapolate(std::span<const double> s, double horizon) {
  const std::size_t n = s.size();
  if (n < 2) throw ArgumentError("linear extrapolation needs at least 2 samples");
  // Fit residuals against the last sample so a constant series returns it exactly.
  const double last = s[n - 1];
  const double tbar = (n - 1) / 2.0;
  double rbar = 0.0;
  for (double v : s) rbar += v - last;
  rbar /= static_cast<double>(n);
  double stt = 0.0, str = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - tbar;
    stt += dt * dt;
    str += dt * (s[t] - last - rbar);
  }
  const double slope = str / stt;
  return last + rbar + slope * (static_cast<double>(n - 1) + horizon - tbar);
}

std::size_t monotoneSuffixStart(std::span<const double> s, double tolerance) {
  const std::size_t n = s.size();
  if (n < 2) return n == 0 ? 0 : n - 1;
  const double d = s[n - 1] - s[n - 2];
  if (std::abs(d) <= tolerance) return n - 1;
  const bool rising = d > 0.0;
  std::size_t i = n - 2;
  while (i > 0) {
    const double e = s[i] - s[i - 1];
    if (std::abs(e) <= tolerance || (e > 0.0) != rising) break;
    --i;
  }
  return i;
}

double truncatedExtrapolate(std::span<const double> s, double horizon, double tolerance) {
  if (s.empty()) throw ArgumentError("truncated extrapolation on an empty series");
  const std::size_t start = monotoneSuffixStart(s, tolerance);
  if (s.size() - start < 2) return s.back();
  return linearExtrapolate(s.subspan(start), horizon);
}

namespace {

template <typename F>
Pose6DoF extrapolatePose(const PoseWindow& w, int horizon, const char* name, F extrapolate) {
  if (w.length() < 2)
    throw ArgumentError(std::string(name) + ": window needs at least 2 poses, got " +
                        std::to_string(w.length()));
  EncodedPose out{};
  for (std::size_t c = 0; c < kPoseChannels; ++c) {
    const auto series = w.channel(c);
    out[c] = extrapolate(std::span<const double>(series), static_cast<double>(horizon));
  }
  return decodePose(out);
}

}  // namespace

Pose6DoF lrPredict(const PoseWindow& window, int horizon) {
  return extrapolatePose(window, horizon, "lr_predict",
                         [](std::span<const double> s, double h) { return linearExtrapolate(s, h); });
}

Pose6DoF tlrPredict(const PoseWindow& window, int horizon) {
  return extrapolatePose(window, horizon, "tlr_predict", [](std::span<const double> s, double h) {
    return truncatedExtrapolate(s, h);
  });
}

std::string toString(BaselineKind k) {
  switch (k) {
    case BaselineKind::LR: return "lr";
    case BaselineKind::TLR: return "tlr";
    case BaselineKind::MMLP: return "m-mlp";
    case BaselineKind::MLSTM: return "m-lstm";
  }
  return "?";
}

BaselineKind parseBaselineKind(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "lr") return BaselineKind::LR;
  if (t == "tlr") return BaselineKind::TLR;
  if (t == "m-mlp" || t == "mmlp") return BaselineKind::MMLP;
  if (t == "m-lstm" || t == "mlstm") return BaselineKind::MLSTM;
  throw ConfigError("unknown baseline '" + text + "' (expected lr, tlr, m-mlp or m-lstm)");
}

int defaultHistory(BaselineKind k) { return k == BaselineKind::LR ? 30 : 90; }

std::vector<PoseSample> makePoseSamples(std::span<const Pose6DoF> poses, int history, int horizon,
                                        int stride) {
  if (history < 1 || horizon < 1 || stride < 1)
    throw ArgumentError("pose samples: history, horizon and stride must be positive");
  std::vector<PoseSample> out;
  const auto h = static_cast<std::size_t>(history), f = static_cast<std::size_t>(horizon);
  for (std::size_t s = 0; s + h - 1 + f < poses.size(); s += stride) {
    PoseSample p;
    for (std::size_t t = s; t < s + h; ++t) p.history.push_back(encodePose(poses[t]));
    p.target = encodePose(poses[s + h - 1 + f]);
    out.push_back(std::move(p));
  }
  return out;
}

PoseWindow poseWindowEndingAt(std::span<const Pose6DoF> poses, std::size_t end, int history) {
  if (end == 0 || end > poses.size()) throw ArgumentError("pose window: end out of range");
  PoseWindow w;
  for (int k = history; k > 0; --k) {
    const auto back = static_cast<std::size_t>(k);
    w.steps.push_back(encodePose(poses[end >= back ? end - back : 0]));
  }
  return w;
}

// ---- M-MLP ----------------------------------------------------------------

namespace {

constexpr const char* kMlpKind = "m-mlp";
constexpr const char* kLstmKind = "m-lstm";

json baselineMeta(const LearnedBaselineConfig& c) {
  return {{"history", c.history}, {"horizon", c.horizon}, {"hidden", c.hidden}, {"seed", c.seed}};
}

LearnedBaselineConfig baselineConfigFrom(const nn::Checkpoint& ckpt, const char* kind) {
  if (ckpt.kind != kind)
    throw StateError("checkpoint holds '" + ckpt.kind + "', expected " + kind);
  try {
    const json m = json::parse(ckpt.metadata);
    LearnedBaselineConfig c;
    c.history = m.at("history").get<int>();
    c.horizon = m.at("horizon").get<int>();
    c.hidden = m.at("hidden").get<int>();
    c.seed = m.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
}

void checkConfig(const LearnedBaselineConfig& c) {
  if (c.history < 1 || c.horizon < 1 || c.hidden < 1)
    throw ConfigError("baseline: history, horizon and hidden must be positive");
}

Tensor targetsOf(std::span<const PoseSample* const> samples) {
  std::vector<double> y;
  for (const auto* s : samples) y.insert(y.end(), s->target.begin(), s->target.end());
  return Tensor::from({samples.size(), kPoseChannels}, std::move(y));
}

EncodedPose firstRow(const Tensor& t) {
  EncodedPose e{};
  std::copy_n(t.values().begin(), kPoseChannels, e.begin());
  return e;
}

}  // namespace

MlpBaseline::MlpBaseline(const LearnedBaselineConfig& config) : config_(config) {
  checkConfig(config_);
  std::mt19937_64 rng(config_.seed);
  const auto in = kPoseChannels * static_cast<std::size_t>(config_.history);
  const auto hid = static_cast<std::size_t>(config_.hidden);
  w1_ = params_.add("mlp.w1", nn::glorot(in, hid, rng));
  b1_ = params_.add("mlp.b1", Tensor::zeros({hid}));
  w2_ = params_.add("mlp.w2", nn::glorot(hid, hid, rng));
  b2_ = params_.add("mlp.b2", Tensor::zeros({hid}));
  w3_ = params_.add("mlp.w3", nn::glorot(hid, kPoseChannels, rng));
  b3_ = params_.add("mlp.b3", Tensor::zeros({kPoseChannels}));
}

Tensor MlpBaseline::forward(const Tensor& x) const {
  if (x.dim() != 2 || x.cols() != w1_.rows())
    throw ShapeError("m-mlp: input " + nn::shapeString(x.shape()) + ", expected width " +
                     std::to_string(w1_.rows()));
  const Tensor a1 = nn::relu(nn::add(nn::matmul(x, w1_), b1_));
  const Tensor a2 = nn::relu(nn::add(nn::matmul(a1, w2_), b2_));
  return nn::add(nn::matmul(a2, w3_), b3_);
}

Tensor MlpBaseline::batchInput(std::span<const PoseSample* const> samples) const {
  std::vector<double> x;
  for (const auto* s : samples) {
    if (s->history.size() != static_cast<std::size_t>(config_.history))
      throw ShapeError("m-mlp: window of " + std::to_string(s->history.size()) +
                       " poses, model expects " + std::to_string(config_.history));
    for (const auto& e : s->history) x.insert(x.end(), e.begin(), e.end());
  }
  return Tensor::from({samples.size(), w1_.rows()}, std::move(x));
}

Pose6DoF MlpBaseline::predict(const PoseWindow& window) const {
  if (!trained_) throw StateError("m-mlp: parameters are untrained");
  nn::NoGradGuard guard;
  PoseSample s{window.steps, {}};
  const PoseSample* ptr = &s;
  return decodePose(firstRow(forward(batchInput({&ptr, 1}))));
}

nn::Checkpoint MlpBaseline::toCheckpoint() const {
  return {kMlpKind, baselineMeta(config_).dump(), params_.clone()};
}

MlpBaseline MlpBaseline::fromCheckpoint(const nn::Checkpoint& ckpt) {
  MlpBaseline m(baselineConfigFrom(ckpt, kMlpKind));
  m.params_.assign(ckpt.params);
  m.trained_ = true;
  return m;
}

// ---- M-LSTM ---------------------------------------------------------------

LstmBaseline::Layer LstmBaseline::makeLayer(const std::string& prefix, std::size_t in,
                                            std::mt19937_64& rng) {
  const auto hid = static_cast<std::size_t>(config_.hidden);
  const std::string p = prefix + ".";
  Layer l;
  l.wi = params_.add(p + "wi", nn::glorot(in, hid, rng));
  l.ui = params_.add(p + "ui", nn::glorot(hid, hid, rng));
  l.bi = params_.add(p + "bi", Tensor::zeros({hid}));
  l.wf = params_.add(p + "wf", nn::glorot(in, hid, rng));
  l.uf = params_.add(p + "uf", nn::glorot(hid, hid, rng));
  l.bf = params_.add(p + "bf", Tensor::full({hid}, 1.0));
  l.wg = params_.add(p + "wg", nn::glorot(in, hid, rng));
  l.ug = params_.add(p + "ug", nn::glorot(hid, hid, rng));
  l.bg = params_.add(p + "bg", Tensor::zeros({hid}));
  l.wo = params_.add(p + "wo", nn::glorot(in, hid, rng));
  l.uo = params_.add(p + "uo", nn::glorot(hid, hid, rng));
  l.bo = params_.add(p + "bo", Tensor::zeros({hid}));
  return l;
}

LstmBaseline::LstmBaseline(const LearnedBaselineConfig& config) : config_(config) {
  checkConfig(config_);
  std::mt19937_64 rng(config_.seed);
  const auto hid = static_cast<std::size_t>(config_.hidden);
  layers_.push_back(makeLayer("lstm0", kPoseChannels, rng));
  layers_.push_back(makeLayer("lstm1", hid, rng));
  wout_ = params_.add("lstm.wout", nn::glorot(hid, kPoseChannels, rng));
  bout_ = params_.add("lstm.bout", Tensor::zeros({kPoseChannels}));
}

Tensor LstmBaseline::forward(const std::vector<Tensor>& steps) const {
  if (steps.empty()) throw ArgumentError("m-lstm: empty sequence");
  const std::size_t batch = steps[0].rows();
  const auto hid = static_cast<std::size_t>(config_.hidden);
  std::vector<Tensor> seq = steps;
  for (const auto& l : layers_) {
    Tensor h = Tensor::zeros({batch, hid}), c = Tensor::zeros({batch, hid});
    for (auto& x : seq) {
      if (x.dim() != 2 || x.rows() != batch || x.cols() != l.wi.rows())
        throw ShapeError("m-lstm: step input " + nn::shapeString(x.shape()));
      auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
        return nn::add(nn::add(nn::matmul(x, w), nn::matmul(h, u)), b);
      };
      const Tensor i = nn::sigmoid(gate(l.wi, l.ui, l.bi));
      const Tensor f = nn::sigmoid(gate(l.wf, l.uf, l.bf));
      const Tensor g = nn::tanh(gate(l.wg, l.ug, l.bg));
      const Tensor o = nn::sigmoid(gate(l.wo, l.uo, l.bo));
      c = nn::add(nn::mul(f, c), nn::mul(i, g));
      h = nn::mul(o, nn::tanh(c));
      x = h;
    }
  }
  return nn::add(nn::matmul(seq.back(), wout_), bout_);
}

std::vector<Tensor> LstmBaseline::batchInput(std::span<const PoseSample* const> samples) const {
  if (samples.empty()) throw ArgumentError("m-lstm: empty batch");
  const std::size_t len = samples[0]->history.size();
  std::vector<Tensor> steps;
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> x;
    for (const auto* s : samples) {
      if (s->history.size() != len) throw ShapeError("m-lstm: windows differ in length");
      x.insert(x.end(), s->history[t].begin(), s->history[t].end());
    }
    steps.push_back(Tensor::from({samples.size(), kPoseChannels}, std::move(x)));
  }
  return steps;
}

Pose6DoF LstmBaseline::predict(const PoseWindow& window) const {
  if (!trained_) throw StateError("m-lstm: parameters are untrained");
  nn::NoGradGuard guard;
  PoseSample s{window.steps, {}};
  const PoseSample* ptr = &s;
  return decodePose(firstRow(forward(batchInput({&ptr, 1}))));
}

nn::Checkpoint LstmBaseline::toCheckpoint() const {
  return {kLstmKind, baselineMeta(config_).dump(), params_.clone()};
}

LstmBaseline LstmBaseline::fromCheckpoint(const nn::Checkpoint& ckpt) {
  LstmBaseline m(baselineConfigFrom(ckpt, kLstmKind));
  m.params_.assign(ckpt.params);
  m.trained_ = true;
  return m;
}

// ---- training -------------------------------------------------------------

namespace {

template <typename Model, typename Forward>
TrainResult trainPoseModel(Model& model, const std::vector<PoseSample>& trainSet,
                           const std::vector<PoseSample>& validation, const TrainOptions& options,
                           const std::function<void(const EpochLog&)>& onEpoch, Forward fwd) {
  std::vector<const PoseSample*> ptrs;
  auto batchLoss = [&](std::span<const std::size_t> ids) {
    ptrs.clear();
    for (auto i : ids) ptrs.push_back(&trainSet[i]);
    return BatchLoss{nn::mseLoss(fwd(ptrs), targetsOf(ptrs)),
                     static_cast<double>(ptrs.size() * kPoseChannels)};
  };
  std::function<double()> valLoss;
  if (!validation.empty())
    valLoss = [&] {
      nn::NoGradGuard guard;
      std::vector<const PoseSample*> all;
      for (const auto& s : validation) all.push_back(&s);
      return nn::mseLoss(fwd(all), targetsOf(all)).item();
    };
  TrainResult r = runTraining(model.params(), trainSet.size(), batchLoss, valLoss, options, onEpoch);
  model.markTrained();
  return r;
}

}  // namespace

TrainResult trainBaseline(MlpBaseline& model, const std::vector<PoseSample>& trainSet,
                          const std::vector<PoseSample>& validation, const TrainOptions& options,
                          const std::function<void(const EpochLog&)>& onEpoch) {
  return trainPoseModel(model, trainSet, validation, options, onEpoch,
                        [&](std::span<const PoseSample* const> s) {
                          return model.forward(model.batchInput(s));
                        });
}

TrainResult trainBaseline(LstmBaseline& model, const std::vector<PoseSample>& trainSet,
                          const std::vector<PoseSample>& validation, const TrainOptions& options,
                          const std::function<void(const EpochLog&)>& onEpoch) {
  return trainPoseModel(model, trainSet, validation, options, onEpoch,
                        [&](std::span<const PoseSample* const> s) {
                          return model.forward(model.batchInput(s));
                        });
}

PoseFeatures poseToFeatures(const Pose6DoF& pose, const PointCloudFrame& frame,
                            const CellGrid& grid, const FeatureOptions& options) {
  PoseFeatures out;
  out.viewport = viewportFeature(grid, pose, options.intrinsics, options.samplesPerCell);
  out.visibility =
      visibilityFeature(frame, grid, pose, options.intrinsics, options.hpr, options.voxelSize).v;
  return out;
}

}  // namespace cellvis
