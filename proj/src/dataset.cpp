#include "cellvis/dataset.hpp"

#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "cellvis/errors.hpp"

namespace cellvis {

std::string toString(Target t) { return t == Target::Visibility ? "visibility" : "viewport"; }

Target parseTarget(const std::string& text) {
  if (text == "visibility") return Target::Visibility;
  if (text == "viewport") return Target::Viewport;
  throw ConfigError("unknown target '" + text + "' (expected visibility or viewport)");
}

std::vector<double> WindowedSample::target(Target t) const {
  const std::size_t ch = t == Target::Visibility ? kVisibility : kViewport;
  std::vector<double> y(cells());
  for (std::size_t c = 0; c < y.size(); ++c) y[c] = features->at(targetFrame(), c, ch);
  return y;
}

std::vector<double> WindowedSample::targetOccupancy() const {
  std::vector<double> o(cells());
  for (std::size_t c = 0; c < o.size(); ++c) o[c] = features->at(targetFrame(), c, kOccupancy);
  return o;
}

std::vector<double> WindowedSample::mask() const {
  auto m = targetOccupancy();
  for (auto& v : m) v = v > 0.0 ? 1.0 : 0.0;
  return m;
}

std::size_t windowCount(std::size_t frames, std::size_t history, std::size_t horizon,
                        std::size_t stride) {
  if (stride == 0) throw ArgumentError("make_windows: stride must be positive");
  if (history == 0 || horizon == 0)
    throw ArgumentError("make_windows: history and horizon must be positive");
  if (frames < history + horizon) return 0;
  return (frames - history - horizon) / stride + 1;
}

std::vector<WindowedSample> makeWindows(const SequenceFeatures& sequence, std::size_t history,
                                        std::size_t horizon, std::size_t stride) {
  if (!sequence.features) throw ArgumentError("make_windows: sequence has no features");
  const std::size_t frames = sequence.features->frames;
  const std::size_t n = windowCount(frames, history, horizon, stride);
  if (n == 0)
    spdlog::warn("make_windows: sequence '{}' has {} frames, fewer than history {} + horizon {}",
                 sequence.id, frames, history, horizon);
  std::vector<WindowedSample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k)
    out.push_back({sequence.features, sequence.id, k * stride, history, horizon, sequence.frameOffset});
  return out;
}

Standardizer fitStandardizer(const std::vector<SequenceFeatures>& sequences) {
  std::array<double, kInputChannels> sum{}, sumSq{};
  std::size_t count = 0;
  for (const auto& s : sequences) {
    const auto& t = *s.features;
    if (t.channels.size() != kInputChannels)
      throw ShapeError("standardizer: expected " + std::to_string(kInputChannels) +
                       " channels, got " + std::to_string(t.channels.size()));
    for (std::size_t f = 0; f < t.frames; ++f)
      for (std::size_t c = 0; c < t.cells; ++c)
        for (std::size_t ch = 0; ch < kInputChannels; ++ch) {
          const double v = t.at(f, c, ch);
          sum[ch] += v;
          sumSq[ch] += v * v;
        }
    count += t.frames * t.cells;
  }
  Standardizer st;
  if (count == 0) return st;
  for (std::size_t ch = 0; ch < kInputChannels; ++ch) {
    st.mean[ch] = sum[ch] / count;
    const double var = std::max(0.0, sumSq[ch] / count - st.mean[ch] * st.mean[ch]);
    const double sd = std::sqrt(var);
    st.stddev[ch] = sd < 1e-8 ? 1.0 : sd;
  }
  return st;
}

std::shared_ptr<const FeatureTensor> sliceFrames(const FeatureTensor& t, std::size_t begin,
                                                 std::size_t end) {
  if (begin > end || end > t.frames) throw ArgumentError("slice_frames: range out of bounds");
  auto out = std::make_shared<FeatureTensor>();
  out->frames = end - begin;
  out->cells = t.cells;
  out->channels = t.channels;
  const std::size_t per = t.cells * t.channels.size();
  out->data.assign(t.data.begin() + begin * per, t.data.begin() + end * per);
  return out;
}

SplitWindows splitWindows(const std::vector<SequenceFeatures>& sequences, const SplitSpec& split,
                          std::size_t history, std::size_t horizon, std::size_t trainStride,
                          std::size_t evalStride) {
  const std::set<std::string> trainSet(split.trainIds.begin(), split.trainIds.end());
  const std::set<std::string> testSet(split.testIds.begin(), split.testIds.end());
  for (const auto& id : testSet)
    if (trainSet.count(id))
      throw ConfigError("split: sequence '" + id + "' is listed for both training and testing");
  if (split.testFraction <= 0.0 || split.testFraction >= 1.0)
    throw ConfigError("split: test_fraction must lie in (0, 1)");

  SplitWindows out;
  std::set<std::string> found;
  auto append = [](std::vector<WindowedSample>& dst, std::vector<WindowedSample> src) {
    dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
  };
  for (const auto& s : sequences) {
    if (trainSet.count(s.id)) {
      found.insert(s.id);
      append(out.train, makeWindows(s, history, horizon, trainStride));
    } else if (testSet.count(s.id)) {
      found.insert(s.id);
      const std::size_t cut =
          static_cast<std::size_t>(std::floor(s.features->frames * split.testFraction));
      const SequenceFeatures test{s.id, sliceFrames(*s.features, 0, cut), s.frameOffset};
      const SequenceFeatures val{s.id, sliceFrames(*s.features, cut, s.features->frames),
                                 s.frameOffset + cut};
      append(out.test, makeWindows(test, history, horizon, evalStride));
      append(out.validation, makeWindows(val, history, horizon, evalStride));
    }
  }
  for (const auto* ids : {&split.trainIds, &split.testIds})
    for (const auto& id : *ids)
      if (!found.count(id)) throw ConfigError("split: sequence '" + id + "' not found");
  return out;
}

}  // namespace cellvis
