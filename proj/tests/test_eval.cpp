#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cellvis/dataset.hpp"
#include "cellvis/errors.hpp"
#include "cellvis/eval.hpp"
#include "test_util.hpp"

using namespace cellvis;

namespace {

// Frame index written into every channel so windows can be traced back.
std::shared_ptr<FeatureTensor> rampFeatures(std::size_t frames, std::size_t cells) {
  auto t = std::make_shared<FeatureTensor>();
  t->frames = frames;
  t->cells = cells;
  t->channels = kFeatureChannels;
  t->data.resize(frames * cells * kInputChannels);
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t c = 0; c < cells; ++c)
      for (std::size_t ch = 0; ch < kInputChannels; ++ch)
        t->at(f, c, ch) = static_cast<float>(f);
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("window counts") {
  CHECK(windowCount(10, 6, 4, 1) == 1);
  CHECK(windowCount(9, 6, 4, 1) == 0);
  CHECK(windowCount(14, 6, 4, 1) == 5);
  CHECK(windowCount(14, 6, 4, 2) == 3);
  SequenceFeatures s{"s", rampFeatures(14, 2), 100};
  const auto w = makeWindows(s, 6, 4);
  REQUIRE(w.size() == 5);
  CHECK(w[4].start == 4);
  CHECK(w[4].targetFrame() == 13);
  CHECK(w[4].sourceTargetFrame() == 113);
  CHECK(w[4].sourceHistoryEnd() == 110);
  CHECK(w[4].target(Target::Visibility)[1] == 13.0);
  CHECK(makeWindows(SequenceFeatures{"short", rampFeatures(5, 2), 0}, 6, 4).empty());
}

TEST_CASE("split never lets a window straddle the cut") {
  const std::vector<SequenceFeatures> seqs{{"a", rampFeatures(40, 3), 0},
                                           {"b", rampFeatures(41, 3), 0},
                                           {"c", rampFeatures(30, 3), 0}};
  SplitSpec spec{{"a"}, {"b"}, 0.5};
  const auto s = splitWindows(seqs, spec, 5, 3, 1, 2);
  CHECK(s.train.size() == windowCount(40, 5, 3, 1));
  CHECK(s.test.size() == windowCount(20, 5, 3, 2));
  CHECK(s.validation.size() == windowCount(21, 5, 3, 2));
  for (const auto& w : s.test) {
    CHECK(w.source == "b");
    CHECK(w.sourceTargetFrame() < 20);
    CHECK(w.feature(0, 0, kVisibility) == static_cast<float>(w.frameOffset + w.start));
  }
  for (const auto& w : s.validation) {
    CHECK(w.frameOffset + w.start >= 20);
    CHECK(w.feature(0, 0, kVisibility) == static_cast<float>(w.frameOffset + w.start));
  }

  CHECK_THROWS_AS(splitWindows(seqs, SplitSpec{{"a"}, {"a"}, 0.5}, 5, 3, 1, 1), ConfigError);
  CHECK_THROWS_AS(splitWindows(seqs, SplitSpec{{"a"}, {"zzz"}, 0.5}, 5, 3, 1, 1), ConfigError);
  CHECK_THROWS_AS(splitWindows(seqs, SplitSpec{{"a"}, {"b"}, 1.0}, 5, 3, 1, 1), ConfigError);
}

TEST_CASE("standardizer") {
  auto t = rampFeatures(5, 1);  // 0..4 in every channel
  const auto st = fitStandardizer({SequenceFeatures{"s", t, 0}});
  CHECK(st.mean[0] == doctest::Approx(2.0));
  CHECK(st.stddev[0] == doctest::Approx(std::sqrt(2.0)));
  auto flat = rampFeatures(5, 1);
  for (auto& v : flat->data) v = 3.0f;
  const auto st2 = fitStandardizer({SequenceFeatures{"s", flat, 0}});
  CHECK(st2.stddev[2] == 1.0);
  CHECK(st2.apply(2, 3.0) == 0.0);
}

TEST_CASE("metrics") {
  const std::vector<double> y{1, 2, 3, 4}, p{1, 2, 3, 6};
  CHECK(mseMetric(p, y) == 1.0);
  CHECK(mseMetric(y, y) == 0.0);
  CHECK(r2Metric(y, y).score == 1.0);
  const auto r = r2Metric(p, y);
  CHECK(r.score == doctest::Approx(1.0 - 4.0 / 5.0));
  const std::vector<double> mean{2.5, 2.5, 2.5, 2.5};
  CHECK(r2Metric(mean, y).score == 0.0);
  const std::vector<double> flat{1, 1, 1, 1};
  CHECK(r2Metric(p, flat).degenerate);
  CHECK_THROWS_AS(mseMetric(p, std::span(y).first(2)), ArgumentError);
  CHECK_THROWS_AS(mseMetric({}, {}), ArgumentError);

  CHECK(horizonMs(10) == 333);
  CHECK(horizonMs(30) == 1000);
  CHECK(horizonMs(60) == 2000);
  CHECK(horizonMs(150) == 5000);

  MetricPool pool;
  pool.add(std::span(p).first(2), std::span(y).first(2));
  pool.add(std::span(p).last(2), std::span(y).last(2));
  CHECK(pool.windows() == 2);
  CHECK(pool.mse() == 1.0);
}

TEST_CASE("evaluate windows and write reports") {
  SequenceFeatures s{"s", rampFeatures(12, 2), 0};
  const auto windows = makeWindows(s, 3, 2);
  const auto oracle = [](const WindowedSample& w) { return w.target(Target::Viewport); };
  const auto row = evaluateWindows("oracle", Target::Viewport, 2, 30.0, windows, oracle);
  CHECK(row.mse == 0.0);
  CHECK(row.r2 == 1.0);
  CHECK(row.windows == windows.size());
  CHECK(row.horizonMs == 67);
  CHECK_THROWS_AS(evaluateWindows("x", Target::Viewport, 2, 30.0, {}, oracle), ArgumentError);

  EvalReport report{{{"seed", 1}}, {row}};
  const auto dir = test::scratchDir("report");
  writeReportCsv(dir / "r.csv", report);
  const auto csv = slurp(dir / "r.csv");
  CHECK(csv.rfind("method,target,horizon_frames,horizon_ms,mse,r2,n_windows\n", 0) == 0);
  CHECK(csv.find("oracle,viewport,2,67,0,1,8") != std::string::npos);
  const auto j = reportJson(report);
  CHECK(j.at("config_fingerprint") == report.fingerprint());
  CHECK(report.fingerprint().size() == 16);
  CHECK(configFingerprint({{"a", 1}}) != configFingerprint({{"a", 2}}));
  CHECK(configFingerprint({{"a", 1}}) == configFingerprint({{"a", 1}}));
}

}  // TEST_SUITE
