#include "cellvis/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>

#include "cellvis/errors.hpp"

namespace cellvis {

using nlohmann::json;

double mseMetric(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size())
    throw ArgumentError("mse: " + std::to_string(p.size()) + " predictions for " +
                        std::to_string(y.size()) + " targets");
  if (p.empty()) throw ArgumentError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
  return s / static_cast<double>(p.size());
}

R2Result r2Metric(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size())
    throw ArgumentError("r2: " + std::to_string(p.size()) + " predictions for " +
                        std::to_string(y.size()) + " targets");
  if (p.empty()) throw ArgumentError("r2: empty input");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    res += (y[i] - p[i]) * (y[i] - p[i]);
    tot += (y[i] - mean) * (y[i] - mean);
  }
  if (tot == 0.0) return {0.0, true};
  return {1.0 - res / tot, false};
}

long horizonMs(int frames, double fps) {
  if (fps <= 0.0) throw ArgumentError("horizon: fps must be positive");
  return std::lround(frames / fps * 1000.0);
}

void MetricPool::add(std::span<const double> prediction, std::span<const double> truth) {
  if (prediction.size() != truth.size())
    throw ArgumentError("metrics: prediction and target sizes differ");
  prediction_.insert(prediction_.end(), prediction.begin(), prediction.end());
  truth_.insert(truth_.end(), truth.begin(), truth.end());
  ++windows_;
}

ReportRow evaluateWindows(const std::string& method, Target target, int horizonFrames,
                          double fps, const std::vector<WindowedSample>& windows,
                          const WindowPredictor& predict) {
  if (windows.empty())
    throw ArgumentError("evaluate: no windows for " + method + " at horizon " +
                        std::to_string(horizonFrames));
  MetricPool pool;
  for (const auto& w : windows) pool.add(predict(w), w.target(target));
  const R2Result r2 = pool.r2();
  return {method, target, horizonFrames, horizonMs(horizonFrames, fps), pool.mse(), r2.score,
          r2.degenerate, pool.windows()};
}

std::string configFingerprint(const json& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string EvalReport::fingerprint() const { return configFingerprint(config); }

void writeReportCsv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << "method,target,horizon_frames,horizon_ms,mse,r2,n_windows\n" << std::setprecision(17);
  for (const auto& r : report.rows)
    out << r.method << ',' << toString(r.target) << ',' << r.horizonFrames << ',' << r.horizonMs
        << ',' << r.mse << ',' << r.r2 << ',' << r.windows << '\n';
}

json reportJson(const EvalReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"method", r.method},
                    {"target", toString(r.target)},
                    {"horizon_frames", r.horizonFrames},
                    {"horizon_ms", r.horizonMs},
                    {"mse", r.mse},
                    {"r2", r.r2},
                    {"r2_degenerate", r.r2Degenerate},
                    {"n_windows", r.windows}});
  return {{"config_fingerprint", report.fingerprint()}, {"config", report.config}, {"rows", rows}};
}

void writeReportJson(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << reportJson(report).dump(2) << '\n';
}

}  // namespace cellvis
