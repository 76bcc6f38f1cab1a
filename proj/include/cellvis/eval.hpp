#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellvis/dataset.hpp"

namespace cellvis {

/// Mean of squared differences. Throws ArgumentError on size mismatch or
/// empty input.
double mseMetric(std::span<const double> prediction, std::span<const double> truth);

struct R2Result {
  double score = 0.0;
  bool degenerate = false;  // truth was constant; score reported as 0
};

/// 1 - SS_res / SS_tot, with the truth mean taken by left-to-right summation
/// divided by the count.
R2Result r2Metric(std::span<const double> prediction, std::span<const double> truth);

/// Rounded milliseconds of `frames` at `fps`.
long horizonMs(int frames, double fps = 30.0);

/// Pools predictions over windows for one (method, target, horizon).
class MetricPool {
 public:
  void add(std::span<const double> prediction, std::span<const double> truth);
  std::size_t windows() const { return windows_; }
  double mse() const { return mseMetric(prediction_, truth_); }
  R2Result r2() const { return r2Metric(prediction_, truth_); }

 private:
  std::vector<double> prediction_;
  std::vector<double> truth_;
  std::size_t windows_ = 0;
};

struct ReportRow {
  std::string method;
  Target target = Target::Visibility;
  int horizonFrames = 0;
  long horizonMs = 0;
  double mse = 0.0;
  double r2 = 0.0;
  bool r2Degenerate = false;
  std::size_t windows = 0;
};

using WindowPredictor = std::function<std::vector<double>(const WindowedSample&)>;

/// Runs `predict` on every window and scores it against the window's target.
ReportRow evaluateWindows(const std::string& method, Target target, int horizonFrames,
                          double fps, const std::vector<WindowedSample>& windows,
                          const WindowPredictor& predict);

struct EvalReport {
  nlohmann::json config;
  std::vector<ReportRow> rows;

  std::string fingerprint() const;
};

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string configFingerprint(const nlohmann::json& config);

/// Columns: method,target,horizon_frames,horizon_ms,mse,r2,n_windows.
void writeReportCsv(const std::filesystem::path& path, const EvalReport& report);
nlohmann::json reportJson(const EvalReport& report);
void writeReportJson(const std::filesystem::path& path, const EvalReport& report);

}  // namespace cellvis
