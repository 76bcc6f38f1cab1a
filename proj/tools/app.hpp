#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellvis/config.hpp"
#include "cellvis/errors.hpp"

namespace cellvis::app {

/// Bad invocation or missing inputs; exit code 2.
class UsageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A command needs an artifact an earlier command should have written.
class MissingArtifactError : public StateError {
 public:
  using StateError::StateError;
};

struct Overrides {
  std::optional<int> horizon;
  std::optional<std::string> target;
  std::optional<std::string> angleUnit;
  std::optional<std::uint64_t> seed;
};

/// Loads the config file and applies command-line overrides before
/// validation, so the fingerprint covers them.
RunConfig loadConfig(const std::filesystem::path& path, const Overrides& overrides);

/// Output files are written under a temporary name and renamed on commit;
/// anything not committed is deleted when the set is destroyed.
class OutputSet {
 public:
  OutputSet() = default;
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet();

  /// Temporary path to write `target` to.
  std::filesystem::path stage(const std::filesystem::path& target);
  void commit();
  const std::vector<std::filesystem::path>& targets() const { return targets_; }

 private:
  std::vector<std::filesystem::path> targets_;
  std::vector<std::filesystem::path> staged_;
  bool committed_ = false;
};

struct SynthArgs {
  std::filesystem::path spec;
  std::filesystem::path out;
  std::string id = "synth";
  AngleUnit angleUnit = AngleUnit::Degrees;
};

void runSynth(const SynthArgs& args);
void runExtract(const RunConfig& config);
void runTrain(const RunConfig& config);
void runPredict(const RunConfig& config, const std::string& method);
void runEvaluate(const RunConfig& config);
void runCorrelate(const RunConfig& config);
nlohmann::json runBench(const RunConfig& config);

/// Artifact locations shared by the commands.
std::filesystem::path featurePath(const RunConfig& config, const std::string& sequenceId);
std::filesystem::path gridPath(const RunConfig& config, const std::string& sequenceId);
std::filesystem::path checkpointPath(const RunConfig& config, const std::string& method,
                                     int horizon, Target target);

/// 2 for usage, config and missing-artifact errors, 1 otherwise.
int exitCodeFor(const std::exception& e);
/// One-line JSON object {"error": kind, "message": text}.
std::string errorLine(const std::exception& e);

}  // namespace cellvis::app
