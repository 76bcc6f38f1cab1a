#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "app.hpp"

namespace {

using namespace cellvis;

struct GlobalFlags {
  std::string config;
  std::string logLevel = "info";
  app::Overrides overrides;
};

void addConfigFlags(CLI::App* cmd, GlobalFlags& g) {
  cmd->add_option("-c,--config", g.config, "JSON run config")->required();
  cmd->add_option_function<int>(
      "--horizon", [&g](int h) { g.overrides.horizon = h; },
      "only this horizon (frames), replacing eval.horizons");
  cmd->add_option_function<std::string>(
      "--target", [&g](const std::string& t) { g.overrides.target = t; },
      "only this target (visibility or viewport), replacing eval.targets");
  cmd->add_option_function<std::string>(
      "--angle-unit", [&g](const std::string& u) { g.overrides.angleUnit = u; },
      "trajectory angle unit, replacing angle_unit");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&g](std::uint64_t s) { g.overrides.seed = s; }, "replaces seed");
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("cellvis");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");

  CLI::App cli{"Cell visibility prediction for volumetric video streaming"};
  cli.require_subcommand(1);
  cli.fallthrough();
  const std::string reference = "Config keys (key = default):\n" + configReference();
  cli.footer(reference);

  GlobalFlags g;
  cli.add_option("--log-level", g.logLevel, "trace, debug, info, warn, error or off")
      ->capture_default_str();

  app::SynthArgs synthArgs;
  std::string synthUnit = "degrees";
  auto* synth = cli.add_subcommand("synth", "write a synthetic scene and trajectory");
  synth->add_option("--spec", synthArgs.spec, "synthetic scene JSON")->required();
  synth->add_option("-o,--out", synthArgs.out, "output directory")->required();
  synth->add_option("--id", synthArgs.id, "sequence id written to sequence.json")
      ->capture_default_str();
  synth->add_option("--angle-unit", synthUnit, "trajectory angle unit")->capture_default_str();

  auto* extract = cli.add_subcommand("extract", "compute FVT1 cell features per sequence");
  auto* trainCmd = cli.add_subcommand("train", "train the graph model and learned baselines");
  auto* predict = cli.add_subcommand("predict", "write per-window predictions on the test split");
  std::string method = kGraphModelKind;
  predict->add_option("--method", method, "graph-gru, lr, tlr, m-mlp or m-lstm")
      ->capture_default_str();
  auto* evaluate = cli.add_subcommand("evaluate", "score every method per horizon and target");
  auto* correlate = cli.add_subcommand("correlate", "cell-pair correlation matrix of a channel");
  auto* bench = cli.add_subcommand("bench", "feature extraction frames per second");
  for (auto* cmd : {extract, trainCmd, predict, evaluate, correlate, bench}) {
    addConfigFlags(cmd, g);
    cmd->footer(reference);
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app::errorLine(app::UsageError(e.what())) << '\n';
    return 2;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(g.logLevel));
    if (synth->parsed()) {
      synthArgs.angleUnit = parseAngleUnit(synthUnit);
      app::runSynth(synthArgs);
      return 0;
    }
    const RunConfig config = app::loadConfig(g.config, g.overrides);
    spdlog::debug("config fingerprint {}", config.fingerprint());
    if (extract->parsed()) app::runExtract(config);
    else if (trainCmd->parsed()) app::runTrain(config);
    else if (predict->parsed()) app::runPredict(config, method);
    else if (evaluate->parsed()) app::runEvaluate(config);
    else if (correlate->parsed()) app::runCorrelate(config);
    else if (bench->parsed()) std::cout << app::runBench(config).dump(2) << std::endl;
    return 0;
  } catch (const std::exception& e) {
    spdlog::default_logger()->flush();
    std::cerr << app::errorLine(e) << '\n';
    return app::exitCodeFor(e);
  }
}
