#include "app.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "cellvis/baselines.hpp"
#include "cellvis/cellgrid.hpp"
#include "cellvis/dataset.hpp"
#include "cellvis/eval.hpp"
#include "cellvis/model.hpp"
#include "cellvis/pointcloud.hpp"
#include "cellvis/synth.hpp"
#include "cellvis/tensor.hpp"

namespace cellvis::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kExtractChunk = 16;

std::ofstream openOut(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::vector<fs::path> listFrames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("frame directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ply") files.push_back(e.path());
  if (files.empty()) throw UsageError("no .ply frames in " + dir.string());
  std::sort(files.begin(), files.end());
  return files;
}

PointCloudFrame loadFrame(const fs::path& file, std::size_t index, double sourceScale) {
  auto frame = toWorldMeters(loadPly(file), sourceScale);
  frame.frameIndex = index;
  return frame;
}

std::vector<Pose6DoF> loadPoses(const SequenceSource& src, AngleUnit unit) {
  if (!fs::is_regular_file(src.trajectory))
    throw UsageError("trajectory not found for '" + src.id + "': " + src.trajectory.string());
  std::vector<Pose6DoF> poses;
  for (const auto& r : loadTrajectoryCsv(src.trajectory, unit)) poses.push_back(r.pose);
  return poses;
}

const SequenceSource& findSource(const RunConfig& c, const std::string& id) {
  for (const auto& s : c.sequences)
    if (s.id == id) return s;
  throw ConfigError("unknown sequence '" + id + "'");
}

json gridJson(const CellGrid& g, std::size_t frames) {
  return {{"bbox_min", {g.bboxMin.x, g.bboxMin.y, g.bboxMin.z}},
          {"bbox_max", {g.bboxMax.x, g.bboxMax.y, g.bboxMax.z}},
          {"dims", g.dims},
          {"frames", frames}};
}

CellGrid loadGrid(const RunConfig& c, const std::string& id) {
  const auto path = gridPath(c, id);
  std::ifstream in(path);
  if (!in)
    throw MissingArtifactError("grid for sequence '" + id + "' not found at " + path.string() +
                               "; run extract first");
  const json j = json::parse(in);
  CellGrid g;
  const auto lo = j.at("bbox_min").get<std::vector<double>>();
  const auto hi = j.at("bbox_max").get<std::vector<double>>();
  g.bboxMin = {lo[0], lo[1], lo[2]};
  g.bboxMax = {hi[0], hi[1], hi[2]};
  g.dims = j.at("dims").get<GridDims>();
  for (int a = 0; a < 3; ++a) g.cellSize[a] = (g.bboxMax[a] - g.bboxMin[a]) / g.dims[a];
  return g;
}

SequenceFeatures loadFeatures(const RunConfig& c, const std::string& id) {
  const auto path = featurePath(c, id);
  if (!fs::is_regular_file(path))
    throw MissingArtifactError("features for sequence '" + id + "' not found at " +
                               path.string() + "; run extract first");
  auto t = std::make_shared<FeatureTensor>(readFvt(path));
  const std::size_t cells = static_cast<std::size_t>(c.grid[0]) * c.grid[1] * c.grid[2];
  if (t->cells != cells)
    throw ConfigError("features of '" + id + "' have " + std::to_string(t->cells) +
                      " cells but grid.dims gives " + std::to_string(cells) + "; rerun extract");
  return {id, std::move(t), 0};
}

std::vector<SequenceFeatures> loadSplitFeatures(const RunConfig& c) {
  if (c.split.trainIds.empty() || c.split.testIds.empty())
    throw UsageError("split.train and split.test must both name sequences");
  std::vector<SequenceFeatures> out;
  for (const auto* ids : {&c.split.trainIds, &c.split.testIds})
    for (const auto& id : *ids) out.push_back(loadFeatures(c, id));
  return out;
}

void writeGraphCurve(OutputSet& outputs, const fs::path& path, const TrainResult& r) {
  fs::create_directories(path.parent_path());
  writeLossCsv(outputs.stage(path), r.curve);
}

std::function<void(const EpochLog&)> epochLogger(const std::string& label) {
  return [label](const EpochLog& e) {
    spdlog::info("{} epoch {}: train_mse {:.6g} val_mse {:.6g}", label, e.epoch, e.trainMse,
                 e.valMse);
  };
}

bool isLearnedBaseline(const std::string& m) { return m == "m-mlp" || m == "m-lstm"; }

std::vector<std::string> methodsNeedingCheckpoints(const RunConfig& c) {
  std::vector<std::string> out;
  for (const auto& m : c.methods)
    if (m == kGraphModelKind || isLearnedBaseline(m)) out.push_back(m);
  return out;
}

/// Poses, grids and frames needed to turn predicted poses into features.
class PoseContext {
 public:
  explicit PoseContext(const RunConfig& c) : config_(c) {}

  const std::vector<Pose6DoF>& poses(const std::string& id) {
    auto it = poses_.find(id);
    if (it == poses_.end())
      it = poses_.emplace(id, loadPoses(findSource(config_, id), config_.angleUnit)).first;
    return it->second;
  }

  const CellGrid& grid(const std::string& id) {
    auto it = grids_.find(id);
    if (it == grids_.end()) it = grids_.emplace(id, loadGrid(config_, id)).first;
    return it->second;
  }

  const PointCloudFrame& frame(const std::string& id, std::size_t index) {
    const auto& src = findSource(config_, id);
    const std::string video = src.frames.lexically_normal().string();
    auto& files = files_[video];
    if (files.empty()) files = listFrames(src.frames);
    auto& slot = frames_[video];
    if (!slot || slot->frameIndex != index) {
      if (index >= files.size())
        throw ArgumentError("frame " + std::to_string(index) + " is beyond the video of '" + id +
                            "'");
      slot = std::make_unique<PointCloudFrame>(loadFrame(files[index], index, config_.sourceScale));
    }
    return *slot;
  }

 private:
  const RunConfig& config_;
  std::map<std::string, std::vector<Pose6DoF>> poses_;
  std::map<std::string, CellGrid> grids_;
  std::map<std::string, std::vector<fs::path>> files_;
  std::map<std::string, std::unique_ptr<PointCloudFrame>> frames_;
};

/// Owns whatever a method needs to predict a window.
struct MethodPredictor {
  std::unique_ptr<GraphGruModel> graph;
  std::unique_ptr<MlpBaseline> mlp;
  std::unique_ptr<LstmBaseline> lstm;
  WindowPredictor predict;
};

MethodPredictor makePredictor(const RunConfig& c, const std::string& method, int horizon,
                              Target target, PoseContext& ctx) {
  MethodPredictor mp;
  const FeatureOptions options = c.featureOptions();
  auto poseFn = [&ctx, options, target](
                    const WindowedSample& w,
                    const std::function<Pose6DoF(std::span<const Pose6DoF>, std::size_t)>& fn) {
    const auto& poses = ctx.poses(w.source);
    if (w.sourceHistoryEnd() > poses.size())
      throw ArgumentError("trajectory of '" + w.source + "' is shorter than its features");
    const Pose6DoF pose = fn(poses, w.sourceHistoryEnd());
    const auto f =
        poseToFeatures(pose, ctx.frame(w.source, w.sourceTargetFrame()), ctx.grid(w.source), options);
    return target == Target::Visibility ? f.visibility : f.viewport;
  };

  if (method == kGraphModelKind) {
    mp.graph = std::make_unique<GraphGruModel>(
        GraphGruModel::fromCheckpoint(nn::loadCheckpoint(checkpointPath(c, method, horizon, target))));
    const auto& mc = mp.graph->config();
    if (mc.horizon != horizon || mc.target != target || mc.history != c.history)
      throw ConfigError("checkpoint " + checkpointPath(c, method, horizon, target).string() +
                        " does not match the configured history, horizon or target");
    const GraphGruModel* model = mp.graph.get();
    mp.predict = [model](const WindowedSample& w) { return model->predictWindow(w); };
  } else if (method == "lr" || method == "tlr") {
    const bool truncated = method == "tlr";
    const int history = truncated ? c.tlrHistory : c.lrHistory;
    mp.predict = [poseFn, truncated, history, horizon](const WindowedSample& w) {
      return poseFn(w, [=](std::span<const Pose6DoF> poses, std::size_t end) {
        const auto window = poseWindowEndingAt(poses, end, history);
        return truncated ? tlrPredict(window, horizon) : lrPredict(window, horizon);
      });
    };
  } else if (method == "m-mlp") {
    mp.mlp = std::make_unique<MlpBaseline>(
        MlpBaseline::fromCheckpoint(nn::loadCheckpoint(checkpointPath(c, method, horizon, target))));
    const MlpBaseline* model = mp.mlp.get();
    mp.predict = [poseFn, model](const WindowedSample& w) {
      return poseFn(w, [=](std::span<const Pose6DoF> poses, std::size_t end) {
        return model->predict(poseWindowEndingAt(poses, end, model->config().history));
      });
    };
  } else if (method == "m-lstm") {
    mp.lstm = std::make_unique<LstmBaseline>(
        LstmBaseline::fromCheckpoint(nn::loadCheckpoint(checkpointPath(c, method, horizon, target))));
    const LstmBaseline* model = mp.lstm.get();
    mp.predict = [poseFn, model](const WindowedSample& w) {
      return poseFn(w, [=](std::span<const Pose6DoF> poses, std::size_t end) {
        return model->predict(poseWindowEndingAt(poses, end, model->config().history));
      });
    };
  } else {
    throw UsageError("unknown method '" + method + "'");
  }
  return mp;
}

void requireCheckpoints(const RunConfig& c, const std::vector<std::string>& methods) {
  for (int h : c.horizons)
    for (Target t : c.targets)
      for (const auto& m : methods) {
        if (m != kGraphModelKind && !isLearnedBaseline(m)) continue;
        const auto path = checkpointPath(c, m, h, t);
        if (!fs::is_regular_file(path))
          throw MissingArtifactError("missing checkpoint for horizon " + std::to_string(h) +
                                     " (" + m + ", " + toString(t) + "): " + path.string() +
                                     "; run train first");
      }
}

}  // namespace

RunConfig loadConfig(const fs::path& path, const Overrides& o) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config " + path.string() + " must hold a JSON object");
  if (o.horizon) j["eval"]["horizons"] = {*o.horizon};
  if (o.target) j["eval"]["targets"] = {*o.target};
  if (o.angleUnit) j["angle_unit"] = *o.angleUnit;
  if (o.seed) j["seed"] = *o.seed;
  return RunConfig::fromJson(j, path.parent_path());
}

OutputSet::~OutputSet() {
  if (committed_) return;
  std::error_code ec;
  for (const auto& p : staged_) fs::remove(p, ec);
}

fs::path OutputSet::stage(const fs::path& target) {
  if (committed_) throw StateError("output set already committed");
  fs::path tmp = target;
  tmp += ".partial";
  targets_.push_back(target);
  staged_.push_back(tmp);
  return tmp;
}

void OutputSet::commit() {
  for (std::size_t i = 0; i < staged_.size(); ++i) fs::rename(staged_[i], targets_[i]);
  committed_ = true;
}

fs::path featurePath(const RunConfig& c, const std::string& id) {
  return c.featuresDir / (id + ".fvt");
}

fs::path gridPath(const RunConfig& c, const std::string& id) {
  return c.featuresDir / (id + ".grid.json");
}

fs::path checkpointPath(const RunConfig& c, const std::string& method, int horizon, Target target) {
  const std::string name = method == kGraphModelKind
                               ? method + "-" + toString(target) + "-h" + std::to_string(horizon)
                               : method + "-h" + std::to_string(horizon);
  return c.outputDir / "checkpoints" / (name + ".ckpt");
}

void runSynth(const SynthArgs& args) {
  std::ifstream in(args.spec);
  if (!in) throw UsageError("cannot open synth spec " + args.spec.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("synth spec is not valid JSON: " + std::string(e.what()));
  }
  const SynthSpec spec = SynthSpec::fromJson(j);
  const SynthScene scene = synthScene(spec);

  OutputSet outputs;
  const fs::path frameDir = args.out / "frames";
  fs::create_directories(frameDir);
  for (std::size_t i = 0; i < scene.sequence.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.ply", i);
    writePly(outputs.stage(frameDir / name), scene.sequence.frames[i]);
  }
  writeTrajectoryCsv(outputs.stage(args.out / "trajectory.csv"), scene.trajectory, args.angleUnit);
  {
    auto out = openOut(outputs.stage(args.out / "sequence.json"));
    out << json{{"id", args.id}, {"frames", "frames"}, {"trajectory", "trajectory.csv"}}.dump(2)
        << '\n';
  }
  outputs.commit();
  spdlog::info("synth: wrote {} frames of '{}' to {}", scene.sequence.frames.size(),
               spec.generator, args.out.string());
}

void runExtract(const RunConfig& c) {
  if (c.sequences.empty()) throw UsageError("paths.sequences is empty; nothing to extract");
  const FeatureOptions options = c.featureOptions();

  std::map<std::string, std::vector<const SequenceSource*>> byVideo;
  for (const auto& s : c.sequences) byVideo[s.frames.lexically_normal().string()].push_back(&s);

  OutputSet outputs;
  fs::create_directories(c.featuresDir);
  const auto start = std::chrono::steady_clock::now();
  std::size_t totalFrames = 0;
  for (const auto& [video, users] : byVideo) {
    const auto files = listFrames(users.front()->frames);
    constexpr double inf = std::numeric_limits<double>::infinity();
    Vec3 lo{inf, inf, inf}, hi{-inf, -inf, -inf};
    bool any = false;
    for (std::size_t i = 0; i < files.size(); ++i)
      for (const auto& p : loadFrame(files[i], i, c.sourceScale).positions) {
        any = true;
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], p[a]);
          hi[a] = std::max(hi[a], p[a]);
        }
      }
    if (!any) throw ArgumentError("every frame of " + video + " is empty");
    const CellGrid grid = gridFromBounds(lo, hi, c.grid);

    std::vector<std::vector<Pose6DoF>> poses;
    std::vector<std::size_t> usable;
    for (const auto* u : users) {
      poses.push_back(loadPoses(*u, c.angleUnit));
      usable.push_back(std::min(files.size(), poses.back().size()));
      if (poses.back().size() != files.size())
        spdlog::warn("extract: '{}' has {} poses for {} frames; using the first {}", u->id,
                     poses.back().size(), files.size(), usable.back());
      if (usable.back() == 0) throw ArgumentError("extract: '" + u->id + "' has no poses");
    }
    const std::size_t needed = *std::max_element(usable.begin(), usable.end());

    std::vector<std::vector<CellFeatureFrame>> results(users.size());
    const auto videoStart = std::chrono::steady_clock::now();
    for (std::size_t begin = 0; begin < needed; begin += kExtractChunk) {
      const std::size_t end = std::min(needed, begin + kExtractChunk);
      std::vector<PointCloudFrame> chunk;
      for (std::size_t i = begin; i < end; ++i) chunk.push_back(loadFrame(files[i], i, c.sourceScale));
      for (std::size_t u = 0; u < users.size(); ++u) {
        if (begin >= usable[u]) continue;
        const std::size_t n = std::min(end, usable[u]) - begin;
        auto part = computeSequenceFeatures(
            std::span<const PointCloudFrame>(chunk.data(), n),
            std::span<const Pose6DoF>(poses[u].data() + begin, n), grid, options);
        std::move(part.begin(), part.end(), std::back_inserter(results[u]));
      }
      spdlog::info("extract: {} frames {}/{}", video, end, needed);
    }
    for (std::size_t u = 0; u < users.size(); ++u) {
      writeFvt(outputs.stage(featurePath(c, users[u]->id)), toFeatureTensor(results[u]));
      auto out = openOut(outputs.stage(gridPath(c, users[u]->id)));
      out << gridJson(grid, usable[u]).dump(2) << '\n';
      totalFrames += usable[u];
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - videoStart).count();
    std::size_t videoFrames = 0;
    for (auto n : usable) videoFrames += n;
    spdlog::info("extract: {} done, {} user-frames in {:.2f} s ({:.2f} frames/s)", video,
                 videoFrames, secs, secs > 0 ? videoFrames / secs : 0.0);
  }
  outputs.commit();
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  spdlog::info("extract: {} sequences, {} frames in {:.2f} s ({:.2f} frames/s)", c.sequences.size(),
               totalFrames, secs, secs > 0 ? totalFrames / secs : 0.0);
}

void runTrain(const RunConfig& c) {
  nn::setPrecision(c.precision);
  const auto sequences = loadSplitFeatures(c);
  std::vector<SequenceFeatures> trainSeqs;
  for (const auto& s : sequences)
    if (std::find(c.split.trainIds.begin(), c.split.trainIds.end(), s.id) != c.split.trainIds.end())
      trainSeqs.push_back(s);
  const Standardizer standardizer = fitStandardizer(trainSeqs);

  OutputSet outputs;
  fs::create_directories(c.outputDir / "checkpoints");
  const bool wantGraph =
      std::find(c.methods.begin(), c.methods.end(), kGraphModelKind) != c.methods.end();

  for (int h : c.horizons) {
    if (wantGraph) {
      const auto split = splitWindows(sequences, c.split, c.history, h, c.trainStride, c.evalStride);
      if (split.train.empty())
        throw ArgumentError("train: no training windows at horizon " + std::to_string(h));
      for (Target t : c.targets) {
        GraphGruModel model(c.modelConfig(h, t));
        model.standardizer() = standardizer;
        const std::string label = std::string(kGraphModelKind) + "-" + toString(t) + "-h" +
                                  std::to_string(h);
        spdlog::info("train: {} on {} windows ({} validation)", label, split.train.size(),
                     split.validation.size());
        const auto result = train(model, split.train, split.validation, c.train, epochLogger(label));
        nn::saveCheckpoint(outputs.stage(checkpointPath(c, kGraphModelKind, h, t)),
                           model.toCheckpoint());
        writeGraphCurve(outputs, c.outputDir / "curves" / (label + ".csv"), result);
      }
    }

    std::vector<PoseSample> trainSamples, valSamples;
    bool samplesReady = false;
    for (const auto& method : c.methods) {
      if (!isLearnedBaseline(method)) continue;
      if (!samplesReady) {
        for (const auto& s : sequences) {
          const auto poses = loadPoses(findSource(c, s.id), c.angleUnit);
          const std::size_t frames = std::min(poses.size(), s.features->frames);
          std::span<const Pose6DoF> all(poses.data(), frames);
          const bool isTrain = std::find(c.split.trainIds.begin(), c.split.trainIds.end(),
                                         s.id) != c.split.trainIds.end();
          if (isTrain) {
            auto part = makePoseSamples(all, c.baselineHistory, h, c.trainStride);
            std::move(part.begin(), part.end(), std::back_inserter(trainSamples));
          } else {
            const auto cut = static_cast<std::size_t>(s.features->frames * c.split.testFraction);
            if (cut < frames) {
              auto part = makePoseSamples(all.subspan(cut), c.baselineHistory, h, c.evalStride);
              std::move(part.begin(), part.end(), std::back_inserter(valSamples));
            }
          }
        }
        if (trainSamples.empty())
          throw ArgumentError("train: no baseline samples at horizon " + std::to_string(h));
        samplesReady = true;
      }
      const LearnedBaselineConfig bc{c.baselineHistory, h, c.baselineHidden, c.seed};
      const std::string label = method + "-h" + std::to_string(h);
      spdlog::info("train: {} on {} samples ({} validation)", label, trainSamples.size(),
                   valSamples.size());
      TrainResult result;
      nn::Checkpoint ckpt;
      if (method == "m-mlp") {
        MlpBaseline model(bc);
        result = trainBaseline(model, trainSamples, valSamples, c.train, epochLogger(label));
        ckpt = model.toCheckpoint();
      } else {
        LstmBaseline model(bc);
        result = trainBaseline(model, trainSamples, valSamples, c.train, epochLogger(label));
        ckpt = model.toCheckpoint();
      }
      nn::saveCheckpoint(outputs.stage(checkpointPath(c, method, h, Target::Visibility)), ckpt);
      writeGraphCurve(outputs, c.outputDir / "curves" / (label + ".csv"), result);
    }
  }
  outputs.commit();
}

void runPredict(const RunConfig& c, const std::string& method) {
  if (method != kGraphModelKind && method != "lr" && method != "tlr" && !isLearnedBaseline(method))
    throw UsageError("unknown method '" + method + "'");
  requireCheckpoints(c, {method});
  const auto sequences = loadSplitFeatures(c);
  PoseContext ctx(c);
  OutputSet outputs;
  fs::create_directories(c.outputDir / "predictions");
  for (int h : c.horizons) {
    const auto split = splitWindows(sequences, c.split, c.history, h, c.trainStride, c.evalStride);
    if (split.test.empty())
      throw ArgumentError("predict: no test windows at horizon " + std::to_string(h));
    for (Target t : c.targets) {
      auto predictor = makePredictor(c, method, h, t, ctx);
      const auto path = c.outputDir / "predictions" /
                        (method + "-" + toString(t) + "-h" + std::to_string(h) + ".csv");
      auto out = openOut(outputs.stage(path));
      out << "source,start,target_frame";
      for (std::size_t k = 0; k < split.test.front().cells(); ++k) out << ",cell_" << k;
      out << '\n';
      for (const auto& w : split.test) {
        out << w.source << ',' << w.frameOffset + w.start << ',' << w.sourceTargetFrame();
        for (double v : predictor.predict(w)) out << ',' << v;
        out << '\n';
      }
      spdlog::info("predict: {} windows -> {}", split.test.size(), path.string());
    }
  }
  outputs.commit();
}

void runEvaluate(const RunConfig& c) {
  requireCheckpoints(c, methodsNeedingCheckpoints(c));
  const auto sequences = loadSplitFeatures(c);
  PoseContext ctx(c);
  EvalReport report;
  report.config = c.effective;
  for (int h : c.horizons) {
    const auto split = splitWindows(sequences, c.split, c.history, h, c.trainStride, c.evalStride);
    for (Target t : c.targets)
      for (const auto& m : c.methods) {
        auto predictor = makePredictor(c, m, h, t, ctx);
        report.rows.push_back(evaluateWindows(m, t, h, c.fps, split.test, predictor.predict));
        const auto& r = report.rows.back();
        spdlog::info("evaluate: {} {} h{} ({} ms): mse {:.6g} r2 {:.4f} over {} windows", m,
                     toString(t), h, r.horizonMs, r.mse, r.r2, r.windows);
      }
  }
  OutputSet outputs;
  fs::create_directories(c.outputDir);
  writeReportCsv(outputs.stage(c.outputDir / "report.csv"), report);
  writeReportJson(outputs.stage(c.outputDir / "report.json"), report);
  outputs.commit();
}

void runCorrelate(const RunConfig& c) {
  if (c.sequences.empty()) throw UsageError("paths.sequences is empty; nothing to correlate");
  const std::string id = c.correlateSequence.empty() ? c.sequences.front().id : c.correlateSequence;
  findSource(c, id);
  const auto seq = loadFeatures(c, id);
  const std::size_t channel =
      std::find(kFeatureChannels.begin(), kFeatureChannels.end(), c.correlateChannel) -
      kFeatureChannels.begin();
  std::vector<std::uint32_t> cells(seq.features->cells);
  for (std::size_t k = 0; k < cells.size(); ++k) cells[k] = static_cast<std::uint32_t>(k);
  const auto corr = correlationAnalysis(*seq.features, channel, cells);
  const auto decay =
      correlationDecay(*seq.features, channel, c.grid, c.correlateAxis, c.correlateMaxDistance);

  OutputSet outputs;
  const fs::path dir = c.outputDir / "correlation";
  fs::create_directories(dir);
  const std::string stem = id + "-" + c.correlateChannel;
  {
    auto out = openOut(outputs.stage(dir / (stem + ".csv")));
    out << "cell";
    for (auto k : corr.cells) out << ",cell_" << k;
    out << '\n';
    for (std::size_t i = 0; i < corr.cells.size(); ++i) {
      out << corr.cells[i];
      for (std::size_t j = 0; j < corr.cells.size(); ++j) {
        out << ',';
        if (!corr.degenerate[i] && !corr.degenerate[j]) out << corr.at(i, j);
      }
      out << '\n';
    }
  }
  {
    const char axis = "xyz"[c.correlateAxis];
    auto out = openOut(outputs.stage(dir / (stem + "-decay-" + axis + ".csv")));
    out << "distance,mean_correlation,pairs\n";
    for (const auto& p : decay) out << p.distance << ',' << p.meanCorrelation << ',' << p.pairs << '\n';
  }
  outputs.commit();
  spdlog::info("correlate: {} cells of '{}' channel {} -> {}", cells.size(), id,
               c.correlateChannel, dir.string());
}

json runBench(const RunConfig& c) {
  SynthSpec spec;
  spec.generator = "orbiting-camera";
  spec.seed = c.seed;
  spec.frames = c.benchFrames;
  spec.points = c.benchPoints;
  spec.orbitPeriod = std::max(c.benchFrames, 2);
  spec.quantize10bit = true;
  const auto scene = synthScene(spec);

  std::vector<PointCloudFrame> frames;
  for (const auto& f : scene.sequence.frames) frames.push_back(toWorldMeters(f, kDefaultSourceScale));
  const CellGrid grid = buildGrid(std::span<const PointCloudFrame>(frames), c.grid);
  FeatureOptions options = c.featureOptions();
  options.voxelSize = c.downsample * kDefaultSourceScale;

  std::size_t visible = 0, downsampled = 0;
  for (const auto& f : frames) downsampled += voxelDownsample(f, options.voxelSize).frame.size();
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < frames.size(); ++i)
    visible += computeFrameFeatures(frames[i], grid, scene.trajectory[i].pose, options).totalVisible;
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double fps = secs > 0.0 ? frames.size() / secs : 0.0;
  return {{"points", c.benchPoints},
          {"downsample", c.downsample},
          {"downsampled_points", downsampled / frames.size()},
          {"frames", frames.size()},
          {"seconds", secs},
          {"fps", fps},
          {"reference_fps", 45.0},
          {"target_fps", 30.0},
          {"meets_target", fps >= 30.0},
          {"mean_visible_points", visible / frames.size()},
          {"threads", kernels::threadCount()}};
}

int exitCodeFor(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const MissingArtifactError*>(&e))
    return 2;
  return 1;
}

std::string errorLine(const std::exception& e) {
  std::string kind = "runtime";
  if (dynamic_cast<const UsageError*>(&e)) kind = "usage";
  else if (dynamic_cast<const ConfigError*>(&e)) kind = "config";
  else if (dynamic_cast<const MissingArtifactError*>(&e)) kind = "missing-artifact";
  else if (dynamic_cast<const IoError*>(&e)) kind = "io";
  else if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const SchemaError*>(&e)) kind = "input";
  return json{{"error", kind}, {"message", e.what()}}.dump(-1, ' ', false,
                                                          json::error_handler_t::replace);
}

}  // namespace cellvis::app
