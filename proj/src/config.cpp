#include "cellvis/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cellvis/errors.hpp"
#include "cellvis/eval.hpp"

namespace cellvis {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const ordered_json& defaultsImpl() {
  static const ordered_json d = [] {
    ordered_json j;
    j["seed"] = 0;
    j["fps"] = 30.0;
    j["angle_unit"] = "degrees";
    j["source_scale"] = kDefaultSourceScale;
    j["paths"] = {{"output_dir", "out"}, {"features_dir", ""}, {"sequences", json::array()}};
    j["grid"] = {{"dims", {5, 6, 8}}, {"connectivity", 6}};
    j["intrinsics"] = {{"fx", 525.0},    {"fy", 525.0},   {"cx", 960.0},    {"cy", 540.0},
                       {"width", 1920},  {"height", 1080}, {"d_near", 0.05}, {"d_far", 50.0}};
    j["hpr"] = {{"gamma", 1.0}};
    j["features"] = {{"downsample", 8.0}, {"samples_per_cell", 64}};
    j["model"] = {{"hidden_dim", 128},
                  {"heads", 4},
                  {"graph_layers", 1},
                  {"history", 90},
                  {"attention", "softmax-scaled"}};
    j["train"] = {{"epochs", 30},    {"batch_size", 32}, {"patience", 5},
                  {"lr", 3e-4},      {"beta1", 0.9},     {"beta2", 0.999},
                  {"eps", 1e-8},     {"stride", 1},      {"precision", "float64"}};
    j["eval"] = {{"horizons", {10, 30, 60, 150}},
                 {"targets", {"visibility", "viewport"}},
                 {"methods", {"graph-gru", "lr", "tlr", "m-mlp", "m-lstm"}},
                 {"stride", 10}};
    j["split"] = {{"train", json::array()}, {"test", json::array()}, {"test_fraction", 0.5}};
    j["baselines"] = {{"lr_history", 30}, {"tlr_history", 90}, {"history", 90}, {"hidden", 60}};
    j["correlate"] = {{"sequence", ""}, {"channel", "v"}, {"axis", "x"}, {"max_distance", 4}};
    j["bench"] = {{"points", 100000}, {"frames", 30}};
    return j;
  }();
  return d;
}

const std::map<std::string, std::string>& keyDocs() {
  static const std::map<std::string, std::string> docs = {
      {"seed", "seed for model init, shuffling and synthetic data"},
      {"fps", "frame rate used to convert horizons to milliseconds"},
      {"angle_unit", "trajectory CSV angle unit: degrees or radians"},
      {"source_scale", "meters per PLY coordinate unit (1 for metric data)"},
      {"paths.output_dir", "root for checkpoints, curves, predictions and reports"},
      {"paths.features_dir", "FVT1 cache; empty means <output_dir>/features"},
      {"paths.sequences", "list of {id, frames (PLY directory), trajectory (CSV)}"},
      {"grid.dims", "cells along x, y (vertical), z"},
      {"grid.connectivity", "cell graph neighborhood: 6 or 26"},
      {"intrinsics.fx", "focal length x, pixels"},
      {"intrinsics.fy", "focal length y, pixels"},
      {"intrinsics.cx", "principal point x, pixels"},
      {"intrinsics.cy", "principal point y, pixels"},
      {"intrinsics.width", "image width, pixels"},
      {"intrinsics.height", "image height, pixels"},
      {"intrinsics.d_near", "near clipping depth, meters"},
      {"intrinsics.d_far", "far clipping depth, meters"},
      {"hpr.gamma", "flip radius exponent: R = 10^gamma * max distance"},
      {"features.downsample", "voxel edge before visibility, in PLY units"},
      {"features.samples_per_cell", "lattice samples per cell for the viewport ratio (a cube)"},
      {"model.hidden_dim", "hidden feature width"},
      {"model.heads", "attention heads (must divide hidden_dim)"},
      {"model.graph_layers", "stacked attention layers per step"},
      {"model.history", "history length in frames"},
      {"model.attention", "softmax-scaled or raw-ratio"},
      {"train.epochs", "maximum epochs"},
      {"train.batch_size", "windows per Adam step"},
      {"train.patience", "epochs without validation improvement before stopping"},
      {"train.lr", "Adam learning rate"},
      {"train.beta1", "Adam first-moment decay"},
      {"train.beta2", "Adam second-moment decay"},
      {"train.eps", "Adam epsilon"},
      {"train.stride", "window stride on training sequences"},
      {"train.precision", "float64 or float32 arithmetic"},
      {"eval.horizons", "prediction horizons in frames"},
      {"eval.targets", "visibility and/or viewport"},
      {"eval.methods", "graph-gru, lr, tlr, m-mlp, m-lstm"},
      {"eval.stride", "window stride on test and validation sequences"},
      {"split.train", "sequence ids used whole for training"},
      {"split.test", "sequence ids cut in time into test then validation"},
      {"split.test_fraction", "leading fraction of each test sequence used for testing"},
      {"baselines.lr_history", "frames fitted by linear regression"},
      {"baselines.tlr_history", "frames scanned by truncated linear regression"},
      {"baselines.history", "input frames of the learned baselines"},
      {"baselines.hidden", "hidden width of the learned baselines"},
      {"correlate.sequence", "sequence id to analyze; empty means the first"},
      {"correlate.channel", "feature channel name, e.g. v or f"},
      {"correlate.axis", "axis for the distance decay summary: x, y or z"},
      {"correlate.max_distance", "largest cell offset in the decay summary"},
      {"bench.points", "points in the synthetic benchmark frame"},
      {"bench.frames", "frames timed by the benchmark"},
  };
  return docs;
}

void mergeChecked(json& dst, const json& src, const ordered_json& schema, const std::string& path) {
  if (!src.is_object()) throw ConfigError("config: '" + (path.empty() ? "<root>" : path) +
                                          "' must be an object");
  for (const auto& [key, value] : src.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!schema.contains(key)) throw ConfigError("config: unknown key '" + full + "'");
    const auto& def = schema[key];
    if (def.is_object()) {
      mergeChecked(dst[key], value, def, full);
      continue;
    }
    const bool ok = (def.is_number() && value.is_number()) ||
                    (def.is_string() && value.is_string()) ||
                    (def.is_boolean() && value.is_boolean()) ||
                    (def.is_array() && value.is_array());
    if (!ok) throw ConfigError("config: '" + full + "' has the wrong type");
    dst[key] = value;
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: '") + section + "." + key + "' has an invalid value");
  }
}

int positive(int v, const std::string& key) {
  if (v <= 0) throw ConfigError("config: '" + key + "' must be positive");
  return v;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void describe(std::ostringstream& out, const ordered_json& node, const std::string& path) {
  for (const auto& [key, value] : node.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (value.is_object()) {
      describe(out, value, full);
      continue;
    }
    out << "  " << full << " = " << value.dump();
    const auto it = keyDocs().find(full);
    if (it != keyDocs().end()) out << "\n      " << it->second;
    out << '\n';
  }
}

}  // namespace

const ordered_json& configDefaults() { return defaultsImpl(); }

std::string configReference() {
  std::ostringstream out;
  describe(out, configDefaults(), "");
  return out.str();
}

RunConfig RunConfig::fromJson(const json& user, const std::filesystem::path& baseDir) {
  json j = json::parse(configDefaults().dump());
  mergeChecked(j, user, configDefaults(), "");

  RunConfig c;
  c.effective = j;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw ConfigError("config: 'seed' must be a non-negative integer");
  }
  c.fps = j.at("fps").get<double>();
  if (!(c.fps > 0.0)) throw ConfigError("config: 'fps' must be positive");
  c.angleUnit = parseAngleUnit(j.at("angle_unit").get<std::string>());
  c.sourceScale = j.at("source_scale").get<double>();
  if (!(c.sourceScale > 0.0)) throw ConfigError("config: 'source_scale' must be positive");

  const auto& paths = j.at("paths");
  c.outputDir = resolve(baseDir, paths.at("output_dir").get<std::string>());
  const auto fdir = paths.at("features_dir").get<std::string>();
  c.featuresDir = fdir.empty() ? c.outputDir / "features" : resolve(baseDir, fdir);
  std::set<std::string> ids;
  for (const auto& s : paths.at("sequences")) {
    if (!s.is_object()) throw ConfigError("config: 'paths.sequences' entries must be objects");
    for (const auto& [key, value] : s.items()) {
      if (key != "id" && key != "frames" && key != "trajectory")
        throw ConfigError("config: unknown key 'paths.sequences[]." + key + "'");
      if (!value.is_string())
        throw ConfigError("config: 'paths.sequences[]." + key + "' must be a string");
    }
    for (const char* key : {"id", "frames", "trajectory"})
      if (!s.contains(key))
        throw ConfigError(std::string("config: sequence entry lacks '") + key + "'");
    SequenceSource src{s.at("id").get<std::string>(),
                       resolve(baseDir, s.at("frames").get<std::string>()),
                       resolve(baseDir, s.at("trajectory").get<std::string>())};
    if (src.id.empty()) throw ConfigError("config: sequence id must not be empty");
    if (!ids.insert(src.id).second)
      throw ConfigError("config: duplicate sequence id '" + src.id + "'");
    c.sequences.push_back(std::move(src));
  }

  const auto dims = get<std::vector<int>>(j, "grid", "dims");
  if (dims.size() != 3) throw ConfigError("config: 'grid.dims' must have 3 entries");
  for (int a = 0; a < 3; ++a) c.grid[a] = positive(dims[a], "grid.dims");
  c.connectivity = get<int>(j, "grid", "connectivity");
  if (c.connectivity != 6 && c.connectivity != 26)
    throw ConfigError("config: 'grid.connectivity' must be 6 or 26");

  auto& in = c.intrinsics;
  in.fx = get<double>(j, "intrinsics", "fx");
  in.fy = get<double>(j, "intrinsics", "fy");
  in.cx = get<double>(j, "intrinsics", "cx");
  in.cy = get<double>(j, "intrinsics", "cy");
  in.width = positive(get<int>(j, "intrinsics", "width"), "intrinsics.width");
  in.height = positive(get<int>(j, "intrinsics", "height"), "intrinsics.height");
  in.dNear = get<double>(j, "intrinsics", "d_near");
  in.dFar = get<double>(j, "intrinsics", "d_far");
  if (!(in.fx > 0.0 && in.fy > 0.0)) throw ConfigError("config: focal lengths must be positive");
  if (!(in.dNear >= 0.0 && in.dFar > in.dNear))
    throw ConfigError("config: need 0 <= intrinsics.d_near < intrinsics.d_far");
  c.hpr.gamma = get<double>(j, "hpr", "gamma");

  c.downsample = get<double>(j, "features", "downsample");
  if (!(c.downsample > 0.0)) throw ConfigError("config: 'features.downsample' must be positive");
  c.samplesPerCell = positive(get<int>(j, "features", "samples_per_cell"), "features.samples_per_cell");
  int root = 1;
  while (root * root * root < c.samplesPerCell) ++root;
  if (root * root * root != c.samplesPerCell)
    throw ConfigError("config: 'features.samples_per_cell' must be a perfect cube");

  c.hiddenDim = get<int>(j, "model", "hidden_dim");
  c.heads = get<int>(j, "model", "heads");
  c.graphLayers = get<int>(j, "model", "graph_layers");
  c.history = get<int>(j, "model", "history");
  c.attention = parseAttentionMode(get<std::string>(j, "model", "attention"));

  c.train.epochs = positive(get<int>(j, "train", "epochs"), "train.epochs");
  c.train.batchSize = positive(get<int>(j, "train", "batch_size"), "train.batch_size");
  c.train.patience = positive(get<int>(j, "train", "patience"), "train.patience");
  c.train.adam.lr = get<double>(j, "train", "lr");
  c.train.adam.beta1 = get<double>(j, "train", "beta1");
  c.train.adam.beta2 = get<double>(j, "train", "beta2");
  c.train.adam.eps = get<double>(j, "train", "eps");
  c.train.seed = c.seed;
  c.trainStride = positive(get<int>(j, "train", "stride"), "train.stride");
  const auto prec = get<std::string>(j, "train", "precision");
  if (prec == "float64") c.precision = nn::Precision::Float64;
  else if (prec == "float32") c.precision = nn::Precision::Float32;
  else throw ConfigError("config: 'train.precision' must be float64 or float32");

  c.horizons = get<std::vector<int>>(j, "eval", "horizons");
  if (c.horizons.empty()) throw ConfigError("config: 'eval.horizons' must not be empty");
  for (int h : c.horizons) positive(h, "eval.horizons");
  for (const auto& t : get<std::vector<std::string>>(j, "eval", "targets"))
    c.targets.push_back(parseTarget(t));
  if (c.targets.empty()) throw ConfigError("config: 'eval.targets' must not be empty");
  c.methods = get<std::vector<std::string>>(j, "eval", "methods");
  for (const auto& m : c.methods)
    if (m != kGraphModelKind && m != "lr" && m != "tlr" && m != "m-mlp" && m != "m-lstm")
      throw ConfigError("config: unknown method '" + m + "' in 'eval.methods'");
  c.evalStride = positive(get<int>(j, "eval", "stride"), "eval.stride");

  c.split.trainIds = get<std::vector<std::string>>(j, "split", "train");
  c.split.testIds = get<std::vector<std::string>>(j, "split", "test");
  c.split.testFraction = get<double>(j, "split", "test_fraction");
  if (!(c.split.testFraction > 0.0 && c.split.testFraction < 1.0))
    throw ConfigError("config: 'split.test_fraction' must lie in (0, 1)");
  for (const auto* list : {&c.split.trainIds, &c.split.testIds})
    for (const auto& id : *list)
      if (!ids.count(id)) throw ConfigError("config: split names unknown sequence '" + id + "'");
  for (const auto& id : c.split.testIds)
    for (const auto& t : c.split.trainIds)
      if (id == t) throw ConfigError("config: sequence '" + id + "' is in both train and test");

  c.lrHistory = get<int>(j, "baselines", "lr_history");
  c.tlrHistory = get<int>(j, "baselines", "tlr_history");
  if (c.lrHistory < 2 || c.tlrHistory < 2)
    throw ConfigError("config: regression baselines need a history of at least 2");
  c.baselineHistory = positive(get<int>(j, "baselines", "history"), "baselines.history");
  c.baselineHidden = positive(get<int>(j, "baselines", "hidden"), "baselines.hidden");

  c.correlateSequence = get<std::string>(j, "correlate", "sequence");
  c.correlateChannel = get<std::string>(j, "correlate", "channel");
  if (std::find(kFeatureChannels.begin(), kFeatureChannels.end(), c.correlateChannel) ==
      kFeatureChannels.end())
    throw ConfigError("config: unknown channel '" + c.correlateChannel + "'");
  const auto axis = get<std::string>(j, "correlate", "axis");
  if (axis == "x") c.correlateAxis = 0;
  else if (axis == "y") c.correlateAxis = 1;
  else if (axis == "z") c.correlateAxis = 2;
  else throw ConfigError("config: 'correlate.axis' must be x, y or z");
  c.correlateMaxDistance =
      positive(get<int>(j, "correlate", "max_distance"), "correlate.max_distance");

  c.benchPoints = positive(get<int>(j, "bench", "points"), "bench.points");
  c.benchFrames = positive(get<int>(j, "bench", "frames"), "bench.frames");

  for (int h : c.horizons)
    for (Target t : c.targets) c.modelConfig(h, t).validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
  return fromJson(j, path.parent_path());
}

FeatureOptions RunConfig::featureOptions() const {
  FeatureOptions o;
  o.intrinsics = intrinsics;
  o.hpr = hpr;
  o.voxelSize = downsample * sourceScale;
  o.samplesPerCell = samplesPerCell;
  return o;
}

ModelConfig RunConfig::modelConfig(int horizon, Target target) const {
  ModelConfig m;
  m.hiddenDim = hiddenDim;
  m.heads = heads;
  m.graphLayers = graphLayers;
  m.history = history;
  m.horizon = horizon;
  m.target = target;
  m.attention = attention;
  m.connectivity = connectivity;
  m.grid = grid;
  m.seed = seed;
  return m;
}

std::string RunConfig::fingerprint() const { return configFingerprint(effective); }

}  // namespace cellvis
