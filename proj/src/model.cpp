#include "cellvis/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cellvis/errors.hpp"

namespace cellvis {

using nlohmann::json;
using nn::Tensor;

std::string toString(AttentionMode m) {
  return m == AttentionMode::SoftmaxScaled ? "softmax-scaled" : "raw-ratio";
}

AttentionMode parseAttentionMode(const std::string& text) {
  if (text == "softmax-scaled") return AttentionMode::SoftmaxScaled;
  if (text == "raw-ratio") return AttentionMode::RawRatio;
  throw ConfigError("unknown attention mode '" + text + "' (expected softmax-scaled or raw-ratio)");
}

void ModelConfig::validate() const {
  if (hiddenDim <= 0 || heads <= 0) throw ConfigError("model: hidden_dim and heads must be positive");
  if (hiddenDim % heads != 0)
    throw ConfigError("model: hidden_dim " + std::to_string(hiddenDim) +
                      " is not divisible by heads " + std::to_string(heads));
  if (graphLayers < 1) throw ConfigError("model: graph_layers must be at least 1");
  if (history < 1) throw ConfigError("model: history must be at least 1");
  if (horizon < 1) throw ConfigError("model: horizon must be at least 1");
  if (connectivity != 6 && connectivity != 26)
    throw ConfigError("model: connectivity must be 6 or 26");
  for (int d : grid)
    if (d <= 0) throw ConfigError("model: grid dims must be positive");
}

json ModelConfig::toJson() const {
  return {{"hidden_dim", hiddenDim},
          {"heads", heads},
          {"graph_layers", graphLayers},
          {"history", history},
          {"horizon", horizon},
          {"target", toString(target)},
          {"attention", toString(attention)},
          {"connectivity", connectivity},
          {"grid", grid},
          {"seed", seed}};
}

ModelConfig ModelConfig::fromJson(const json& j) {
  static const std::set<std::string> keys = {"hidden_dim", "heads",      "graph_layers", "history",
                                             "horizon",    "target",     "attention",    "connectivity",
                                             "grid",       "seed"};
  if (!j.is_object()) throw ConfigError("model: config must be an object");
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw ConfigError("model: unknown key '" + k + "'");
  ModelConfig c;
  try {
    c.hiddenDim = j.value("hidden_dim", c.hiddenDim);
    c.heads = j.value("heads", c.heads);
    c.graphLayers = j.value("graph_layers", c.graphLayers);
    c.history = j.value("history", c.history);
    c.horizon = j.value("horizon", c.horizon);
    if (j.contains("target")) c.target = parseTarget(j["target"].get<std::string>());
    if (j.contains("attention")) c.attention = parseAttentionMode(j["attention"].get<std::string>());
    c.connectivity = j.value("connectivity", c.connectivity);
    if (j.contains("grid")) c.grid = j["grid"].get<GridDims>();
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  c.validate();
  return c;
}

AttentionGraph attentionGraph(const GridGraph& graph, std::size_t copies) {
  AttentionGraph g;
  g.nodes = graph.nodeCount * copies;
  g.offsets.push_back(0);
  for (std::size_t c = 0; c < copies; ++c) {
    const auto base = static_cast<std::uint32_t>(c * graph.nodeCount);
    for (std::size_t i = 0; i < graph.nodeCount; ++i) {
      std::vector<std::uint32_t> nbrs = graph.adjacency[i];
      nbrs.push_back(static_cast<std::uint32_t>(i));
      std::sort(nbrs.begin(), nbrs.end());
      for (auto j : nbrs) {
        g.dst.push_back(base + static_cast<std::uint32_t>(i));
        g.src.push_back(base + j);
      }
      g.offsets.push_back(static_cast<std::uint32_t>(g.dst.size()));
    }
  }
  return g;
}

GraphAttentionLayer::GraphAttentionLayer(nn::ParameterSet& params, const std::string& prefix,
                                         std::size_t inDim, std::size_t outDim, std::size_t heads,
                                         std::mt19937_64& rng) {
  const std::size_t dh = outDim / heads;
  for (std::size_t c = 0; c < heads; ++c) {
    const std::string p = prefix + ".head" + std::to_string(c) + ".";
    Head h;
    h.wq = params.add(p + "wq", nn::glorot(inDim, dh, rng));
    h.bq = params.add(p + "bq", Tensor::zeros({dh}));
    h.wk = params.add(p + "wk", nn::glorot(inDim, dh, rng));
    h.bk = params.add(p + "bk", Tensor::zeros({dh}));
    h.wv = params.add(p + "wv", nn::glorot(inDim, dh, rng));
    h.bv = params.add(p + "bv", Tensor::zeros({dh}));
    this->heads.push_back(std::move(h));
  }
  wo = params.add(prefix + ".wo", nn::glorot(dh * heads, outDim, rng));
  bo = params.add(prefix + ".bo", Tensor::zeros({outDim}));
}

Tensor GraphAttentionLayer::forward(const Tensor& h, const AttentionGraph& graph,
                                    AttentionMode mode, std::vector<Tensor>* weights) const {
  if (h.dim() != 2 || h.rows() != graph.nodes)
    throw ShapeError("graph_attention: features " + nn::shapeString(h.shape()) + " for " +
                     std::to_string(graph.nodes) + " nodes");
  if (heads.empty() || h.cols() != heads[0].wq.rows())
    throw ShapeError("graph_attention: feature width " + std::to_string(h.cols()) +
                     " does not match weights " + nn::shapeString(heads.at(0).wq.shape()));
  std::vector<Tensor> outs;
  for (const auto& p : heads) {
    const Tensor q = nn::add(nn::matmul(h, p.wq), p.bq);
    const Tensor k = nn::add(nn::matmul(h, p.wk), p.bk);
    const Tensor v = nn::add(nn::matmul(h, p.wv), p.bv);
    Tensor scores = nn::rowSum(nn::mul(nn::gatherRows(q, graph.dst), nn::gatherRows(k, graph.src)));
    Tensor alpha;
    if (mode == AttentionMode::SoftmaxScaled) {
      scores = nn::scale(scores, 1.0 / std::sqrt(static_cast<double>(p.wq.cols())));
      alpha = nn::segmentSoftmax(scores, graph.offsets);
    } else {
      alpha = nn::segmentRatio(scores, graph.offsets, 1e-8);
    }
    if (weights) weights->push_back(alpha);
    outs.push_back(
        nn::scatterAddRows(nn::mulRows(nn::gatherRows(v, graph.src), alpha), graph.dst, graph.nodes));
  }
  const Tensor joined = outs.size() == 1 ? outs[0] : nn::concat(outs, 1);
  return nn::add(nn::matmul(joined, wo), bo);
}

GruCell::GruCell(nn::ParameterSet& params, const std::string& prefix, std::size_t inputDim,
                 std::size_t hiddenDim, std::mt19937_64& rng) {
  const std::string p = prefix + ".";
  wz = params.add(p + "wz", nn::glorot(inputDim, hiddenDim, rng));
  uz = params.add(p + "uz", nn::glorot(hiddenDim, hiddenDim, rng));
  bz = params.add(p + "bz", Tensor::zeros({hiddenDim}));
  wr = params.add(p + "wr", nn::glorot(inputDim, hiddenDim, rng));
  ur = params.add(p + "ur", nn::glorot(hiddenDim, hiddenDim, rng));
  br = params.add(p + "br", Tensor::zeros({hiddenDim}));
  wn = params.add(p + "wn", nn::glorot(inputDim, hiddenDim, rng));
  un = params.add(p + "un", nn::glorot(hiddenDim, hiddenDim, rng));
  bn = params.add(p + "bn", Tensor::zeros({hiddenDim}));
}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  if (x.dim() != 2 || h.dim() != 2 || x.rows() != h.rows() || x.cols() != wz.rows() ||
      h.cols() != uz.rows())
    throw ShapeError("gru_step: input " + nn::shapeString(x.shape()) + " and state " +
                     nn::shapeString(h.shape()) + " do not fit weights " +
                     nn::shapeString(wz.shape()));
  const Tensor z = nn::sigmoid(nn::add(nn::add(nn::matmul(x, wz), nn::matmul(h, uz)), bz));
  const Tensor r = nn::sigmoid(nn::add(nn::add(nn::matmul(x, wr), nn::matmul(h, ur)), br));
  const Tensor n =
      nn::tanh(nn::add(nn::add(nn::matmul(x, wn), nn::matmul(nn::mul(r, h), un)), bn));
  return nn::add(nn::mul(nn::oneMinus(z), h), nn::mul(z, n));
}

GraphGruModel::GraphGruModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  graph_ = buildGraph(config_.grid, config_.connectivity);
  std::mt19937_64 rng(config_.seed);
  const auto hid = static_cast<std::size_t>(config_.hiddenDim);
  const auto heads = static_cast<std::size_t>(config_.heads);
  auto makeLayers = [&](const std::string& dir, std::vector<GraphAttentionLayer>& layers) {
    for (int l = 0; l < config_.graphLayers; ++l) {
      const std::size_t in = l == 0 ? hid + kInputChannels : hid;
      layers.emplace_back(params_, dir + ".attn" + std::to_string(l), in, hid, heads, rng);
    }
  };
  makeLayers("fwd", attnF_);
  gruF_ = GruCell(params_, "fwd.gru", kInputChannels, hid, rng);
  makeLayers("rev", attnR_);
  gruR_ = GruCell(params_, "rev.gru", kInputChannels, hid, rng);
  w1_ = params_.add("head.w1", nn::glorot(2 * hid, hid, rng));
  b1_ = params_.add("head.b1", Tensor::zeros({hid}));
  w2_ = params_.add("head.w2", nn::glorot(hid, hid, rng));
  b2_ = params_.add("head.b2", Tensor::zeros({hid}));
  w3_ = params_.add("head.w3", nn::glorot(hid, 1, rng));
  b3_ = params_.add("head.b3", Tensor::zeros({1}));
}

const AttentionGraph& GraphGruModel::batchGraph(std::size_t copies) const {
  for (const auto& [n, g] : graphCache_)
    if (n == copies) return g;
  graphCache_.emplace_back(copies, attentionGraph(graph_, copies));
  return graphCache_.back().second;
}

Tensor GraphGruModel::graphUpdate(const std::vector<GraphAttentionLayer>& layers,
                                  const Tensor& state, const Tensor& input,
                                  const AttentionGraph& graph) const {
  Tensor h = nn::concat({state, input}, 1);
  for (const auto& layer : layers) h = layer.forward(h, graph, config_.attention);
  return h;
}

GraphGruModel::Rollout GraphGruModel::rollout(const std::vector<Tensor>& inputs,
                                              const AttentionGraph& graph) const {
  if (inputs.empty()) throw ArgumentError("rollout: history is empty");
  const std::size_t rows = graph.nodes;
  const auto hid = static_cast<std::size_t>(config_.hiddenDim);
  for (const auto& x : inputs)
    if (x.dim() != 2 || x.rows() != rows || x.cols() != kInputChannels)
      throw ShapeError("rollout: step input " + nn::shapeString(x.shape()) + ", expected (" +
                       std::to_string(rows) + ", " + std::to_string(kInputChannels) + ")");
  Rollout r;
  r.forward = Tensor::zeros({rows, hid});
  for (std::size_t t = 0; t < inputs.size(); ++t)
    r.forward = gruF_.step(inputs[t], graphUpdate(attnF_, r.forward, inputs[t], graph));
  r.backward = Tensor::zeros({rows, hid});
  for (std::size_t t = inputs.size(); t-- > 0;)
    r.backward = gruR_.step(inputs[t], graphUpdate(attnR_, r.backward, inputs[t], graph));
  return r;
}

Tensor GraphGruModel::head(const Rollout& r) const {
  const Tensor x = nn::concat({r.forward, r.backward}, 1);
  const Tensor a1 = nn::relu(nn::add(nn::matmul(x, w1_), b1_));
  const Tensor a2 = nn::relu(nn::add(nn::matmul(a1, w2_), b2_));
  return nn::sigmoid(nn::add(nn::matmul(a2, w3_), b3_));
}

Tensor GraphGruModel::predict(const std::vector<Tensor>& inputs, const AttentionGraph& graph,
                              std::span<const double> mask) const {
  if (mask.size() != graph.nodes)
    throw StateError("predict: target-frame occupancy has " + std::to_string(mask.size()) +
                     " entries for " + std::to_string(graph.nodes) + " cells");
  const Tensor z = head(rollout(inputs, graph));
  return nn::mul(z, Tensor::from({graph.nodes, 1}, {mask.begin(), mask.end()}));
}

std::vector<Tensor> GraphGruModel::batchInputs(std::span<const WindowedSample* const> windows) const {
  if (windows.empty()) throw ArgumentError("batch: no windows");
  const std::size_t h = windows[0]->history, n = cells();
  for (const auto* w : windows)
    if (w->history != h || w->cells() != n)
      throw ShapeError("batch: windows differ in history or cell count (model has " +
                       std::to_string(n) + " cells)");
  std::vector<Tensor> out;
  out.reserve(h);
  for (std::size_t t = 0; t < h; ++t) {
    std::vector<double> v(windows.size() * n * kInputChannels);
    std::size_t k = 0;
    for (const auto* w : windows)
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t ch = 0; ch < kInputChannels; ++ch)
          v[k++] = standardizer_.apply(ch, w->feature(t, c, ch));
    out.push_back(Tensor::from({windows.size() * n, kInputChannels}, std::move(v)));
  }
  return out;
}

std::vector<double> GraphGruModel::predictWindow(const WindowedSample& window) const {
  nn::NoGradGuard guard;
  const WindowedSample* ptr = &window;
  const auto inputs = batchInputs({&ptr, 1});
  const auto mask = window.mask();
  const Tensor y = predict(inputs, batchGraph(1), mask);
  return {y.values().begin(), y.values().end()};
}

nn::Checkpoint GraphGruModel::toCheckpoint() const {
  nn::Checkpoint c;
  c.kind = kGraphModelKind;
  c.metadata = json{{"config", config_.toJson()},
                    {"standardizer",
                     {{"mean", standardizer_.mean}, {"std", standardizer_.stddev}}}}
                   .dump();
  c.params = params_.clone();
  return c;
}

GraphGruModel GraphGruModel::fromCheckpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.kind != kGraphModelKind)
    throw StateError("checkpoint holds '" + ckpt.kind + "', expected " + kGraphModelKind);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
  GraphGruModel m(ModelConfig::fromJson(meta.at("config")));
  m.standardizer_.mean = meta.at("standardizer").at("mean").get<std::array<double, kInputChannels>>();
  m.standardizer_.stddev = meta.at("standardizer").at("std").get<std::array<double, kInputChannels>>();
  m.params_.assign(ckpt.params);
  return m;
}

namespace {

struct Batch {
  std::vector<Tensor> inputs;
  std::vector<double> mask;
  std::vector<double> target;
  std::size_t copies = 0;
};

Batch makeBatch(const GraphGruModel& model, std::span<const WindowedSample* const> windows) {
  Batch b;
  b.inputs = model.batchInputs(windows);
  b.copies = windows.size();
  for (const auto* w : windows) {
    const auto m = w->mask();
    const auto y = w->target(model.config().target);
    b.mask.insert(b.mask.end(), m.begin(), m.end());
    b.target.insert(b.target.end(), y.begin(), y.end());
  }
  return b;
}

double maskWeight(const std::vector<double>& mask) {
  return std::accumulate(mask.begin(), mask.end(), 0.0);
}

}  // namespace

double maskedLoss(const GraphGruModel& model, const std::vector<WindowedSample>& windows,
                  int batchSize) {
  if (windows.empty()) throw ArgumentError("masked_loss: no windows");
  nn::NoGradGuard guard;
  double total = 0.0, weight = 0.0;
  std::vector<const WindowedSample*> ptrs;
  for (std::size_t i = 0; i < windows.size(); i += batchSize) {
    ptrs.clear();
    for (std::size_t j = i; j < std::min(windows.size(), i + batchSize); ++j)
      ptrs.push_back(&windows[j]);
    const Batch b = makeBatch(model, ptrs);
    const double w = maskWeight(b.mask);
    if (w == 0.0) continue;
    const Tensor pred = model.predict(b.inputs, model.batchGraph(b.copies), b.mask);
    const Tensor loss =
        nn::mseLoss(pred, Tensor::from({b.target.size(), 1}, b.target), b.mask);
    total += loss.item() * w;
    weight += w;
  }
  return weight > 0.0 ? total / weight : 0.0;
}

TrainResult train(GraphGruModel& model, const std::vector<WindowedSample>& trainSet,
                  const std::vector<WindowedSample>& validation, const TrainOptions& options,
                  const std::function<void(const EpochLog&)>& onEpoch) {
  std::vector<const WindowedSample*> ptrs;
  auto batchLoss = [&](std::span<const std::size_t> ids) {
    ptrs.clear();
    for (auto i : ids) ptrs.push_back(&trainSet[i]);
    const Batch b = makeBatch(model, ptrs);
    const double w = maskWeight(b.mask);
    if (w == 0.0) return BatchLoss{};
    const Tensor pred = model.predict(b.inputs, model.batchGraph(b.copies), b.mask);
    return BatchLoss{nn::mseLoss(pred, Tensor::from({b.target.size(), 1}, b.target), b.mask), w};
  };
  std::function<double()> valLoss;
  if (!validation.empty())
    valLoss = [&] { return maskedLoss(model, validation, options.batchSize); };
  return runTraining(model.params(), trainSet.size(), batchLoss, valLoss, options, onEpoch);
}

}  // namespace cellvis
