#pragma once

// Graph-attention + bidirectional GRU predictor of per-cell visibility or
// viewport features.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellvis/cellgrid.hpp"
#include "cellvis/dataset.hpp"
#include "cellvis/tensor.hpp"
#include "cellvis/training.hpp"

namespace cellvis {

enum class AttentionMode { SoftmaxScaled, RawRatio };

std::string toString(AttentionMode m);
/// "softmax-scaled" or "raw-ratio"; ConfigError otherwise.
AttentionMode parseAttentionMode(const std::string& text);

struct ModelConfig {
  int hiddenDim = 128;
  int heads = 4;
  int graphLayers = 1;
  int history = 90;
  int horizon = 30;
  Target target = Target::Visibility;
  AttentionMode attention = AttentionMode::SoftmaxScaled;
  int connectivity = 6;
  GridDims grid = kDefaultGridDims;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
  nlohmann::json toJson() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static ModelConfig fromJson(const nlohmann::json& j);
};

/// Directed edge list grouped by destination, self loops included.
/// Neighbors of node i are src[offsets[i] .. offsets[i+1]).
struct AttentionGraph {
  std::size_t nodes = 0;
  std::vector<std::uint32_t> dst;
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> offsets;
};

/// `copies` disjoint copies of the grid graph, for batching windows.
AttentionGraph attentionGraph(const GridGraph& graph, std::size_t copies = 1);

/// One multi-head attention layer. Per head c: q = h W_q + b_q, k, v alike;
/// weights over N(i) from <q_i, k_j>; heads concatenated then projected.
class GraphAttentionLayer {
 public:
  GraphAttentionLayer() = default;
  GraphAttentionLayer(nn::ParameterSet& params, const std::string& prefix, std::size_t inDim,
                      std::size_t outDim, std::size_t heads, std::mt19937_64& rng);

  /// `weights`, when given, receives one (E,1) attention column per head.
  nn::Tensor forward(const nn::Tensor& h, const AttentionGraph& graph, AttentionMode mode,
                     std::vector<nn::Tensor>* weights = nullptr) const;

  struct Head {
    nn::Tensor wq, bq, wk, bk, wv, bv;
  };
  std::vector<Head> heads;
  nn::Tensor wo, bo;
};

/// Update gate z, reset gate r, candidate n = tanh(x W_n + (r * h) U_n + b_n);
/// next = (1 - z) * h + z * n. Rows are cells and are processed independently.
class GruCell {
 public:
  GruCell() = default;
  GruCell(nn::ParameterSet& params, const std::string& prefix, std::size_t inputDim,
          std::size_t hiddenDim, std::mt19937_64& rng);

  nn::Tensor step(const nn::Tensor& input, const nn::Tensor& hidden) const;

  nn::Tensor wz, uz, bz, wr, ur, br, wn, un, bn;
};

class GraphGruModel {
 public:
  explicit GraphGruModel(const ModelConfig& config);
  // Layers hold handles into params_, so copies would alias parameters.
  GraphGruModel(const GraphGruModel&) = delete;
  GraphGruModel& operator=(const GraphGruModel&) = delete;
  GraphGruModel(GraphGruModel&&) = default;
  GraphGruModel& operator=(GraphGruModel&&) = default;

  const ModelConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  Standardizer& standardizer() { return standardizer_; }
  const Standardizer& standardizer() const { return standardizer_; }
  std::size_t cells() const { return graph_.nodeCount; }

  /// Attention graph for `copies` stacked windows (cached).
  const AttentionGraph& batchGraph(std::size_t copies) const;

  struct Rollout {
    nn::Tensor forward;   // S_{h+1}
    nn::Tensor backward;  // S'_0
  };

  /// `inputs[t]` holds the standardized features of history step t, shape
  /// (copies * cells, 7). Forward pass t = 0..h-1, reverse pass t = h-1..0,
  /// both from zero states.
  Rollout rollout(const std::vector<nn::Tensor>& inputs, const AttentionGraph& graph) const;
  /// Sigmoid head output before masking, shape (rows, 1).
  nn::Tensor head(const Rollout& r) const;
  /// Head output times the 0/1 mask.
  nn::Tensor predict(const std::vector<nn::Tensor>& inputs, const AttentionGraph& graph,
                     std::span<const double> mask) const;

  /// Standardized history tensors for a batch of windows.
  std::vector<nn::Tensor> batchInputs(std::span<const WindowedSample* const> windows) const;
  /// Masked predictions for one window, no tape recorded.
  std::vector<double> predictWindow(const WindowedSample& window) const;

  GraphAttentionLayer& forwardAttention(std::size_t layer) { return attnF_[layer]; }
  GraphAttentionLayer& reverseAttention(std::size_t layer) { return attnR_[layer]; }
  GruCell& forwardGru() { return gruF_; }
  GruCell& reverseGru() { return gruR_; }

  nn::Checkpoint toCheckpoint() const;
  static GraphGruModel fromCheckpoint(const nn::Checkpoint& ckpt);

 private:
  nn::Tensor graphUpdate(const std::vector<GraphAttentionLayer>& layers, const nn::Tensor& state,
                         const nn::Tensor& input, const AttentionGraph& graph) const;

  ModelConfig config_;
  GridGraph graph_;
  nn::ParameterSet params_;
  Standardizer standardizer_;
  std::vector<GraphAttentionLayer> attnF_, attnR_;
  GruCell gruF_, gruR_;
  nn::Tensor w1_, b1_, w2_, b2_, w3_, b3_;
  mutable std::vector<std::pair<std::size_t, AttentionGraph>> graphCache_;
};

inline constexpr const char* kGraphModelKind = "graph-gru";

/// Masked MSE of the model over the windows (mean over cells with points).
double maskedLoss(const GraphGruModel& model, const std::vector<WindowedSample>& windows,
                  int batchSize = 32);

/// Adam on the masked MSE (see runTraining for early stopping).
TrainResult train(GraphGruModel& model, const std::vector<WindowedSample>& trainSet,
                  const std::vector<WindowedSample>& validation, const TrainOptions& options,
                  const std::function<void(const EpochLog&)>& onEpoch = {});

}  // namespace cellvis
