#pragma once

// Small dense tensor with define-by-run reverse-mode differentiation.
//
// Every op that produces a tensor from inputs that require gradients records
// a node holding its inputs and a backward closure. Node ids grow
// monotonically, so sorting the nodes reachable from a loss by descending id
// is a valid reverse topological order.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cellvis::nn {

using Shape = std::vector<std::size_t>;

std::string shapeString(const Shape& shape);
std::size_t shapeSize(const Shape& shape);

/// Storage precision of op outputs and optimizer updates. Values are held in
/// doubles; under Float32 every produced value is rounded to float.
enum class Precision { Float64, Float32 };
void setPrecision(Precision p);
Precision precision();

/// When enabled, any op producing a non-finite value throws NumericError.
void setCheckFinite(bool enabled);
bool checkFinite();

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward reaches the node
  bool requiresGrad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensureGrad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value) { return from({1}, {value}); }
  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutableValues();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  bool requiresGrad() const;
  /// Gradient buffer; zeros when backward has not reached this tensor.
  std::vector<double> grad() const;
  bool hasGrad() const;
  void zeroGrad();

  /// Same values, cut from the tape.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables recording while alive (evaluation, optimizer updates).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool gradEnabled();

/// Builds an op result. `backward` receives the output node (grad populated)
/// and must accumulate into the inputs' grads; it runs only for inputs that
/// require gradients. Exposed so tests can build deliberately wrong ops.
Tensor makeOp(const char* name, Shape shape, std::vector<double> value,
              std::vector<Tensor> inputs, std::function<void(Node&)> backward);

/// Reverse pass from a one-element loss. Throws ArgumentError otherwise.
/// Gradients add up across repeated calls until zeroGrad.
void backward(const Tensor& loss);

// ---- forward ops --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k) x (k,n)
/// Same shapes, or a (m,n) plus b of shape (n) / (1,n) broadcast over rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor scale(const Tensor& a, double s);
Tensor oneMinus(const Tensor& a);
/// (E,d) rows scaled by a (E,1) column.
Tensor mulRows(const Tensor& a, const Tensor& column);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);  // 2-D
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& a, Shape shape);
Tensor gatherRows(const Tensor& a, std::span<const std::uint32_t> rows);
/// out[rows[e]] += a[e]; output has `outRows` rows. Each output sum is
/// independent of the order of its contributing rows.
Tensor scatterAddRows(const Tensor& a, std::span<const std::uint32_t> rows, std::size_t outRows);
Tensor rowSum(const Tensor& a);  // (m,n) -> (m,1)
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softmax(const Tensor& a, std::size_t axis);  // 2-D

/// Softmax of a (E,1) column within consecutive segments
/// [offsets[s], offsets[s+1]).
Tensor segmentSoftmax(const Tensor& scores, std::span<const std::uint32_t> offsets);
/// scores / segment sum, with the denominator pushed away from zero to
/// magnitude `guard`.
Tensor segmentRatio(const Tensor& scores, std::span<const std::uint32_t> offsets,
                    double guard = 1e-8);

/// Mean squared error. With `weights` (same size, constants), the mean runs
/// over weighted entries: sum w (a-b)^2 / sum w.
Tensor mseLoss(const Tensor& prediction, const Tensor& target);
Tensor mseLoss(const Tensor& prediction, const Tensor& target, std::span<const double> weights);

// ---- parameters, optimizer, checking -----------------------------------

class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t scalarCount() const;
  void zeroGrad();
  /// Deep copy of values into fresh parameter leaves.
  ParameterSet clone() const;
  /// Copies values from `other`, which must have identical names and shapes.
  void assign(const ParameterSet& other);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

/// Glorot-uniform matrix parameter.
Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update. Throws StateError when a parameter has no
/// gradient (backward did not reach it).
void adamStep(ParameterSet& params, AdamState& state);

struct GradCheckEntry {
  std::string name;
  double maxRelError = 0.0;
  double maxAbsError = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double maxRelError = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Central differences (step h) against reverse-mode gradients for every
/// parameter. Relative error per element is |a - n| / max(|a|, |n|, 1e-6).
/// Runs at 64-bit regardless of the global precision.
GradCheckReport gradientCheck(const std::function<Tensor()>& loss, ParameterSet& params,
                              double tolerance = 1e-4, double h = 1e-5);

// ---- checkpoints --------------------------------------------------------

/// "CKPT", u32 version, u32 bytes per value (8), kind tag, metadata JSON
/// text, u32 tensor count, manifest (name, u32 rank, u64 dims), then the
/// little-endian float64 payload in manifest order. Strings are u32-length
/// prefixed.
struct Checkpoint {
  std::string kind;
  std::string metadata;  // JSON text
  ParameterSet params;
};

std::vector<char> encodeCheckpoint(const Checkpoint& ckpt);
Checkpoint decodeCheckpoint(std::span<const char> bytes);
void saveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint loadCheckpoint(const std::filesystem::path& path);

}  // namespace cellvis::nn
