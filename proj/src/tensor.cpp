#include "cellvis/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "cellvis/errors.hpp"

namespace cellvis::nn {
namespace {

std::atomic<std::uint64_t> gNextId{1};
std::atomic<Precision> gPrecision{Precision::Float64};
std::atomic<bool> gCheckFinite{false};
thread_local bool gGradEnabled = true;

using NodePtr = std::shared_ptr<Node>;

void accumulate(const NodePtr& n, std::size_t i, double g) { n->grad[i] += g; }

bool wants(const NodePtr& n) {
  if (!n->requiresGrad) return false;
  n->ensureGrad();
  return true;
}

void require2d(const Tensor& t, const char* op) {
  if (t.dim() != 2)
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shapeString(t.shape()));
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shapeString(a.shape()) + " and " +
                   shapeString(b.shape()));
}

std::vector<double> copyValues(const Tensor& t) {
  const auto v = t.values();
  return {v.begin(), v.end()};
}

// Sum whose result does not depend on the order of the terms, so graph
// reductions stay bit-identical under node relabeling.
double orderFreeSum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace

std::string shapeString(const Shape& shape) {
  std::ostringstream s;
  s << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? ", " : "") << shape[i];
  s << ')';
  return s.str();
}

std::size_t shapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void setPrecision(Precision p) { gPrecision = p; }
Precision precision() { return gPrecision; }
void setCheckFinite(bool enabled) { gCheckFinite = enabled; }
bool checkFinite() { return gCheckFinite; }

NoGradGuard::NoGradGuard() : previous_(gGradEnabled) { gGradEnabled = false; }
NoGradGuard::~NoGradGuard() { gGradEnabled = previous_; }
bool gradEnabled() { return gGradEnabled; }

// ---- Tensor ---------------------------------------------------------------

namespace {

NodePtr leaf(Shape shape, std::vector<double> values, bool requiresGrad) {
  if (values.size() != shapeSize(shape))
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                     shapeString(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requiresGrad = requiresGrad;
  n->id = gNextId++;
  return n;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shapeSize(shape);
  return Tensor(leaf(std::move(shape), std::vector<double>(n, value), false));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(leaf(std::move(shape), std::move(values), true));
}

const Shape& Tensor::shape() const {
  if (!node_) throw StateError("tensor: undefined");
  return node_->shape;
}
std::size_t Tensor::size() const { return shape().empty() ? 0 : shapeSize(shape()); }
std::size_t Tensor::rows() const { return dim() == 2 ? shape()[0] : size(); }
std::size_t Tensor::cols() const { return dim() == 2 ? shape()[1] : 1; }

std::span<const double> Tensor::values() const {
  if (!node_) throw StateError("tensor: undefined");
  return node_->value;
}
std::span<double> Tensor::mutableValues() {
  if (!node_) throw StateError("tensor: undefined");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ArgumentError("tensor: item() on shape " + shapeString(shape()));
  return node_->value[0];
}

bool Tensor::requiresGrad() const { return node_ && node_->requiresGrad; }

std::vector<double> Tensor::grad() const {
  if (!node_) throw StateError("tensor: undefined");
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

bool Tensor::hasGrad() const { return node_ && !node_->grad.empty(); }

void Tensor::zeroGrad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return from(shape(), copyValues(*this)); }

// ---- tape -----------------------------------------------------------------

Tensor makeOp(const char* name, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
              std::function<void(Node&)> backward) {
  if (gPrecision == Precision::Float32)
    for (auto& v : value) v = static_cast<double>(static_cast<float>(v));
  if (gCheckFinite)
    for (double v : value)
      if (!std::isfinite(v)) throw NumericError(std::string(name) + ": produced a non-finite value");
  auto n = leaf(std::move(shape), std::move(value), false);
  n->op = name;
  if (gGradEnabled) {
    for (const auto& in : inputs)
      if (in.requiresGrad()) n->requiresGrad = true;
    if (n->requiresGrad) {
      n->inputs.reserve(inputs.size());
      for (const auto& in : inputs) n->inputs.push_back(in.node());
      n->backward = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ArgumentError("backward: loss must be a one-element tensor, got " +
                        (loss.defined() ? shapeString(loss.shape()) : std::string("undefined")));
  const NodePtr& root = loss.node();
  if (!root->requiresGrad) return;

  std::vector<Node*> order;
  std::vector<Node*> stack{root.get()};
  std::vector<std::uint64_t> seen;
  auto visited = [&](const Node* n) {
    return std::binary_search(seen.begin(), seen.end(), n->id);
  };
  // Collect reachable nodes; ids are unique so a sorted id list dedups.
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!n->requiresGrad || visited(n)) continue;
    seen.insert(std::upper_bound(seen.begin(), seen.end(), n->id), n->id);
    order.push_back(n);
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

  root->ensureGrad();
  root->grad[0] += 1.0;
  for (Node* n : order)
    if (n->backward && !n->grad.empty()) n->backward(*n);
}

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require2d(a, "matmul");
  require2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) mismatch("matmul", a, b);
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  return makeOp("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& A = self.inputs[0];
    const auto& B = self.inputs[1];
    const auto& g = self.grad;
    if (wants(A))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B->value[p * n + j];
          A->grad[i * k + p] += s;
        }
    if (wants(B))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = A->value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) B->grad[p * n + j] += x * g[i * n + j];
        }
  });
}

namespace {

enum class Broadcast { Same, Rows };

Broadcast broadcastKind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (a.dim() == 2 && b.size() == a.cols() &&
      (b.dim() == 1 || (b.dim() == 2 && b.rows() == 1)))
    return Broadcast::Rows;
  mismatch(op, a, b);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcastKind("add", a, b);
  const std::size_t n = a.cols();
  std::vector<double> out = copyValues(a);
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] += kind == Broadcast::Same ? bv[i] : bv[i % n];
  return makeOp("add", a.shape(), std::move(out), {a, b}, [kind, n](Node& self) {
    const auto& g = self.grad;
    if (wants(self.inputs[0]))
      for (std::size_t i = 0; i < g.size(); ++i) accumulate(self.inputs[0], i, g[i]);
    if (wants(self.inputs[1]))
      for (std::size_t i = 0; i < g.size(); ++i)
        accumulate(self.inputs[1], kind == Broadcast::Same ? i : i % n, g[i]);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("sub", a, b);
  std::vector<double> out = copyValues(a);
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return makeOp("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    if (wants(self.inputs[0]))
      for (std::size_t i = 0; i < g.size(); ++i) accumulate(self.inputs[0], i, g[i]);
    if (wants(self.inputs[1]))
      for (std::size_t i = 0; i < g.size(); ++i) accumulate(self.inputs[1], i, -g[i]);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("mul", a, b);
  std::vector<double> out = copyValues(a);
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return makeOp("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& A = self.inputs[0];
    const auto& B = self.inputs[1];
    const auto& g = self.grad;
    if (wants(A))
      for (std::size_t i = 0; i < g.size(); ++i) A->grad[i] += g[i] * B->value[i];
    if (wants(B))
      for (std::size_t i = 0; i < g.size(); ++i) B->grad[i] += g[i] * A->value[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out = copyValues(a);
  for (auto& v : out) v *= s;
  return makeOp("scale", a.shape(), std::move(out), {a}, [s](Node& self) {
    if (wants(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) self.inputs[0]->grad[i] += s * self.grad[i];
  });
}

Tensor oneMinus(const Tensor& a) {
  std::vector<double> out = copyValues(a);
  for (auto& v : out) v = 1.0 - v;
  return makeOp("one_minus", a.shape(), std::move(out), {a}, [](Node& self) {
    if (wants(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) self.inputs[0]->grad[i] -= self.grad[i];
  });
}

Tensor mulRows(const Tensor& a, const Tensor& column) {
  require2d(a, "mul_rows");
  if (column.size() != a.rows() || (column.dim() == 2 && column.cols() != 1))
    mismatch("mul_rows", a, column);
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out = copyValues(a);
  const auto cv = column.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= cv[i];
  return makeOp("mul_rows", a.shape(), std::move(out), {a, column}, [m, n](Node& self) {
    const auto& A = self.inputs[0];
    const auto& C = self.inputs[1];
    const auto& g = self.grad;
    if (wants(A))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) A->grad[i * n + j] += g[i * n + j] * C->value[i];
    if (wants(C))
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * A->value[i * n + j];
        C->grad[i] += s;
      }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  if (axis > 1) throw ArgumentError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require2d(p, "concat");
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if ((axis == 0 ? p.cols() : p.rows()) != fixed) mismatch("concat", parts[0], p);
    total += axis == 0 ? p.rows() : p.cols();
  }
  const Shape shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> out(total * fixed);
  std::vector<std::size_t> widths;
  if (axis == 0) {
    std::size_t pos = 0;
    for (const auto& p : parts) {
      std::copy(p.values().begin(), p.values().end(), out.begin() + pos);
      pos += p.size();
      widths.push_back(p.rows());
    }
  } else {
    std::size_t col = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.cols();
      for (std::size_t r = 0; r < fixed; ++r)
        std::copy_n(&p.values()[r * w], w, &out[r * total + col]);
      col += w;
      widths.push_back(w);
    }
  }
  return makeOp("concat", shape, std::move(out), parts, [axis, fixed, total, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const auto& in = self.inputs[k];
      const std::size_t w = widths[k];
      if (wants(in)) {
        if (axis == 0)
          for (std::size_t i = 0; i < w * fixed; ++i) in->grad[i] += self.grad[offset * fixed + i];
        else
          for (std::size_t r = 0; r < fixed; ++r)
            for (std::size_t c = 0; c < w; ++c) in->grad[r * w + c] += self.grad[r * total + offset + c];
      }
      offset += w;
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  require2d(a, "slice");
  if (axis > 1) throw ArgumentError("slice: axis must be 0 or 1");
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t extent = axis == 0 ? m : n;
  if (start + length > extent)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds axis of " +
                     std::to_string(extent) + " in " + shapeString(a.shape()));
  const Shape shape = axis == 0 ? Shape{length, n} : Shape{m, length};
  std::vector<double> out(shapeSize(shape));
  const auto av = a.values();
  if (axis == 0)
    std::copy_n(&av[start * n], length * n, out.begin());
  else
    for (std::size_t r = 0; r < m; ++r) std::copy_n(&av[r * n + start], length, &out[r * length]);
  return makeOp("slice", shape, std::move(out), {a}, [axis, start, length, m, n](Node& self) {
    const auto& A = self.inputs[0];
    if (!wants(A)) return;
    if (axis == 0)
      for (std::size_t i = 0; i < length * n; ++i) A->grad[start * n + i] += self.grad[i];
    else
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < length; ++c) A->grad[r * n + start + c] += self.grad[r * length + c];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shapeSize(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shapeString(a.shape()) + " as " + shapeString(shape));
  return makeOp("reshape", std::move(shape), copyValues(a), {a}, [](Node& self) {
    if (wants(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) self.inputs[0]->grad[i] += self.grad[i];
  });
}

Tensor gatherRows(const Tensor& a, std::span<const std::uint32_t> rows) {
  require2d(a, "gather_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * n);
  const auto av = a.values();
  for (std::size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] >= m)
      throw ArgumentError("gather_rows: index " + std::to_string(idx[e]) + " out of range for " +
                          shapeString(a.shape()));
    std::copy_n(&av[idx[e] * n], n, &out[e * n]);
  }
  const std::size_t count = idx.size();
  return makeOp("gather_rows", {count, n}, std::move(out), {a}, [idx = std::move(idx), n](Node& self) {
    const auto& A = self.inputs[0];
    if (!wants(A)) return;
    for (std::size_t e = 0; e < idx.size(); ++e)
      for (std::size_t j = 0; j < n; ++j) A->grad[idx[e] * n + j] += self.grad[e * n + j];
  });
}

Tensor scatterAddRows(const Tensor& a, std::span<const std::uint32_t> rows, std::size_t outRows) {
  require2d(a, "scatter_add_rows");
  if (rows.size() != a.rows())
    throw ShapeError("scatter_add_rows: " + std::to_string(rows.size()) + " indices for " +
                     shapeString(a.shape()));
  const std::size_t n = a.cols();
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  std::vector<std::vector<std::uint32_t>> sources(outRows);
  for (std::size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] >= outRows)
      throw ArgumentError("scatter_add_rows: index " + std::to_string(idx[e]) + " out of range");
    sources[idx[e]].push_back(static_cast<std::uint32_t>(e));
  }
  std::vector<double> out(outRows * n, 0.0);
  const auto av = a.values();
  std::vector<double> terms;
  for (std::size_t r = 0; r < outRows; ++r)
    for (std::size_t j = 0; j < n; ++j) {
      terms.clear();
      for (auto e : sources[r]) terms.push_back(av[e * n + j]);
      out[r * n + j] = orderFreeSum(terms);
    }
  return makeOp("scatter_add_rows", {outRows, n}, std::move(out), {a},
                [idx = std::move(idx), n](Node& self) {
                  const auto& A = self.inputs[0];
                  if (!wants(A)) return;
                  for (std::size_t e = 0; e < idx.size(); ++e)
                    for (std::size_t j = 0; j < n; ++j)
                      A->grad[e * n + j] += self.grad[idx[e] * n + j];
                });
}

Tensor rowSum(const Tensor& a) {
  require2d(a, "row_sum");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
  return makeOp("row_sum", {m, 1}, std::move(out), {a}, [m, n](Node& self) {
    const auto& A = self.inputs[0];
    if (!wants(A)) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) A->grad[i * n + j] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return makeOp("sum", {1}, {s}, {a}, [](Node& self) {
    const auto& A = self.inputs[0];
    if (!wants(A)) return;
    for (auto& g : A->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ArgumentError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

namespace {

template <typename F, typename D>
Tensor unary(const char* name, const Tensor& a, F f, D derivFromOutput) {
  std::vector<double> out = copyValues(a);
  for (auto& v : out) v = f(v);
  return makeOp(name, a.shape(), std::move(out), {a}, [derivFromOutput](Node& self) {
    const auto& A = self.inputs[0];
    if (!wants(A)) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      A->grad[i] += self.grad[i] * derivFromOutput(self.value[i], A->value[i]);
  });
}

double stableSigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, stableSigmoid, [](double y, double) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double y, double) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  require2d(a, "softmax");
  if (axis > 1) throw ArgumentError("softmax: axis must be 0 or 1");
  const std::size_t m = a.rows(), n = a.cols();
  // Groups of `len` elements at stride `step`, starting at `first(g)`.
  const std::size_t groups = axis == 1 ? m : n, len = axis == 1 ? n : m,
                    step = axis == 1 ? 1 : n;
  auto first = [=](std::size_t g) { return axis == 1 ? g * n : g; };
  std::vector<double> out = copyValues(a);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t b = first(g);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, out[b + i * step]);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) z += out[b + i * step] = std::exp(out[b + i * step] - mx);
    for (std::size_t i = 0; i < len; ++i) out[b + i * step] /= z;
  }
  return makeOp("softmax", a.shape(), std::move(out), {a}, [=](Node& self) {
    const auto& A = self.inputs[0];
    if (!wants(A)) return;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t b = first(g);
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) dot += self.grad[b + i * step] * self.value[b + i * step];
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = b + i * step;
        A->grad[k] += self.value[k] * (self.grad[k] - dot);
      }
    }
  });
}

namespace {

std::vector<std::uint32_t> checkSegments(const char* op, const Tensor& scores,
                                         std::span<const std::uint32_t> offsets) {
  if (!(scores.dim() == 1 || (scores.dim() == 2 && scores.cols() == 1)))
    throw ShapeError(std::string(op) + ": scores must be a column, got " +
                     shapeString(scores.shape()));
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != scores.size())
    throw ArgumentError(std::string(op) + ": offsets must run from 0 to the score count");
  for (std::size_t s = 1; s < offsets.size(); ++s)
    if (offsets[s] < offsets[s - 1]) throw ArgumentError(std::string(op) + ": offsets decrease");
  return {offsets.begin(), offsets.end()};
}

}  // namespace

Tensor segmentSoftmax(const Tensor& scores, std::span<const std::uint32_t> offsets) {
  auto seg = checkSegments("segment_softmax", scores, offsets);
  std::vector<double> out = copyValues(scores);
  for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
    const auto b = seg[s], e = seg[s + 1];
    if (b == e) continue;
    double mx = out[b];
    for (auto i = b; i < e; ++i) mx = std::max(mx, out[i]);
    std::vector<double> terms;
    for (auto i = b; i < e; ++i) terms.push_back(out[i] = std::exp(out[i] - mx));
    const double z = orderFreeSum(terms);
    for (auto i = b; i < e; ++i) out[i] /= z;
  }
  return makeOp("segment_softmax", scores.shape(), std::move(out), {scores},
                [seg = std::move(seg)](Node& self) {
                  const auto& A = self.inputs[0];
                  if (!wants(A)) return;
                  for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
                    double dot = 0.0;
                    for (auto i = seg[s]; i < seg[s + 1]; ++i) dot += self.grad[i] * self.value[i];
                    for (auto i = seg[s]; i < seg[s + 1]; ++i)
                      A->grad[i] += self.value[i] * (self.grad[i] - dot);
                  }
                });
}

Tensor segmentRatio(const Tensor& scores, std::span<const std::uint32_t> offsets, double guard) {
  auto seg = checkSegments("segment_ratio", scores, offsets);
  const auto sv = scores.values();
  const std::size_t nseg = seg.size() - 1;
  std::vector<double> denom(nseg);
  std::vector<std::uint8_t> guarded(nseg, 0);
  std::vector<double> out(sv.begin(), sv.end());
  for (std::size_t s = 0; s < nseg; ++s) {
    std::vector<double> terms(sv.begin() + seg[s], sv.begin() + seg[s + 1]);
    double d = orderFreeSum(terms);
    if (std::abs(d) < guard) {
      d = d < 0.0 ? -guard : guard;
      guarded[s] = 1;
    }
    denom[s] = d;
    for (auto i = seg[s]; i < seg[s + 1]; ++i) out[i] /= d;
  }
  return makeOp("segment_ratio", scores.shape(), std::move(out), {scores},
                [seg = std::move(seg), denom = std::move(denom), guarded = std::move(guarded)](
                    Node& self) {
                  const auto& A = self.inputs[0];
                  if (!wants(A)) return;
                  for (std::size_t s = 0; s < denom.size(); ++s) {
                    // y_i = s_i / D: dL/ds_i = g_i / D - [unguarded] sum_j g_j y_j / D
                    double dot = 0.0;
                    if (!guarded[s])
                      for (auto i = seg[s]; i < seg[s + 1]; ++i) dot += self.grad[i] * self.value[i];
                    for (auto i = seg[s]; i < seg[s + 1]; ++i)
                      A->grad[i] += (self.grad[i] - dot) / denom[s];
                  }
                });
}

Tensor mseLoss(const Tensor& prediction, const Tensor& target) {
  if (prediction.size() != target.size()) mismatch("mse_loss", prediction, target);
  if (prediction.size() == 0) throw ArgumentError("mse_loss: empty input");
  std::vector<double> w(prediction.size(), 1.0);
  return mseLoss(prediction, target, w);
}

Tensor mseLoss(const Tensor& prediction, const Tensor& target, std::span<const double> weights) {
  if (prediction.size() != target.size() || weights.size() != prediction.size())
    mismatch("mse_loss", prediction, target);
  const auto pv = prediction.values(), tv = target.values();
  double total = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    total += weights[i] * d * d;
    wsum += weights[i];
  }
  if (wsum <= 0.0) throw ArgumentError("mse_loss: weights sum to zero");
  std::vector<double> w(weights.begin(), weights.end());
  return makeOp("mse_loss", {1}, {total / wsum}, {prediction, target},
                [w = std::move(w), wsum](Node& self) {
                  const auto& P = self.inputs[0];
                  const auto& T = self.inputs[1];
                  const double g = self.grad[0];
                  const bool wp = wants(P), wt = wants(T);
                  for (std::size_t i = 0; i < w.size(); ++i) {
                    const double d = 2.0 * w[i] * (P->value[i] - T->value[i]) / wsum * g;
                    if (wp) P->grad[i] += d;
                    if (wt) T->grad[i] -= d;
                  }
                });
}

// ---- parameters -----------------------------------------------------------

Tensor& ParameterSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ArgumentError("parameters: duplicate name '" + name + "'");
  if (!value.requiresGrad()) value = Tensor::parameter(value.shape(), copyValues(value));
  items_.emplace_back(name, std::move(value));
  return items_.back().second;
}

Tensor& ParameterSet::get(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return t;
  throw ArgumentError("parameters: no tensor named '" + name + "'");
}

const Tensor& ParameterSet::get(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& it) { return it.first == name; });
}

std::size_t ParameterSet::scalarCount() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParameterSet::zeroGrad() {
  for (auto& [name, t] : items_) t.zeroGrad();
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& [name, t] : items_) out.add(name, Tensor::parameter(t.shape(), copyValues(t)));
  return out;
}

void ParameterSet::assign(const ParameterSet& other) {
  if (other.items_.size() != items_.size())
    throw ShapeError("parameters: assigning a set of different size");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto& [name, t] = items_[i];
    const auto& [oname, ot] = other.items_[i];
    if (name != oname || t.shape() != ot.shape())
      throw ShapeError("parameters: '" + name + "' " + shapeString(t.shape()) + " vs '" + oname +
                       "' " + shapeString(ot.shape()));
    std::copy(ot.values().begin(), ot.values().end(), t.mutableValues().begin());
  }
}

Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor::parameter({rows, cols}, std::move(v));
}

void adamStep(ParameterSet& params, AdamState& state) {
  auto& items = params.items();
  for (const auto& [name, t] : items)
    if (!t.hasGrad()) throw StateError("adam: parameter '" + name + "' has no gradient");
  if (state.m.size() != items.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& [name, t] : items) {
      state.m.emplace_back(t.size(), 0.0);
      state.v.emplace_back(t.size(), 0.0);
    }
  }
  ++state.step;
  const auto& o = state.options;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const bool single = precision() == Precision::Float32;
  for (std::size_t k = 0; k < items.size(); ++k) {
    auto& t = items[k].second;
    if (state.m[k].size() != t.size())
      throw StateError("adam: moment shape differs for '" + items[k].first + "'");
    auto values = t.mutableValues();
    const auto& g = t.node()->grad;
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      values[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
      if (single) values[i] = static_cast<float>(values[i]);
    }
  }
}

GradCheckReport gradientCheck(const std::function<Tensor()>& loss, ParameterSet& params,
                              double tolerance, double h) {
  const Precision saved = precision();
  setPrecision(Precision::Float64);
  GradCheckReport report;
  report.tolerance = tolerance;
  try {
    params.zeroGrad();
    backward(loss());
    for (auto& [name, t] : params.items()) {
      const std::vector<double> analytic = t.grad();
      GradCheckEntry entry{name, 0.0, 0.0};
      auto values = t.mutableValues();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double x0 = values[i];
        double lp, lm;
        {
          NoGradGuard ng;
          values[i] = x0 + h;
          lp = loss().item();
          values[i] = x0 - h;
          lm = loss().item();
        }
        values[i] = x0;
        const double numeric = (lp - lm) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
        entry.maxAbsError = std::max(entry.maxAbsError, err);
        entry.maxRelError = std::max(entry.maxRelError, err / denom);
      }
      report.maxRelError = std::max(report.maxRelError, entry.maxRelError);
      report.entries.push_back(std::move(entry));
    }
    params.zeroGrad();
  } catch (...) {
    setPrecision(saved);
    throw;
  }
  setPrecision(saved);
  report.passed = report.maxRelError <= tolerance;
  return report;
}

// ---- checkpoints ----------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

constexpr char kCkptMagic[4] = {'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::vector<char>& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

void putString(std::vector<char>& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  std::span<const char> bytes;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (bytes.size() - pos < sizeof(T)) throw LengthMismatchError("checkpoint: truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string getString() {
    const auto n = get<std::uint32_t>();
    if (bytes.size() - pos < n) throw LengthMismatchError("checkpoint: truncated string");
    std::string s(bytes.data() + pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<char> encodeCheckpoint(const Checkpoint& ckpt) {
  std::vector<char> out(kCkptMagic, kCkptMagic + 4);
  put<std::uint32_t>(out, kCkptVersion);
  put<std::uint32_t>(out, sizeof(double));
  putString(out, ckpt.kind);
  putString(out, ckpt.metadata);
  const auto& items = ckpt.params.items();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(items.size()));
  for (const auto& [name, t] : items) {
    putString(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
  }
  for (const auto& [name, t] : items) {
    const auto* raw = reinterpret_cast<const char*>(t.values().data());
    out.insert(out.end(), raw, raw + t.size() * sizeof(double));
  }
  return out;
}

Checkpoint decodeCheckpoint(std::span<const char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
    throw ParseError("checkpoint: bad magic, expected CKPT");
  Reader r{bytes, 4};
  const auto version = r.get<std::uint32_t>();
  if (version != kCkptVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const auto width = r.get<std::uint32_t>();
  if (width != sizeof(double))
    throw ParseError("checkpoint: unsupported value width " + std::to_string(width));
  Checkpoint c;
  c.kind = r.getString();
  c.metadata = r.getString();
  const auto count = r.get<std::uint32_t>();
  std::vector<std::pair<std::string, Shape>> manifest;
  std::size_t total = 0;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.getString();
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint64_t>());
    total += shapeSize(shape);
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  if (bytes.size() - r.pos != total * sizeof(double))
    throw LengthMismatchError("checkpoint: payload is " + std::to_string(bytes.size() - r.pos) +
                              " bytes, manifest implies " + std::to_string(total * sizeof(double)));
  for (auto& [name, shape] : manifest) {
    std::vector<double> v(shapeSize(shape));
    std::memcpy(v.data(), bytes.data() + r.pos, v.size() * sizeof(double));
    r.pos += v.size() * sizeof(double);
    c.params.add(name, Tensor::parameter(shape, std::move(v)));
  }
  return c;
}

void saveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encodeCheckpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint loadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decodeCheckpoint(bytes);
}

}  // namespace cellvis::nn
