#include <doctest.h>

#include <cmath>
#include <random>

#include "cellvis/errors.hpp"
#include "cellvis/tensor.hpp"
#include "test_util.hpp"

using namespace cellvis;
using namespace cellvis::nn;

namespace {

Tensor randomParam(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shapeSize(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

// Contracts an op's output with fixed random weights so every output element
// contributes to the scalar.
struct Probe {
  std::vector<double> w;
  Tensor operator()(const Tensor& out) {
    if (w.size() != out.size()) {
      std::mt19937_64 rng(99);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      w.resize(out.size());
      for (auto& x : w) x = u(rng);
    }
    return sum(mul(out, Tensor::from(out.shape(), w)));
  }
};

double maxRelError(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-6}));
  return worst;
}

// Reverse-mode gradient of every input against central differences.
void checkOp(const std::vector<Tensor*>& inputs, const std::function<Tensor()>& op,
             double tol = 1e-6) {
  Probe probe;
  auto scalar = [&] {
    NoGradGuard guard;
    return probe(op()).item();
  };
  scalar();
  for (auto* t : inputs) t->zeroGrad();
  backward(probe(op()));
  for (auto* t : inputs) {
    const auto numeric = test::numericGrad(scalar, *t);
    CHECK(maxRelError(t->grad(), numeric) < tol);
  }
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("op gradients match central differences") {
  std::mt19937_64 rng(1);
  auto a = randomParam({3, 4}, rng);
  auto b = randomParam({4, 2}, rng);
  auto c = randomParam({3, 4}, rng);
  auto row = randomParam({4}, rng);
  auto col = randomParam({3, 1}, rng);
  const std::vector<std::uint32_t> idx{2, 0, 2, 1};
  const std::vector<std::uint32_t> seg{0, 1, 3};

  SUBCASE("matmul") { checkOp({&a, &b}, [&] { return matmul(a, b); }); }
  SUBCASE("add broadcast") { checkOp({&a, &row}, [&] { return add(a, row); }); }
  SUBCASE("sub") { checkOp({&a, &c}, [&] { return sub(a, c); }); }
  SUBCASE("mul") { checkOp({&a, &c}, [&] { return mul(a, c); }); }
  SUBCASE("scale") { checkOp({&a}, [&] { return scale(a, -2.5); }); }
  SUBCASE("oneMinus") { checkOp({&a}, [&] { return oneMinus(a); }); }
  SUBCASE("mulRows") { checkOp({&a, &col}, [&] { return mulRows(a, col); }); }
  SUBCASE("concat") {
    checkOp({&a, &c}, [&] { return concat({a, c}, 0); });
    checkOp({&a, &c}, [&] { return concat({a, c}, 1); });
  }
  SUBCASE("slice") {
    checkOp({&a}, [&] { return slice(a, 1, 1, 2); });
    checkOp({&a}, [&] { return slice(a, 0, 2, 1); });
  }
  SUBCASE("reshape") { checkOp({&a}, [&] { return reshape(a, {2, 6}); }); }
  SUBCASE("gather and scatter") {
    checkOp({&a}, [&] { return gatherRows(a, idx); });
    auto e = randomParam({4, 4}, rng);
    checkOp({&e}, [&] { return scatterAddRows(e, idx, 3); });
  }
  SUBCASE("reductions") {
    checkOp({&a}, [&] { return rowSum(a); });
    checkOp({&a}, [&] { return sum(a); });
    checkOp({&a}, [&] { return mean(a); });
  }
  SUBCASE("activations") {
    checkOp({&a}, [&] { return sigmoid(a); });
    checkOp({&a}, [&] { return tanh(a); });
    checkOp({&a}, [&] { return softmax(a, 0); });
    checkOp({&a}, [&] { return softmax(a, 1); });
  }
  SUBCASE("relu away from the kink") {
    auto r = randomParam({3, 4}, rng);
    for (auto& v : r.mutableValues()) v += v >= 0 ? 0.1 : -0.1;
    checkOp({&r}, [&] { return relu(r); });
  }
  SUBCASE("segment ops") {
    checkOp({&col}, [&] { return segmentSoftmax(col, seg); });
    auto pos = randomParam({3, 1}, rng, 0.5, 2.0);
    checkOp({&pos}, [&] { return segmentRatio(pos, seg); });
  }
  SUBCASE("losses") {
    checkOp({&a, &c}, [&] { return mseLoss(a, c); });
    const std::vector<double> w{1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 1, 1};
    checkOp({&a, &c}, [&] { return mseLoss(a, c, w); });
  }
}

TEST_CASE("forward values") {
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  const auto x = Tensor::from({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = matmul(Tensor::from({3, 3}, eye), x);
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) ==
        std::vector<double>(x.values().begin(), x.values().end()));

  const auto s = softmax(Tensor::full({2, 5}, 3.0), 1);
  for (double v : s.values()) CHECK(v == doctest::Approx(0.2));
  CHECK(mseLoss(x, x).item() == 0.0);

  const auto seg = segmentSoftmax(Tensor::from({3, 1}, {1, 2, 2}), std::vector<std::uint32_t>{0, 1, 3});
  CHECK(seg.at(0) == 1.0);
  CHECK(seg.at(1) == doctest::Approx(0.5));
  const auto ratio = segmentRatio(Tensor::from({2, 1}, {1, 3}), std::vector<std::uint32_t>{0, 2});
  CHECK(ratio.at(0) == doctest::Approx(0.25));
}

TEST_CASE("mse gradient is 2x / n") {
  auto x = Tensor::parameter({4}, {1, -2, 3, 0.5});
  backward(mseLoss(x, Tensor::zeros({4})));
  const auto g = x.grad();
  CHECK(g[0] == doctest::Approx(0.5));
  CHECK(g[1] == doctest::Approx(-1.0));
  CHECK(g[3] == doctest::Approx(0.25));
}

TEST_CASE("gradients only flow where used and accumulate") {
  auto used = Tensor::parameter({2}, {1, 2});
  auto unused = Tensor::parameter({2}, {3, 4});
  backward(sum(scale(used, 3.0)));
  CHECK(unused.grad() == std::vector<double>{0, 0});
  CHECK_FALSE(unused.hasGrad());
  CHECK(used.grad() == std::vector<double>{3, 3});
  backward(sum(scale(used, 3.0)));
  CHECK(used.grad() == std::vector<double>{6, 6});
  used.zeroGrad();
  CHECK(used.grad() == std::vector<double>{0, 0});

  CHECK_THROWS_AS(backward(used), ArgumentError);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("no-grad guard stops recording") {
  auto p = Tensor::parameter({1}, {2.0});
  Tensor out;
  {
    NoGradGuard g;
    out = scale(p, 2.0);
  }
  CHECK_FALSE(out.requiresGrad());
  CHECK(gradEnabled());
}

TEST_CASE("adam") {
  SUBCASE("minimizes a quadratic") {
    ParameterSet ps;
    auto& w = ps.add("w", Tensor::parameter({1}, {1.0}));
    AdamState st;
    st.options.lr = 0.01;
    for (int i = 0; i < 2000; ++i) {
      ps.zeroGrad();
      backward(sum(mul(w, w)));
      adamStep(ps, st);
    }
    CHECK(std::abs(w.at(0)) < 0.01);
    CHECK(st.step == 2000);
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterSet ps;
    auto& w = ps.add("w", Tensor::parameter({3}, {1.0, -2.0, 0.5}));
    backward(sum(scale(w, 0.0)));
    AdamState st;
    adamStep(ps, st);
    CHECK(w.at(0) == 1.0);
    CHECK(w.at(1) == -2.0);
    CHECK(st.step == 1);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    ParameterSet ps;
    auto& w = ps.add("w", Tensor::parameter({2}, {1.0, 1.0}));
    backward(sum(mul(w, Tensor::from({2}, {5.0, -0.1}))));
    AdamState st;
    st.options.lr = 0.1;
    adamStep(ps, st);
    CHECK(w.at(0) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(w.at(1) == doctest::Approx(1.1).epsilon(1e-6));
  }
  SUBCASE("missing gradient") {
    ParameterSet ps;
    ps.add("w", Tensor::parameter({1}, {1.0}));
    AdamState st;
    CHECK_THROWS_AS(adamStep(ps, st), StateError);
  }
}

TEST_CASE("gradient check of a linear relu layer") {
  std::mt19937_64 rng(3);
  ParameterSet ps;
  ps.add("w", glorot(5, 3, rng));
  ps.add("b", Tensor::parameter({3}, {0.1, 0.2, -0.1}));
  auto x = Tensor::from({4, 5}, std::vector<double>(20, 0.0));
  for (std::size_t i = 0; i < 20; ++i) x.mutableValues()[i] = std::sin(double(i));
  const auto target = Tensor::full({4, 3}, 0.3);
  auto loss = [&] { return mseLoss(relu(add(matmul(x, ps.get("w")), ps.get("b"))), target); };
  const auto report = gradientCheck(loss, ps, 1e-6);
  CHECK(report.passed);
  CHECK(report.maxRelError < 1e-6);
}

TEST_CASE("gradient check catches a wrong backward") {
  auto p = Tensor::parameter({3}, {0.5, -1.0, 2.0});
  ParameterSet ps;
  ps.add("p", p);
  auto broken = [](const Tensor& a) {
    std::vector<double> out(a.values().begin(), a.values().end());
    for (auto& v : out) v = v * v;
    return makeOp("broken_square", a.shape(), out, {a}, [](Node& self) {
      auto& in = *self.inputs[0];
      in.ensureGrad();
      for (std::size_t i = 0; i < in.value.size(); ++i) in.grad[i] += self.grad[i] * in.value[i];
    });
  };
  const auto report = gradientCheck([&] { return sum(broken(ps.get("p"))); }, ps);
  CHECK_FALSE(report.passed);
  CHECK(report.maxRelError > 0.1);
}

TEST_CASE("checkpoint round trip and corruption") {
  ParameterSet ps;
  ps.add("a", Tensor::parameter({2, 3}, {1, 2, 3, 4, 5, 6.125}));
  ps.add("b.bias", Tensor::parameter({1}, {-1e-300}));
  Checkpoint ck{"test-kind", R"({"x":1})", ps};
  const auto path = test::scratchDir("ckpt") / "m.ckpt";
  saveCheckpoint(path, ck);
  const auto r = loadCheckpoint(path);
  CHECK(r.kind == "test-kind");
  CHECK(r.metadata == R"({"x":1})");
  REQUIRE(r.params.items().size() == 2);
  CHECK(r.params.get("a").shape() == Shape{2, 3});
  CHECK(r.params.get("a").at(5) == 6.125);
  CHECK(r.params.get("b.bias").at(0) == -1e-300);

  auto bytes = encodeCheckpoint(ck);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CKPT");
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS(decodeCheckpoint(truncated));
  auto badMagic = bytes;
  badMagic[1] = 'Q';
  CHECK_THROWS(decodeCheckpoint(badMagic));
  CHECK_THROWS(loadCheckpoint(path.parent_path() / "absent.ckpt"));
}

TEST_CASE("finite checking and single precision") {
  setCheckFinite(true);
  CHECK_THROWS_AS(scale(Tensor::from({1}, {1e308}), 10.0), NumericError);
  setCheckFinite(false);
  CHECK(std::isinf(scale(Tensor::from({1}, {1e308}), 10.0).item()));

  setPrecision(Precision::Float32);
  const double third = scale(Tensor::from({1}, {1.0}), 1.0 / 3.0).item();
  setPrecision(Precision::Float64);
  CHECK(third == static_cast<double>(1.0f / 3.0f));
  CHECK(scale(Tensor::from({1}, {1.0}), 1.0 / 3.0).item() == 1.0 / 3.0);
}

TEST_CASE("parameter set clone and assign") {
  ParameterSet ps;
  ps.add("w", Tensor::parameter({2}, {1, 2}));
  auto copy = ps.clone();
  copy.get("w").mutableValues()[0] = 9;
  CHECK(ps.get("w").at(0) == 1);
  ps.assign(copy);
  CHECK(ps.get("w").at(0) == 9);
  CHECK(ps.scalarCount() == 2);
  ParameterSet other;
  other.add("v", Tensor::parameter({2}, {0, 0}));
  CHECK_THROWS(ps.assign(other));
}

}  // TEST_SUITE
