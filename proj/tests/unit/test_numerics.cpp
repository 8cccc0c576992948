#include "gid/gradcheck.hpp"
#include "gid/nn.hpp"
#include "gid/ops.hpp"
#include "gid/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gid::nn;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Values bounded away from zero so kinked kernels are probed off their kinks.
Tensor<double> off_kink_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.5);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

void expect_grad_ok(const GradCheckResult& r) {
  EXPECT_TRUE(r.passed) << r.name << ": max rel error " << r.max_rel_error << " >= " << r.tolerance;
  EXPECT_GE(r.probes, 20u);
}

GradCheckOptions opts(double tol, std::uint64_t seed = 3) {
  GradCheckOptions o;
  o.tolerance = tol;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(Tensor, ShapeContract) {
  Tensor<float> t(Shape{2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), gid::ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{1, 1, 1, 1, 1}), gid::ShapeError);
  t.at({1, 2, 3}) = 5.0f;
  EXPECT_EQ(t[23], 5.0f);
}

TEST(Matmul, IdentityAndHandArithmetic) {
  Tape<double> tape;
  std::mt19937_64 rng(1);
  Tensor<double> eye(Shape{3, 3});
  for (int i = 0; i < 3; ++i) eye.at({std::size_t(i), std::size_t(i)}) = 1.0;
  const Tensor<double> x = random_tensor({3, 5}, rng);
  EXPECT_EQ(matmul(tape.constant(eye), tape.constant(x)).value(), x);

  const auto a = tape.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  const auto b = tape.constant(Tensor<double>({2, 1}, {1, 1}));
  const Tensor<double> c = matmul(a, b).value();
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 3.0);
  EXPECT_EQ(c[1], 7.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape<double> tape;
  const auto a = tape.constant(Tensor<double>(Shape{2, 3}));
  const auto b = tape.constant(Tensor<double>(Shape{4, 2}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const gid::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,2]"), std::string::npos);
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  expect_grad_ok(check_gradients(
      "matmul-shared", [](Tape<double>&, const auto& in) { return matmul(in[0], in[1]); },
      {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng)}, {}, opts(1e-6)));
  expect_grad_ok(check_gradients(
      "matmul-batched", [](Tape<double>&, const auto& in) { return matmul(in[0], in[1]); },
      {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 2}, rng)}, {}, opts(1e-6)));
}

TEST(Softmax, TrivialAndStableCases) {
  Tape<double> tape;
  auto y = softmax(tape.constant(Tensor<double>({2}, {0, 0})), 0).value();
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
  y = softmax(tape.constant(Tensor<double>({2}, {1000, 0})), 0).value();
  EXPECT_TRUE(std::isfinite(y[0]) && std::isfinite(y[1]));
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_LT(y[1], 1e-300);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(4);
  Tape<double> tape;
  const auto y = softmax(tape.constant(random_tensor({3, 4, 5}, rng, -20, 20)), 1).value();
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t c = 0; c < 5; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < 4; ++b) {
        const double v = y.at({a, b, c});
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (std::size_t axis : {0u, 1u, 2u}) {
    expect_grad_ok(check_gradients(
        "softmax", [axis](Tape<double>&, const auto& in) { return softmax(in[0], axis); },
        {random_tensor({3, 4, 5}, rng, -2, 2)}, {}, opts(1e-6)));
  }
}

TEST(LayerNorm, TrivialCases) {
  Tape<double> tape;
  const auto gain = tape.constant(Tensor<double>({4}, {1, 1, 1, 1}));
  const auto bias = tape.constant(Tensor<double>({4}, {0, 0, 0, 0}));
  const auto zeros = layer_norm(tape.constant(Tensor<double>({1, 4}, 2.5)), gain, bias).value();
  for (double v : zeros.values()) EXPECT_EQ(v, 0.0);

  const auto g2 = tape.constant(Tensor<double>({2}, {1, 1}));
  const auto b2 = tape.constant(Tensor<double>({2}, {0, 0}));
  const auto two = tape.constant(Tensor<double>({1, 2}, {1, 3}));
  const auto exact = layer_norm(two, g2, b2, 0.0).value();
  EXPECT_DOUBLE_EQ(exact[0], -1.0);
  EXPECT_DOUBLE_EQ(exact[1], 1.0);
  // The default eps = 1e-5 shrinks the unit-variance output by 1/sqrt(1 + eps).
  const auto with_eps = layer_norm(two, g2, b2).value();
  EXPECT_NEAR(with_eps[0], -1.0, 1e-5);
  EXPECT_NEAR(with_eps[1], 1.0, 1e-5);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  std::mt19937_64 rng(6);
  Tape<double> tape;
  const auto gain = tape.constant(Tensor<double>(Shape{8}, 1.0));
  const auto bias = tape.constant(Tensor<double>(Shape{8}, 0.0));
  const auto y = layer_norm(tape.constant(random_tensor({5, 8}, rng, -3, 7)), gain, bias, 0.0).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < 8; ++j) m += y.at({r, j});
    m /= 8;
    for (std::size_t j = 0; j < 8; ++j) v += (y.at({r, j}) - m) * (y.at({r, j}) - m);
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v / 8, 1.0, 1e-6);
  }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  expect_grad_ok(check_gradients(
      "layer_norm",
      [](Tape<double>&, const auto& in) { return layer_norm(in[0], in[1], in[2]); },
      {random_tensor({3, 2, 6}, rng), random_tensor({6}, rng, 0.5, 1.5), random_tensor({6}, rng)}, {},
      opts(1e-6)));
}

TEST(Elementwise, TrivialValues) {
  Tape<double> tape;
  const auto r = relu(tape.constant(Tensor<double>({2}, {-1, 2}))).value();
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 2.0);

  std::mt19937_64 rng(8);
  ParameterStore<double> store;
  Linear<double> lin = make_linear(store, "l", 3, 2, rng, Init::zero);
  lin.bias->value[0] = 0.25;
  lin.bias->value[1] = -4.0;
  const auto y = lin(tape.constant(random_tensor({5, 3}, rng))).value();
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(y.at({i, 0}), 0.25);
    EXPECT_EQ(y.at({i, 1}), -4.0);
  }
  EXPECT_EQ(sigmoid(tape.constant(Tensor<double>::scalar(0.0))).value()[0], 0.5);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  const double tol = 1e-6;
  const auto unary = [&](const std::string& name, auto op) {
    expect_grad_ok(check_gradients(
        name, [op](Tape<double>&, const auto& in) { return op(in[0]); }, {off_kink_tensor({4, 5}, rng)}, {},
        opts(tol)));
  };
  unary("relu", [](const Var<double>& x) { return relu(x); });
  unary("gelu", [](const Var<double>& x) { return gelu(x); });
  unary("sigmoid", [](const Var<double>& x) { return sigmoid(x); });
  unary("scale", [](const Var<double>& x) { return scale(x, 2.5); });
  unary("sum", [](const Var<double>& x) { return sum(x); });
  unary("mean", [](const Var<double>& x) { return mean(x); });
  unary("reshape", [](const Var<double>& x) { return reshape(x, Shape{2, 10}); });
  unary("permute", [](const Var<double>& x) { return permute(reshape(x, Shape{2, 2, 5}), {2, 0, 1}); });
  unary("slice", [](const Var<double>& x) { return slice(x, 1, 1, 4); });
  unary("expand", [](const Var<double>& x) { return expand(slice(x, 1, 0, 1), Shape{4, 3}); });

  const auto binary = [&](const std::string& name, Shape b_shape, auto op) {
    expect_grad_ok(check_gradients(
        name, [op](Tape<double>&, const auto& in) { return op(in[0], in[1]); },
        {off_kink_tensor({3, 4, 5}, rng), off_kink_tensor(std::move(b_shape), rng)}, {}, opts(tol)));
  };
  binary("add", {3, 4, 5}, [](const auto& a, const auto& b) { return add(a, b); });
  binary("add-broadcast", {4, 5}, [](const auto& a, const auto& b) { return add(a, b); });
  binary("sub", {3, 4, 5}, [](const auto& a, const auto& b) { return sub(a, b); });
  binary("mul", {3, 4, 5}, [](const auto& a, const auto& b) { return mul(a, b); });
  binary("mul-broadcast", {5}, [](const auto& a, const auto& b) { return mul(a, b); });
  binary("concat", {3, 2, 5}, [](const auto& a, const auto& b) { return concat<double>({a, b, a}, 1); });
  binary("mae", {3, 4, 5}, [](const auto& a, const auto& b) { return mae(a, b); });
  binary("convex_blend", {3, 4, 5}, [&](const auto& a, const auto& b) {
    Tape<double>& t = a.tape();
    return convex_blend(a, b, sigmoid(t.leaf(Tensor<double>({4, 5}, std::vector<double>(20, 0.3)))));
  });

  expect_grad_ok(check_gradients(
      "linear", [](Tape<double>&, const auto& in) { return linear(in[0], in[1], in[2]); },
      {random_tensor({2, 3, 4}, rng), random_tensor({4, 6}, rng), random_tensor({6}, rng)}, {}, opts(tol)));
}

TEST(Elementwise, ConvexBlendAlphaGradient) {
  std::mt19937_64 rng(10);
  expect_grad_ok(check_gradients(
      "convex_blend-alpha",
      [](Tape<double>&, const auto& in) { return convex_blend(in[0], in[1], sigmoid(in[2])); },
      {random_tensor({2, 3, 4}, rng), random_tensor({2, 3, 4}, rng), random_tensor({3, 4}, rng)}, {},
      opts(1e-6)));
}

TEST(Tape, FanOutAccumulates) {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor<double>::scalar(3.0));
  const auto y = add(x, x);
  tape.backward(y);
  EXPECT_EQ(tape.grad(x)[0], 2.0);
}

TEST(Tape, BackwardNeedsScalar) {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor<double>(Shape{2}));
  EXPECT_THROW(tape.backward(x), gid::ShapeError);
}

TEST(Tape, ParameterGradientsAccumulateAcrossUses) {
  Parameter<double> p{"p", Tensor<double>::scalar(2.0), {}};
  Tape<double> tape;
  const auto a = tape.param(p);
  const auto b = tape.param(p);
  tape.backward(mul(a, b));  // d(p*p)/dp = 2p
  EXPECT_EQ(p.grad[0], 4.0);
}

TEST(Attention, SingleTokenReturnsValueProjection) {
  std::mt19937_64 rng(11);
  ParameterStore<double> store;
  MultiHeadAttention<double> mha;
  mha.query = make_linear(store, "q", 8, 8, rng);
  mha.key = make_linear(store, "k", 8, 8, rng);
  mha.value = make_linear(store, "v", 8, 8, rng);
  mha.out = make_linear(store, "o", 8, 8, rng);
  mha.heads = 2;
  Tape<double> tape;
  const auto x = tape.constant(random_tensor({3, 1, 8}, rng));
  const auto got = mha(x, false).value();
  const auto want = mha.out(mha.value(x)).value();
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Attention, IdenticalTokensGetEqualWeights) {
  std::mt19937_64 rng(12);
  Tensor<double> q = random_tensor({1, 2, 4}, rng);
  Tensor<double> k(Shape{1, 2, 4});
  for (std::size_t j = 0; j < 4; ++j) k.at({0, 0, j}) = k.at({0, 1, j}) = 0.7 - 0.3 * double(j);
  const auto p = attention_probs(q, k, 2, false);
  for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Attention, CausalMaskBlocksFuture) {
  std::mt19937_64 rng(13);
  const auto q = random_tensor({2, 5, 4}, rng);
  const auto p = attention_probs(q, q, 1, true);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = i + 1; j < 5; ++j) EXPECT_EQ(p.at({n, 0, i, j}), 0.0);
}

TEST(Attention, IndivisibleHeadsIsConfigError) {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{1, 2, 6}));
  EXPECT_THROW(attention(x, x, x, 4, false), gid::ConfigError);
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  for (bool causal : {false, true}) {
    expect_grad_ok(check_gradients(
        causal ? "attention-causal" : "attention",
        [causal](Tape<double>&, const auto& in) { return attention(in[0], in[1], in[2], 2, causal); },
        {random_tensor({3, 5, 8}, rng), random_tensor({3, 5, 8}, rng), random_tensor({3, 5, 8}, rng)}, {},
        opts(1e-5)));
  }
}

TEST(Attention, TransformerBlockGradient) {
  std::mt19937_64 rng(15);
  ParameterStore<double> store;
  const auto block = make_block(store, "blk", 8, 2, 16, rng);
  expect_grad_ok(check_gradients(
      "transformer-block", [&](Tape<double>&, const auto& in) { return temporal(block, in[0], false); },
      {random_tensor({2, 5, 3, 8}, rng)}, store.all(), opts(1e-5)));
  expect_grad_ok(check_gradients(
      "transformer-block-spatial", [&](Tape<double>&, const auto& in) { return spatial(block, in[0]); },
      {random_tensor({2, 5, 3, 8}, rng)}, store.all(), opts(1e-5)));
}

TEST(RotationKernels, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(16);
  Tensor<double> aa = random_tensor({4, 3}, rng, -2.0, 2.0);
  // One near-zero rotation exercises the series branch.
  aa.at({0, 0}) = 1e-3;
  aa.at({0, 1}) = -2e-3;
  aa.at({0, 2}) = 5e-4;
  expect_grad_ok(check_gradients(
      "rodrigues", [](Tape<double>&, const auto& in) { return rodrigues(in[0]); }, {aa}, {}, opts(1e-6)));

  Tape<double> scratch;
  const Tensor<double> target = rodrigues(scratch.constant(random_tensor({4, 3}, rng, -2, 2))).value();
  expect_grad_ok(check_gradients(
      "geodesic_loss",
      [&](Tape<double>&, const auto& in) { return geodesic_loss(rodrigues(in[0]), target); },
      {random_tensor({4, 3}, rng, -2, 2)}, {}, opts(1e-6)));

  const std::vector<int> parents{-1, 0, 1, 1};
  const std::vector<double> offsets{0, 0, 0, 0, 0.3, 0, 0.2, 0.1, 0, -0.2, 0.1, 0.05};
  expect_grad_ok(check_gradients(
      "fk_positions",
      [&](Tape<double>&, const auto& in) { return fk_positions(rodrigues(in[0]), parents, offsets); },
      {random_tensor({2, 4, 3}, rng, -2, 2)}, {}, opts(1e-6)));

  const Tensor<double> pts = random_tensor({5, 3}, rng);
  expect_grad_ok(check_gradients(
      "mean_distance", [&](Tape<double>&, const auto& in) { return mean_distance(in[0], pts); },
      {random_tensor({5, 3}, rng)}, {}, opts(1e-6)));
}

TEST(RotationKernels, RodriguesMatchesClosedForm) {
  Tape<double> tape;
  const double a = 3.14159265358979323846 / 2;
  const auto r = rodrigues(tape.constant(Tensor<double>({1, 3}, {0, 0, a}))).value();
  const double want[9] = {0, -1, 0, 1, 0, 0, 0, 0, 1};
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(r[i], want[i], 1e-15);
}

TEST(RotationKernels, FkChainPreservesBoneLengths) {
  std::mt19937_64 rng(17);
  Tape<double> tape;
  const std::vector<int> parents{-1, 0, 1};
  const std::vector<double> offsets{0, 0, 0, 0.3, 0, 0, 0.25, 0, 0};
  const auto p = fk_positions(rodrigues(tape.constant(random_tensor({3, 3, 3}, rng, -3, 3))), parents, offsets).value();
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t j = 1; j < 3; ++j) {
      double d2 = 0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double d = p.at({n, j, k}) - p.at({n, j - 1, k});
        d2 += d * d;
      }
      EXPECT_NEAR(std::sqrt(d2), j == 1 ? 0.3 : 0.25, 1e-12);
    }
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter<double> p{"w", Tensor<double>({3}, {1, -2, 3}), {}};
  p.zero_grad();
  Adam<double> adam({&p});
  adam.step(0.1);
  EXPECT_EQ(p.value, Tensor<double>({3}, {1, -2, 3}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter<double> p{"w", Tensor<double>::scalar(0.0), Tensor<double>::scalar(1.0)};
  Adam<double> adam({&p});
  adam.step(0.1);
  EXPECT_NEAR(p.value[0], -0.1, 1e-6);
}

TEST(Adam, MinimizesQuadratic) {
  Parameter<double> p{"x", Tensor<double>::scalar(3.0), {}};
  Adam<double> adam({&p});
  for (int i = 0; i < 200; ++i) {
    adam.zero_grad();
    Tape<double> tape;
    const auto x = tape.param(p);
    tape.backward(mul(x, x));
    adam.step(0.1);
  }
  EXPECT_LT(std::abs(p.value[0]), 0.05);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Parameter<double> p{"backbone.embed.weight", Tensor<double>::scalar(1.0),
                      Tensor<double>::scalar(std::nan(""))};
  Adam<double> adam({&p});
  try {
    adam.step(0.1);
    FAIL() << "expected TrainingError";
  } catch (const gid::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("backbone.embed.weight"), std::string::npos);
  }
  EXPECT_EQ(p.value[0], 1.0);
}

TEST(Optim, ClipAndCosineSchedule) {
  Parameter<double> p{"w", Tensor<double>({2}, {0, 0}), Tensor<double>({2}, {3, 4})};
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>({&p}, 1.0), 5.0);
  EXPECT_NEAR(grad_norm<double>({&p}), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0, 100), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 50, 100), 5e-4, 1e-15);
  EXPECT_NEAR(cosine_lr(1e-3, 100, 100), 0.0, 1e-18);
}
