#include "gid/gradsuite.hpp"

#include "gid/gidnet.hpp"
#include "gid/nn.hpp"
#include "gid/ops.hpp"
#include "gid/posenet.hpp"

#include <random>

namespace gid::nn {

namespace {

using In = std::vector<Var<double>>;

Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Bounded away from zero so kinked kernels are probed off their kinks.
Tensor<double> off_kink(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.5);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

void perturb(const std::vector<Parameter<double>*>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto* p : params)
    for (double& v : p->value.values()) v += n(rng);
}

}  // namespace

std::vector<GradCheckResult> gradient_suite(std::uint64_t seed) {
  std::vector<GradCheckResult> out;
  std::mt19937_64 rng(seed);
  GradCheckOptions tight;
  tight.tolerance = kElementwiseTolerance;
  tight.seed = seed + 1;
  GradCheckOptions loose = tight;
  loose.tolerance = kAttentionTolerance;

  auto run = [&](const std::string& name, const GradFn& fn, std::vector<Tensor<double>> inputs,
                 const std::vector<Parameter<double>*>& params, const GradCheckOptions& o) {
    out.push_back(check_gradients(name, fn, std::move(inputs), params, o));
  };
  auto unary = [&](const std::string& name, auto op) {
    run(name, [op](Tape<double>&, const In& in) { return op(in[0]); }, {off_kink({4, 5}, rng)}, {}, tight);
  };
  auto binary = [&](const std::string& name, Shape b, auto op) {
    run(name, [op](Tape<double>&, const In& in) { return op(in[0], in[1]); },
        {off_kink({3, 4, 5}, rng), off_kink(std::move(b), rng)}, {}, tight);
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
  for (std::size_t axis : {0u, 1u}) {
    unary("softmax-axis" + std::to_string(axis), [axis](const Var<double>& x) { return softmax(x, axis); });
  }
  binary("add", {3, 4, 5}, [](const auto& a, const auto& b) { return add(a, b); });
  binary("add-broadcast", {4, 5}, [](const auto& a, const auto& b) { return add(a, b); });
  binary("sub", {3, 4, 5}, [](const auto& a, const auto& b) { return sub(a, b); });
  binary("mul", {3, 4, 5}, [](const auto& a, const auto& b) { return mul(a, b); });
  binary("concat", {3, 2, 5}, [](const auto& a, const auto& b) { return concat<double>({a, b, a}, 1); });
  binary("mae", {3, 4, 5}, [](const auto& a, const auto& b) { return mae(a, b); });

  run("matmul", [](Tape<double>&, const In& in) { return matmul(in[0], in[1]); },
      {uniform({2, 3, 4}, rng), uniform({4, 5}, rng)}, {}, tight);
  run("matmul-batched", [](Tape<double>&, const In& in) { return matmul(in[0], in[1]); },
      {uniform({2, 3, 4}, rng), uniform({2, 4, 2}, rng)}, {}, tight);
  run("linear", [](Tape<double>&, const In& in) { return linear(in[0], in[1], in[2]); },
      {uniform({2, 3, 4}, rng), uniform({4, 6}, rng), uniform({6}, rng)}, {}, tight);
  run("layer_norm", [](Tape<double>&, const In& in) { return layer_norm(in[0], in[1], in[2]); },
      {uniform({3, 2, 6}, rng), uniform({6}, rng, 0.5, 1.5), uniform({6}, rng)}, {}, tight);
  run("convex_blend", [](Tape<double>&, const In& in) { return convex_blend(in[0], in[1], sigmoid(in[2])); },
      {uniform({2, 3, 4}, rng), uniform({2, 3, 4}, rng), uniform({3, 4}, rng)}, {}, tight);

  Tensor<double> aa = uniform({4, 3}, rng, -2.0, 2.0);
  aa.at({0, 0}) = 1e-3;  // series branch near the identity
  aa.at({0, 1}) = -2e-3;
  aa.at({0, 2}) = 5e-4;
  run("rodrigues", [](Tape<double>&, const In& in) { return rodrigues(in[0]); }, {aa}, {}, tight);
  Tape<double> scratch;
  const Tensor<double> target = rodrigues(scratch.constant(uniform({4, 3}, rng, -2, 2))).value();
  run("geodesic_loss", [&](Tape<double>&, const In& in) { return geodesic_loss(rodrigues(in[0]), target); },
      {uniform({4, 3}, rng, -2, 2)}, {}, tight);
  const std::vector<int> parents{-1, 0, 1, 1};
  const std::vector<double> offsets{0, 0, 0, 0, 0.3, 0, 0.2, 0.1, 0, -0.2, 0.1, 0.05};
  run("fk_positions",
      [&](Tape<double>&, const In& in) { return fk_positions(rodrigues(in[0]), parents, offsets); },
      {uniform({2, 4, 3}, rng, -2, 2)}, {}, tight);
  const Tensor<double> pts = uniform({5, 3}, rng);
  run("mean_distance", [&](Tape<double>&, const In& in) { return mean_distance(in[0], pts); },
      {uniform({5, 3}, rng)}, {}, tight);

  for (bool causal : {false, true}) {
    run(causal ? "attention-causal" : "attention",
        [causal](Tape<double>&, const In& in) { return attention(in[0], in[1], in[2], 2, causal); },
        {uniform({3, 5, 8}, rng), uniform({3, 5, 8}, rng), uniform({3, 5, 8}, rng)}, {}, loose);
  }
  ParameterStore<double> store;
  const auto block = make_block(store, "blk", 8, 2, 16, rng);
  run("block-temporal", [&](Tape<double>&, const In& in) { return temporal(block, in[0], false); },
      {uniform({2, 5, 3, 8}, rng)}, store.all(), loose);
  run("block-spatial", [&](Tape<double>&, const In& in) { return spatial(block, in[0]); },
      {uniform({2, 5, 3, 8}, rng)}, store.all(), loose);

  GidConfig g;
  g.window = 8;
  g.sensors = 2;
  g.dim = 8;
  g.heads = 2;
  g.ff_hidden = 12;
  g.expert_hidden = 10;
  for (auto v : {Variant::full, Variant::no_lsd, Variant::no_acf}) {
    for (bool causal : {false, true}) {
      g.variant = v;
      GidNet<double> net(g);
      perturb(net.parameters().all(), seed + 11);
      run("gid-" + to_string(v) + (causal ? "-causal" : ""),
          [&](Tape<double>&, const In& in) { return net.forward(in[0], causal); }, {uniform({1, 8, 2, 12}, rng)},
          net.parameters().all(), loose);
    }
  }

  PoseNetConfig pc;
  pc.window = 8;
  pc.sensors = 2;
  pc.joints = 4;
  pc.dim = 8;
  pc.heads = 2;
  pc.ff_hidden = 12;
  pc.layers = 1;
  PoseNet<double> pose(pc);
  perturb(pose.parameters().all(), seed + 13);
  PoseTargets<double> pt;
  Tape<double> t2;
  pt.rot = reshape(rodrigues(t2.constant(uniform({1, 8, 4, 3}, rng, -1, 1))), Shape{1, 8, 4, 9}).value();
  pt.pos = uniform({8, 4, 3}, rng);
  run("posenet", [&](Tape<double>&, const In& in) { return pose.forward(in[0], false); },
      {uniform({1, 8, 2, 12}, rng)}, pose.parameters().all(), loose);
  run("posenet-loss",
      [&](Tape<double>&, const In& in) { return pose_loss(pose.forward(in[0], false), pt, parents, offsets); },
      {uniform({1, 8, 2, 12}, rng)}, pose.parameters().all(), loose);
  return out;
}

}  // namespace gid::nn
