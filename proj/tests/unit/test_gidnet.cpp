#include "gid/errors.hpp"
#include "gid/gidnet.hpp"
#include "gid/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <thread>

using namespace gid::nn;

namespace {

template <typename T>
Tensor<T> random_window(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
std::vector<T> flat(const Tensor<T>& t) {
  return {t.data(), t.data() + t.size()};
}

GidConfig tiny(Variant v = Variant::full) {
  GidConfig c;
  c.window = 8;
  c.sensors = 2;
  c.dim = 8;
  c.heads = 2;
  c.ff_hidden = 12;
  c.expert_hidden = 10;
  c.variant = v;
  return c;
}

// Moves every parameter off its initial value so zero-initialized layers and
// the fusion logits take part in the check.
template <typename T>
void scramble(GidNet<T>& net, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto* p : net.parameters().all())
    for (T& v : p->value.values()) v += static_cast<T>(n(rng));
}

GradCheckOptions opts(double tol) {
  GradCheckOptions o;
  o.tolerance = tol;
  o.seed = 5;
  return o;
}

}  // namespace

TEST(GidNet, OutputShapes) {
  GidNet<double> net(tiny());
  std::mt19937_64 rng(1);
  Tape<double> tape;
  auto x = tape.constant(random_window<double>({3, 8, 2, 12}, rng));
  EXPECT_EQ(net.backbone_forward(x, false).shape(), (Shape{3, 8, 2, 8}));
  EXPECT_EQ(net.forward(x).shape(), (Shape{3, 8, 2, 12}));
  auto shorter = tape.constant(random_window<double>({1, 5, 2, 12}, rng));
  EXPECT_EQ(net.forward(shorter).shape(), (Shape{1, 5, 2, 12}));
  EXPECT_THROW(net.forward(tape.constant(random_window<double>({1, 9, 2, 12}, rng))), gid::ShapeError);
  EXPECT_THROW(net.forward(tape.constant(random_window<double>({1, 8, 3, 12}, rng))), gid::ShapeError);
}

TEST(GidNet, ConfigValidation) {
  GidConfig c = tiny();
  c.heads = 3;
  EXPECT_THROW(GidNet<float>{c}, gid::ConfigError);
  c = tiny();
  c.window = 7;
  EXPECT_THROW(GidNet<float>{c}, gid::ConfigError);
  EXPECT_THROW(parse_variant("no_fps"), gid::ConfigError);
  EXPECT_EQ(GidConfig::from_text(tiny(Variant::no_acf).to_text()), tiny(Variant::no_acf));
}

TEST(GidNet, IdentityAtInitExact) {
  GidNet<float> net{GidConfig{}};
  std::mt19937_64 rng(7);
  const auto x = random_window<float>({100, 64, 6, 12}, rng);
  const auto y = net.infer(x);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(y[i], x[i]) << "element " << i;
  const auto yc = net.infer(x, true);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(yc[i], x[i]);
}

TEST(GidNet, IdentityAtInitForEveryVariant) {
  std::mt19937_64 rng(8);
  const auto x = random_window<double>({2, 8, 2, 12}, rng);
  for (auto v : {Variant::full, Variant::no_lsd, Variant::no_acf}) {
    for (bool shared : {true, false}) {
      GidConfig c = tiny(v);
      c.shared_backbone = shared;
      GidNet<double> net(c);
      const auto y = net.infer(x);
      for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(y[i], x[i]);
    }
  }
}

TEST(GidNet, BackboneSensorPermutationEquivariance) {
  GidConfig c = tiny();
  c.sensors = 4;
  GidNet<double> net(c);
  scramble(net, 3);
  std::mt19937_64 rng(4);
  const auto x = random_window<double>({2, 8, 4, 12}, rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor<double> xp(x.shape());
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t ch = 0; ch < 12; ++ch) xp.at({b, t, m, ch}) = x.at({b, t, perm[m], ch});

  Tape<double> tape;
  const auto f = net.backbone_forward(tape.constant(x), false).value();
  auto* sensor = net.parameters().find("backbone.sensor");
  ASSERT_NE(sensor, nullptr);
  const Tensor<double> orig = sensor->value;
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t k = 0; k < c.dim; ++k) sensor->value.at({m, k}) = orig.at({perm[m], k});
  const auto fp = net.backbone_forward(tape.constant(xp), false).value();
  double worst = 0.0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 8; ++t)
      for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t k = 0; k < c.dim; ++k)
          worst = std::max(worst, std::abs(fp.at({b, t, m, k}) - f.at({b, t, perm[m], k})));
  EXPECT_LT(worst, 1e-12);
}

TEST(GidNet, EndToEndGradientCheck) {
  for (auto v : {Variant::full, Variant::no_lsd, Variant::no_acf}) {
    for (bool causal : {false, true}) {
      GidNet<double> net(tiny(v));
      scramble(net, 11);
      std::mt19937_64 rng(12);
      const auto r = check_gradients(
          "gid-" + to_string(v), [&](Tape<double>&, const auto& in) { return net.forward(in[0], causal); },
          {random_window<double>({1, 8, 2, 12}, rng)}, net.parameters().all(), opts(1e-5));
      EXPECT_TRUE(r.passed) << r.name << " causal=" << causal << " rel " << r.max_rel_error;
      EXPECT_GE(r.probes, 20u);
    }
  }
}

TEST(GidNet, PerSensorBackboneGradientCheck) {
  GidConfig c = tiny();
  c.shared_backbone = false;
  c.fusion = Fusion::per_channel;
  GidNet<double> net(c);
  scramble(net, 13);
  std::mt19937_64 rng(14);
  const auto r = check_gradients(
      "gid-unshared", [&](Tape<double>&, const auto& in) { return net.forward(in[0]); },
      {random_window<double>({1, 8, 2, 12}, rng)}, net.parameters().all(), opts(1e-5));
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(GidNet, RefineGradientCheck) {
  GidNet<double> net(tiny());
  scramble(net, 15);
  std::vector<Parameter<double>*> refine_params;
  for (auto* p : net.parameters().all())
    if (p->name.rfind("refine.", 0) == 0) refine_params.push_back(p);
  ASSERT_FALSE(refine_params.empty());
  std::mt19937_64 rng(16);
  const auto r = check_gradients(
      "refine", [&](Tape<double>&, const auto& in) { return net.refine(in[0], false); },
      {random_window<double>({2, 8, 2, 12}, rng)}, refine_params, opts(1e-5));
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(GidNet, RefineIsIdentityAtInit) {
  GidNet<double> net(tiny());
  std::mt19937_64 rng(17);
  Tape<double> tape;
  const auto x = random_window<double>({1, 8, 2, 12}, rng);
  const auto y = net.refine(tape.constant(x), false).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(GidNet, ExpertIsolation) {
  GidNet<double> net(tiny());
  scramble(net, 21);
  std::mt19937_64 rng(22);
  const auto x = random_window<double>({1, 8, 2, 12}, rng);
  Tape<double> tape;
  auto xv = tape.constant(x);
  auto features = tape.constant(net.backbone_forward(xv, false).value());
  const auto before = net.experts_forward(features, xv).value();
  for (auto* p : net.parameters().all())
    if (p->name.rfind("expert1.", 0) == 0)
      for (double& v : p->value.values()) v += 0.5;
  const auto after = net.experts_forward(features, xv).value();
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t ch = 0; ch < 12; ++ch) {
      EXPECT_EQ(after.at({0, t, 0, ch}), before.at({0, t, 0, ch}));
      EXPECT_NE(after.at({0, t, 1, ch}), before.at({0, t, 1, ch}));
    }
  EXPECT_THROW(net.expert_forward(tape.constant(Tensor<double>({1, 8, 8})),
                                  tape.constant(Tensor<double>({1, 8, 12})), 2),
               gid::ConfigError);
}

TEST(GidNet, MaskedLossLeavesOtherExpertGradientsZero) {
  GidNet<double> net(tiny());
  scramble(net, 23);
  std::mt19937_64 rng(24);
  Tape<double> tape;
  // Denoiser output before fusion and refinement; the refinement stage mixes
  // sensors by design.
  auto x = tape.constant(random_window<double>({1, 8, 2, 12}, rng));
  auto y = net.experts_forward(net.backbone_forward(x, false), x);
  Tensor<double> mask(y.shape());
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t ch = 0; ch < 12; ++ch) mask.at({0, t, 0, ch}) = 1.0;
  for (auto* p : net.parameters().all()) p->zero_grad();
  tape.backward(sum(mul(y, tape.constant(mask))));
  double g0 = 0.0, g1 = 0.0;
  for (auto* p : net.parameters().all()) {
    double s = 0.0;
    for (double v : p->grad.values()) s += std::abs(v);
    if (p->name.rfind("expert0.", 0) == 0) g0 += s;
    if (p->name.rfind("expert1.", 0) == 0) g1 += s;
  }
  EXPECT_GT(g0, 0.0);
  EXPECT_EQ(g1, 0.0);
}

TEST(GidNet, FusionLimitsAndConvexity) {
  GidNet<double> net(tiny());
  std::mt19937_64 rng(31);
  Tape<double> tape;
  const auto d = random_window<double>({2, 8, 2, 12}, rng);
  const auto l = random_window<double>({2, 8, 2, 12}, rng);
  auto dv = tape.constant(d), lv = tape.constant(l);
  auto mid = net.fuse(dv, lv).value();
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_DOUBLE_EQ(mid[i], 0.5 * (d[i] + l[i]));
  auto* a = net.parameters().find("fusion.a");
  ASSERT_NE(a, nullptr);
  EXPECT_EQ(a->value.shape(), (Shape{2, 1}));
  a->value.fill(40.0);
  auto hi = net.fuse(dv, lv).value();
  a->value.fill(-40.0);
  auto lo = net.fuse(dv, lv).value();
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_NEAR(hi[i], d[i], 1e-15);
    EXPECT_NEAR(lo[i], l[i], 1e-15);
  }
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    for (double& v : a->value.values()) v = n(rng);
    const auto f = net.fuse(dv, lv).value();
    for (std::size_t i = 0; i < d.size(); ++i) {
      ASSERT_GE(f[i], std::min(d[i], l[i]) - 1e-15);
      ASSERT_LE(f[i], std::max(d[i], l[i]) + 1e-15);
    }
  }
}

TEST(GidNet, FusionGranularityShapes) {
  GidConfig c = tiny();
  c.fusion = Fusion::scalar;
  EXPECT_EQ(GidNet<float>(c).parameters().find("fusion.a")->value.shape(), (Shape{1, 1}));
  c.fusion = Fusion::per_channel;
  GidNet<float> pc(c);
  EXPECT_EQ(pc.parameters().find("fusion.a")->value.shape(), (Shape{2, 12}));
  EXPECT_EQ(pc.alpha().shape(), (Shape{2, 12}));
  EXPECT_FLOAT_EQ(pc.alpha()[0], 0.5f);
  GidNet<float> noacf(tiny(Variant::no_acf));
  EXPECT_EQ(noacf.parameters().find("fusion.a"), nullptr);
  EXPECT_EQ(noacf.alpha()[5], 1.0f);
}

TEST(GidNet, NoLsdHasFewerParameters) {
  auto count = [](const GidNet<float>& n) {
    std::size_t s = 0;
    for (auto* p : n.parameters().all()) s += p->value.size();
    return s;
  };
  GidNet<float> full{GidConfig{}};
  GidConfig c;
  c.variant = Variant::no_lsd;
  GidNet<float> shared(c);
  EXPECT_LT(count(shared), count(full));
  EXPECT_LT(count(full), 1000000u);
}

TEST(GidNet, CheckpointRoundTripIsBitwise) {
  GidConfig c = tiny();
  c.fusion = Fusion::per_channel;
  GidNet<float> net(c);
  scramble(net, 41);
  const auto ckpt = gid_checkpoint(net, {{"seed", "1"}, {"epochs", "3"}});
  const std::string bytes = gid::io::encode(ckpt);
  EXPECT_EQ(bytes.substr(0, 4), "GIDC");
  const auto back = gid_from_checkpoint<float>(gid::io::decode(bytes, kGidMagic));
  EXPECT_EQ(back->config(), net.config());
  const auto a = net.parameters().all(), b = back->parameters().all();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_EQ(flat(a[i]->value), flat(b[i]->value));
  }
  EXPECT_EQ(gid::io::encode(gid_checkpoint(*back, {{"seed", "1"}, {"epochs", "3"}})), bytes);
  EXPECT_EQ(gid::io::get_meta(gid::io::decode(bytes, kGidMagic).config, "epochs"), "3");
  std::mt19937_64 rng(42);
  const auto x = random_window<float>({2, 8, 2, 12}, rng);
  EXPECT_EQ(flat(net.infer(x)), flat(back->infer(x)));
}

TEST(GidNet, CheckpointRejectsCorruption) {
  GidNet<float> net(tiny());
  std::string bytes = gid::io::encode(gid_checkpoint(net));
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(gid::io::decode(flipped, kGidMagic), gid::FormatError);
  EXPECT_THROW(gid::io::decode(bytes.substr(0, bytes.size() - 9), kGidMagic), gid::FormatError);
  EXPECT_THROW(gid::io::decode(bytes, "POSC"), gid::FormatError);
  auto ckpt = gid::io::decode(bytes, kGidMagic);
  ckpt.sections[0].shape = {1, ckpt.sections[0].data.size()};
  EXPECT_THROW(gid_from_checkpoint<float>(ckpt), gid::FormatError);
}

TEST(GidNet, ConcurrentInferenceMatchesSerial) {
  GidNet<float> net(tiny());
  scramble(net, 51);
  std::mt19937_64 rng(52);
  const auto x = random_window<float>({4, 8, 2, 12}, rng);
  const auto ref = net.infer(x);
  std::vector<Tensor<float>> out(4);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < out.size(); ++i) threads.emplace_back([&, i] { out[i] = net.infer(x); });
  for (auto& t : threads) t.join();
  for (const auto& o : out) EXPECT_EQ(flat(o), flat(ref));
}

TEST(Stitch, WindowStarts) {
  EXPECT_EQ(window_starts(5, 8, 4), (std::vector<std::size_t>{0}));
  EXPECT_EQ(window_starts(16, 8, 4), (std::vector<std::size_t>{0, 4, 8}));
  EXPECT_EQ(window_starts(18, 8, 4), (std::vector<std::size_t>{0, 4, 8, 10}));
}

TEST(Stitch, IdentityModelReproducesSequence) {
  std::mt19937_64 rng(61);
  for (std::size_t frames : {3u, 8u, 37u, 100u}) {
    const auto seq = random_window<float>({frames, 2, 12}, rng);
    const auto y = stitch_windows(seq, 8, 24, [](const Tensor<float>& b) { return b; });
    ASSERT_EQ(y.shape(), (Shape{frames, 24}));
    for (std::size_t i = 0; i < seq.size(); ++i) ASSERT_EQ(y[i], seq[i]);
  }
}

TEST(Stitch, CrossFadeBlendsOverlaps) {
  // Each window reports its own start frame; frame 6 lies in windows 0 and 4
  // with tent weights 2 and 3.
  Tensor<double> seq({16, 1});
  for (std::size_t f = 0; f < 16; ++f) seq[f] = static_cast<double>(f);
  const auto y = stitch_windows(seq, 8, 1, [](const Tensor<double>& b) {
    Tensor<double> out({b.dim(0), 8, 1});
    for (std::size_t i = 0; i < b.dim(0); ++i)
      for (std::size_t t = 0; t < 8; ++t) out.at({i, t, 0}) = b.at({i, 0, 0});
    return out;
  });
  EXPECT_DOUBLE_EQ(y[6], (2.0 * 0.0 + 3.0 * 4.0) / 5.0);
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[15], 8.0);
}
