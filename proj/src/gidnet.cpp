#include "gid/gidnet.hpp"

#include <random>

namespace gid::nn {

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::scalar:
      return "scalar";
    case Fusion::per_sensor:
      return "per_sensor";
    case Fusion::per_channel:
      return "per_channel";
  }
  return "?";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full:
      return "full";
    case Variant::no_lsd:
      return "no_lsd";
    case Variant::no_acf:
      return "no_acf";
  }
  return "?";
}

Fusion parse_fusion(const std::string& s) {
  if (s == "scalar") return Fusion::scalar;
  if (s == "per_sensor") return Fusion::per_sensor;
  if (s == "per_channel") return Fusion::per_channel;
  throw ConfigError("unknown fusion granularity '" + s + "'");
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_lsd") return Variant::no_lsd;
  if (s == "no_acf") return Variant::no_acf;
  throw ConfigError("unknown denoiser variant '" + s + "' (expected full, no_lsd or no_acf)");
}

void GidConfig::validate() const {
  if (window < 8) throw ConfigError("window_len must be at least 8, got " + std::to_string(window));
  if (sensors == 0 || channels == 0 || dim == 0 || expert_hidden == 0 || ff_hidden == 0) {
    throw ConfigError("denoiser sizes must be positive");
  }
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("model dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
  }
  if (temporal_blocks + spatial_blocks == 0) throw ConfigError("backbone needs at least one block");
}

KeyValueText GidConfig::to_text() const {
  KeyValueText kv;
  kv.set("window_len", std::to_string(window));
  kv.set("sensors", std::to_string(sensors));
  kv.set("channels", std::to_string(channels));
  kv.set("model_dim", std::to_string(dim));
  kv.set("temporal_blocks", std::to_string(temporal_blocks));
  kv.set("spatial_blocks", std::to_string(spatial_blocks));
  kv.set("heads", std::to_string(heads));
  kv.set("ff_hidden", std::to_string(ff_hidden));
  kv.set("expert_hidden", std::to_string(expert_hidden));
  kv.set("refine_blocks", std::to_string(refine_blocks));
  kv.set("fusion", to_string(fusion));
  kv.set("variant", to_string(variant));
  kv.set("shared_backbone", shared_backbone ? "1" : "0");
  kv.set("init_seed", std::to_string(init_seed));
  return kv;
}

GidConfig GidConfig::from_text(const KeyValueText& kv) {
  GidConfig c;
  auto size = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.window = size("window_len", c.window);
  c.sensors = size("sensors", c.sensors);
  c.channels = size("channels", c.channels);
  c.dim = size("model_dim", c.dim);
  c.temporal_blocks = size("temporal_blocks", c.temporal_blocks);
  c.spatial_blocks = size("spatial_blocks", c.spatial_blocks);
  c.heads = size("heads", c.heads);
  c.ff_hidden = size("ff_hidden", c.ff_hidden);
  c.expert_hidden = size("expert_hidden", c.expert_hidden);
  c.refine_blocks = size("refine_blocks", c.refine_blocks);
  c.fusion = parse_fusion(kv.get_string("fusion", to_string(c.fusion)));
  c.variant = parse_variant(kv.get_string("variant", to_string(c.variant)));
  c.shared_backbone = kv.get_int("shared_backbone", c.shared_backbone ? 1 : 0) != 0;
  c.init_seed = static_cast<std::uint64_t>(kv.get_int("init_seed", static_cast<std::int64_t>(c.init_seed)));
  c.validate();
  return c;
}

namespace {

template <typename T>
void fill_normal(Parameter<T>& p, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  for (T& v : p.value.values()) v = static_cast<T>(n(rng));
}

template <typename T>
Var<T> add_embeddings(const Var<T>& h, Parameter<T>& pos, Parameter<T>& sensor) {
  Tape<T>& tape = h.tape();
  const std::size_t Tn = h.dim(1), M = h.dim(2), d = h.dim(3);
  if (Tn > pos.value.dim(0)) {
    throw ShapeError("window of " + std::to_string(Tn) + " frames exceeds positional table of " +
                     std::to_string(pos.value.dim(0)));
  }
  Var<T> p = reshape(slice(tape.param(pos), 0, 0, Tn), Shape{Tn, 1, d});
  Var<T> out = add(h, expand(p, Shape{Tn, M, d}));
  return add(out, tape.param(sensor));
}

}  // namespace

template <typename T>
Backbone<T> GidNet<T>::make_backbone(const std::string& prefix, std::mt19937_64& rng) {
  const GidConfig& c = config_;
  Backbone<T> b;
  b.embed = make_linear(store_, prefix + ".embed", c.channels, c.dim, rng);
  b.pos = &store_.add(prefix + ".pos", Shape{c.window, c.dim});
  fill_normal(*b.pos, rng, 0.1);
  b.sensor = &store_.add(prefix + ".sensor", Shape{c.sensors, c.dim});
  fill_normal(*b.sensor, rng, 0.1);
  std::size_t t = c.temporal_blocks, s = c.spatial_blocks, i = 0;
  while (t + s > 0) {
    if (t > 0) {
      b.blocks.push_back(make_block(store_, prefix + ".block" + std::to_string(i++), c.dim, c.heads, c.ff_hidden, rng));
      b.is_temporal.push_back(true);
      --t;
    }
    if (s > 0) {
      b.blocks.push_back(make_block(store_, prefix + ".block" + std::to_string(i++), c.dim, c.heads, c.ff_hidden, rng));
      b.is_temporal.push_back(false);
      --s;
    }
  }
  return b;
}

template <typename T>
GidNet<T>::GidNet(const GidConfig& config) : config_(config) {
  config_.validate();
  const GidConfig& c = config_;
  std::mt19937_64 rng(c.init_seed);
  const std::size_t nb = c.shared_backbone ? 1 : c.sensors;
  for (std::size_t m = 0; m < nb; ++m) {
    backbones_.push_back(make_backbone(c.shared_backbone ? "backbone" : "backbone" + std::to_string(m), rng));
  }
  const std::size_t ne = c.variant == Variant::no_lsd ? 1 : c.sensors;
  for (std::size_t m = 0; m < ne; ++m) {
    const std::string name = c.variant == Variant::no_lsd ? "expert" : "expert" + std::to_string(m);
    Expert<T> e;
    e.fc1 = make_linear(store_, name + ".fc1", c.dim, c.expert_hidden, rng);
    e.fc2 = make_linear(store_, name + ".fc2", c.expert_hidden, c.channels, rng, Init::zero);
    experts_.push_back(e);
  }
  if (c.variant != Variant::no_acf) {
    const Shape shape = c.fusion == Fusion::scalar       ? Shape{1, 1}
                        : c.fusion == Fusion::per_sensor ? Shape{c.sensors, 1}
                                                         : Shape{c.sensors, c.channels};
    fusion_ = &store_.add("fusion.a", shape);
  }
  GidConfig rc = c;
  rc.temporal_blocks = c.refine_blocks;
  rc.spatial_blocks = c.refine_blocks;
  std::swap(config_, rc);
  refine_ = make_backbone("refine", rng);
  std::swap(config_, rc);
  refine_out_ = make_linear(store_, "refine.out", c.dim, c.channels, rng, Init::zero);
}

template <typename T>
Var<T> GidNet<T>::run_backbone(const Backbone<T>& b, const Var<T>& x, bool causal) const {
  Var<T> h = add_embeddings(b.embed(x), *b.pos, *b.sensor);
  for (std::size_t i = 0; i < b.blocks.size(); ++i) {
    h = b.is_temporal[i] ? temporal(b.blocks[i], h, causal) : spatial(b.blocks[i], h);
  }
  return h;
}

template <typename T>
Var<T> GidNet<T>::backbone_forward(const Var<T>& x, bool causal) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[2] != config_.sensors || s[3] != config_.channels || s[1] > config_.window) {
    throw ShapeError("denoiser input must be [B, <=" + std::to_string(config_.window) + ", " +
                     std::to_string(config_.sensors) + ", " + std::to_string(config_.channels) + "], got " +
                     to_string(s));
  }
  if (config_.shared_backbone) return run_backbone(backbones_[0], x, causal);
  std::vector<Var<T>> parts;
  for (std::size_t m = 0; m < config_.sensors; ++m) {
    parts.push_back(slice(run_backbone(backbones_[m], x, causal), 2, m, m + 1));
  }
  return concat(parts, 2);
}

template <typename T>
Var<T> GidNet<T>::expert_forward(const Var<T>& features_m, const Var<T>& input_m, std::size_t m) const {
  if (m >= config_.sensors) {
    throw ConfigError("no expert for sensor " + std::to_string(m) + " (layout has " +
                      std::to_string(config_.sensors) + ")");
  }
  const Expert<T>& e = experts_[config_.variant == Variant::no_lsd ? 0 : m];
  return add(input_m, e.fc2(gelu(e.fc1(features_m))));
}

template <typename T>
Var<T> GidNet<T>::experts_forward(const Var<T>& features, const Var<T>& x) const {
  if (config_.variant == Variant::no_lsd) {
    const Expert<T>& e = experts_[0];
    return add(x, e.fc2(gelu(e.fc1(features))));
  }
  const std::size_t B = x.dim(0), Tn = x.dim(1), C = x.dim(3), d = features.dim(3);
  std::vector<Var<T>> parts;
  for (std::size_t m = 0; m < config_.sensors; ++m) {
    Var<T> fm = reshape(slice(features, 2, m, m + 1), Shape{B, Tn, d});
    Var<T> xm = reshape(slice(x, 2, m, m + 1), Shape{B, Tn, C});
    parts.push_back(reshape(expert_forward(fm, xm, m), Shape{B, Tn, 1, C}));
  }
  return concat(parts, 2);
}

template <typename T>
Var<T> GidNet<T>::fuse(const Var<T>& denoised, const Var<T>& loose) const {
  if (fusion_ == nullptr) return denoised;
  Tape<T>& tape = denoised.tape();
  Var<T> alpha = expand(sigmoid(tape.param(*fusion_)), Shape{config_.sensors, config_.channels});
  return convex_blend(denoised, loose, alpha);
}

template <typename T>
Var<T> GidNet<T>::refine(const Var<T>& fused, bool causal) const {
  return add(fused, refine_out_(run_backbone(refine_, fused, causal)));
}

template <typename T>
Var<T> GidNet<T>::forward(const Var<T>& x, bool causal) const {
  Var<T> features = backbone_forward(x, causal);
  Var<T> denoised = experts_forward(features, x);
  return refine(fuse(denoised, x), causal);
}

template <typename T>
Tensor<T> GidNet<T>::alpha() const {
  Tensor<T> out(Shape{config_.sensors, config_.channels}, T(1));
  if (fusion_ == nullptr) return out;
  const Tensor<T>& a = fusion_->value;
  for (std::size_t m = 0; m < config_.sensors; ++m)
    for (std::size_t c = 0; c < config_.channels; ++c) {
      const std::size_t i = a.dim(0) == 1 ? 0 : m;
      const std::size_t j = a.dim(1) == 1 ? 0 : c;
      out.at({m, c}) = T(1) / (T(1) + std::exp(-a.at({i, j})));
    }
  return out;
}

template <typename T>
Tensor<T> GidNet<T>::infer(const Tensor<T>& x, bool causal) const {
  Tape<T> tape;
  tape.set_grad_enabled(false);
  return forward(tape.constant(x), causal).value();
}

template <typename T>
io::Checkpoint gid_checkpoint(const GidNet<T>& net, const std::map<std::string, std::string>& meta) {
  io::Checkpoint ckpt;
  ckpt.magic = kGidMagic;
  ckpt.config = net.config().to_text();
  for (const auto& [k, v] : meta) io::set_meta(ckpt.config, k, v);
  ckpt.sections = io::pack(net.parameters());
  return ckpt;
}

template <typename T>
std::unique_ptr<GidNet<T>> gid_from_checkpoint(const io::Checkpoint& ckpt) {
  if (ckpt.magic != kGidMagic) throw FormatError("not a denoiser checkpoint (magic " + ckpt.magic + ")");
  auto net = std::make_unique<GidNet<T>>(GidConfig::from_text(ckpt.config));
  io::unpack(ckpt.sections, net->parameters());
  return net;
}

template class GidNet<float>;
template class GidNet<double>;
template io::Checkpoint gid_checkpoint(const GidNet<float>&, const std::map<std::string, std::string>&);
template io::Checkpoint gid_checkpoint(const GidNet<double>&, const std::map<std::string, std::string>&);
template std::unique_ptr<GidNet<float>> gid_from_checkpoint(const io::Checkpoint&);
template std::unique_ptr<GidNet<double>> gid_from_checkpoint(const io::Checkpoint&);

}  // namespace gid::nn
