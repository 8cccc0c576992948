#include "gid/posenet.hpp"

#include "gid/errors.hpp"

#include <random>

namespace gid::nn {

void PoseNetConfig::validate() const {
  if (window < 8) throw ConfigError("window_len must be at least 8, got " + std::to_string(window));
  if (sensors == 0 || channels == 0 || joints == 0 || dim == 0 || layers == 0 || ff_hidden == 0) {
    throw ConfigError("pose predictor sizes must be positive");
  }
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("model dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
  }
}

KeyValueText PoseNetConfig::to_text() const {
  KeyValueText kv;
  kv.set("window_len", std::to_string(window));
  kv.set("sensors", std::to_string(sensors));
  kv.set("channels", std::to_string(channels));
  kv.set("joints", std::to_string(joints));
  kv.set("model_dim", std::to_string(dim));
  kv.set("layers", std::to_string(layers));
  kv.set("heads", std::to_string(heads));
  kv.set("ff_hidden", std::to_string(ff_hidden));
  kv.set("init_seed", std::to_string(init_seed));
  return kv;
}

PoseNetConfig PoseNetConfig::from_text(const KeyValueText& kv) {
  PoseNetConfig c;
  auto size = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.window = size("window_len", c.window);
  c.sensors = size("sensors", c.sensors);
  c.channels = size("channels", c.channels);
  c.joints = size("joints", c.joints);
  c.dim = size("model_dim", c.dim);
  c.layers = size("layers", c.layers);
  c.heads = size("heads", c.heads);
  c.ff_hidden = size("ff_hidden", c.ff_hidden);
  c.init_seed = static_cast<std::uint64_t>(kv.get_int("init_seed", static_cast<std::int64_t>(c.init_seed)));
  c.validate();
  return c;
}

template <typename T>
PoseNet<T>::PoseNet(const PoseNetConfig& config) : config_(config) {
  config_.validate();
  const PoseNetConfig& c = config_;
  std::mt19937_64 rng(c.init_seed);
  embed_ = make_linear(store_, "pose.embed", c.sensors * c.channels, c.dim, rng);
  pos_ = &store_.add("pose.pos", Shape{c.window, c.dim});
  std::normal_distribution<double> n(0.0, 0.1);
  for (T& v : pos_->value.values()) v = static_cast<T>(n(rng));
  for (std::size_t i = 0; i < c.layers; ++i) {
    blocks_.push_back(make_block(store_, "pose.block" + std::to_string(i), c.dim, c.heads, c.ff_hidden, rng));
  }
  head_ = make_linear(store_, "pose.head", c.dim, c.joints * 3, rng, Init::zero);
}

template <typename T>
Var<T> PoseNet<T>::forward(const Var<T>& x, bool causal) const {
  const PoseNetConfig& c = config_;
  const Shape& s = x.shape();
  if (s.size() != 4 || s[2] != c.sensors || s[3] != c.channels || s[1] > c.window) {
    throw ShapeError("pose predictor input must be [B, <=" + std::to_string(c.window) + ", " +
                     std::to_string(c.sensors) + ", " + std::to_string(c.channels) + "], got " + to_string(s));
  }
  const std::size_t B = s[0], Tn = s[1];
  Tape<T>& tape = x.tape();
  Var<T> h = embed_(reshape(x, Shape{B, Tn, 1, c.sensors * c.channels}));
  h = add(h, reshape(slice(tape.param(*pos_), 0, 0, Tn), Shape{Tn, 1, c.dim}));
  for (const auto& b : blocks_) h = temporal(b, h, causal);
  return reshape(head_(h), Shape{B, Tn, c.joints, 3});
}

template <typename T>
Tensor<T> PoseNet<T>::infer(const Tensor<T>& x, bool causal) const {
  Tape<T> tape;
  tape.set_grad_enabled(false);
  return forward(tape.constant(x), causal).value();
}

template <typename T>
Var<T> pose_loss(const Var<T>& pred_axis_angle, const PoseTargets<T>& target, const std::vector<int>& parents,
                 const std::vector<T>& offsets, T pos_weight) {
  const Shape& s = pred_axis_angle.shape();
  if (s.size() != 4 || s[3] != 3) throw ShapeError("pose_loss: prediction must be [B, T, J, 3], got " + to_string(s));
  const std::size_t N = s[0] * s[1], J = s[2];
  if (parents.size() != J) throw ShapeError("pose_loss: skeleton has " + std::to_string(parents.size()) + " joints");
  Var<T> rot = rodrigues(pred_axis_angle);
  Var<T> loss = geodesic_loss(rot, target.rot);
  if (pos_weight != T(0)) {
    Var<T> p = fk_positions(reshape(rot, Shape{N, J, 9}), parents, offsets);
    loss = add(loss, scale(mean_distance(p, target.pos), pos_weight));
  }
  return loss;
}

template <typename T>
io::Checkpoint pose_checkpoint(const PoseNet<T>& net, const std::map<std::string, std::string>& meta) {
  io::Checkpoint ckpt;
  ckpt.magic = kPoseMagic;
  ckpt.config = net.config().to_text();
  for (const auto& [k, v] : meta) io::set_meta(ckpt.config, k, v);
  ckpt.sections = io::pack(net.parameters());
  return ckpt;
}

template <typename T>
std::unique_ptr<PoseNet<T>> pose_from_checkpoint(const io::Checkpoint& ckpt) {
  if (ckpt.magic != kPoseMagic) throw FormatError("not a pose predictor checkpoint (magic " + ckpt.magic + ")");
  auto net = std::make_unique<PoseNet<T>>(PoseNetConfig::from_text(ckpt.config));
  io::unpack(ckpt.sections, net->parameters());
  return net;
}

template class PoseNet<float>;
template class PoseNet<double>;
template Var<float> pose_loss(const Var<float>&, const PoseTargets<float>&, const std::vector<int>&,
                              const std::vector<float>&, float);
template Var<double> pose_loss(const Var<double>&, const PoseTargets<double>&, const std::vector<int>&,
                               const std::vector<double>&, double);
template io::Checkpoint pose_checkpoint(const PoseNet<float>&, const std::map<std::string, std::string>&);
template io::Checkpoint pose_checkpoint(const PoseNet<double>&, const std::map<std::string, std::string>&);
template std::unique_ptr<PoseNet<float>> pose_from_checkpoint(const io::Checkpoint&);
template std::unique_ptr<PoseNet<double>> pose_from_checkpoint(const io::Checkpoint&);

}  // namespace gid::nn
