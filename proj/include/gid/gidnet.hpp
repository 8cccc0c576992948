#pragma once

// Garment inertial denoiser: spatio-temporal backbone, per-sensor expert
// heads, adaptive cross-wear fusion and a refinement stage. Input and output
// windows are root-relative features [B, T, M, C].

#include "gid/checkpoint.hpp"
#include "gid/nn.hpp"
#include "gid/textconfig.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace gid::nn {

enum class Fusion { scalar, per_sensor, per_channel };
enum class Variant { full, no_lsd, no_acf };

std::string to_string(Fusion f);
std::string to_string(Variant v);
Fusion parse_fusion(const std::string& s);
/// Accepts full, no_lsd and no_acf; anything else is a ConfigError.
Variant parse_variant(const std::string& s);

struct GidConfig {
  std::size_t window = 64;
  std::size_t sensors = 6;
  std::size_t channels = 12;
  std::size_t dim = 64;
  std::size_t temporal_blocks = 2;
  std::size_t spatial_blocks = 1;
  std::size_t heads = 4;
  std::size_t ff_hidden = 128;
  std::size_t expert_hidden = 128;
  std::size_t refine_blocks = 1;
  Fusion fusion = Fusion::per_sensor;
  Variant variant = Variant::full;
  bool shared_backbone = true;
  std::uint64_t init_seed = 1;

  /// Throws ConfigError on indivisible heads, T < 8 or zero sizes.
  void validate() const;
  KeyValueText to_text() const;
  /// Missing keys keep their defaults.
  static GidConfig from_text(const KeyValueText& kv);
  bool operator==(const GidConfig&) const = default;
};

template <typename T>
struct Backbone {
  Linear<T> embed;
  Parameter<T>* pos = nullptr;     // [window, dim]
  Parameter<T>* sensor = nullptr;  // [sensors, dim]
  std::vector<TransformerBlock<T>> blocks;
  std::vector<bool> is_temporal;
};

template <typename T>
struct Expert {
  Linear<T> fc1, fc2;  // fc2 starts at zero
};

template <typename T>
class GidNet {
 public:
  explicit GidNet(const GidConfig& config);
  GidNet(const GidNet&) = delete;
  GidNet& operator=(const GidNet&) = delete;

  const GidConfig& config() const { return config_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

  /// x[B, T, M, C] -> features [B, T, M, d].
  Var<T> backbone_forward(const Var<T>& x, bool causal) const;
  /// features[B, T, d] of sensor m plus its input channels -> [B, T, C].
  Var<T> expert_forward(const Var<T>& features_m, const Var<T>& input_m, std::size_t m) const;
  /// Runs every expert: [B, T, M, C].
  Var<T> experts_forward(const Var<T>& features, const Var<T>& x) const;
  /// alpha * denoised + (1 - alpha) * loose; identity on `denoised` for no_acf.
  Var<T> fuse(const Var<T>& denoised, const Var<T>& loose) const;
  Var<T> refine(const Var<T>& fused, bool causal) const;
  Var<T> forward(const Var<T>& x, bool causal = false) const;

  /// Fusion weights alpha = sigmoid(a), shape [M, C] (all ones for no_acf).
  Tensor<T> alpha() const;

  /// Gradient-free forward of a batch of windows.
  Tensor<T> infer(const Tensor<T>& x, bool causal = false) const;

 private:
  Backbone<T> make_backbone(const std::string& prefix, std::mt19937_64& rng);
  Var<T> run_backbone(const Backbone<T>& b, const Var<T>& x, bool causal) const;

  GidConfig config_;
  ParameterStore<T> store_;
  std::vector<Backbone<T>> backbones_;  // one, or one per sensor
  std::vector<Expert<T>> experts_;      // one per sensor, or one shared
  Parameter<T>* fusion_ = nullptr;
  Backbone<T> refine_;
  Linear<T> refine_out_;  // starts at zero
};

/// Runs a window-level model over a whole sequence [F, ...] with windows of
/// length T at stride T/2 and a linear cross-fade over the overlaps; returns
/// [F, out_channels]. Sequences shorter than T are padded by repeating their
/// last frame.
template <typename T, typename Fn>
Tensor<T> stitch_windows(const Tensor<T>& seq, std::size_t window, std::size_t out_channels, Fn&& run_batch);

inline const std::string kGidMagic = "GIDC";

/// Config block holds the GidConfig keys plus meta.<key> training metadata.
template <typename T>
io::Checkpoint gid_checkpoint(const GidNet<T>& net, const std::map<std::string, std::string>& meta = {});
/// Rebuilds the model from the stored config, then loads the weights.
template <typename T>
std::unique_ptr<GidNet<T>> gid_from_checkpoint(const io::Checkpoint& ckpt);

}  // namespace gid::nn

#include "gid/detail/stitch.hpp"
