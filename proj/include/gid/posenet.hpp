#pragma once

// Reference pose predictor: a small temporal transformer mapping normalized
// IMU windows [B, T, M, C] to local joint axis-angles [B, T, J, 3].

#include "gid/checkpoint.hpp"
#include "gid/nn.hpp"
#include "gid/textconfig.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace gid::nn {

struct PoseNetConfig {
  std::size_t window = 64;
  std::size_t sensors = 6;
  std::size_t channels = 12;
  std::size_t joints = 16;
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_hidden = 128;
  std::uint64_t init_seed = 2;

  void validate() const;
  KeyValueText to_text() const;
  static PoseNetConfig from_text(const KeyValueText& kv);
  bool operator==(const PoseNetConfig&) const = default;
};

template <typename T>
class PoseNet {
 public:
  explicit PoseNet(const PoseNetConfig& config);
  PoseNet(const PoseNet&) = delete;
  PoseNet& operator=(const PoseNet&) = delete;

  const PoseNetConfig& config() const { return config_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

  /// The head starts at zero, so an untrained model predicts the T-pose.
  Var<T> forward(const Var<T>& x, bool causal = false) const;
  Tensor<T> infer(const Tensor<T>& x, bool causal = false) const;

 private:
  PoseNetConfig config_;
  ParameterStore<T> store_;
  Linear<T> embed_;
  Parameter<T>* pos_ = nullptr;
  std::vector<TransformerBlock<T>> blocks_;
  Linear<T> head_;
};

/// Skeleton data the pose loss needs, in the scalar type of the model.
template <typename T>
struct PoseTargets {
  Tensor<T> rot;  // [B, T, J, 9] local rotations, row-major
  Tensor<T> pos;  // [B * T, J, 3] root-pinned joint positions
};

/// Geodesic loss on local joint rotations plus `pos_weight` times the mean
/// joint distance of root-pinned forward kinematics.
template <typename T>
Var<T> pose_loss(const Var<T>& pred_axis_angle, const PoseTargets<T>& target, const std::vector<int>& parents,
                 const std::vector<T>& offsets, T pos_weight = T(0.1));

inline const std::string kPoseMagic = "POSC";

template <typename T>
io::Checkpoint pose_checkpoint(const PoseNet<T>& net, const std::map<std::string, std::string>& meta = {});
template <typename T>
std::unique_ptr<PoseNet<T>> pose_from_checkpoint(const io::Checkpoint& ckpt);

}  // namespace gid::nn
