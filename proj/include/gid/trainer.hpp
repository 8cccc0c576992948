#pragma once

// Training loops for the denoiser, the tight-data pose predictor and the
// direct loose-data predictor (no_fps).

#include "gid/gidnet.hpp"
#include "gid/posenet.hpp"
#include "gid/seqfile.hpp"
#include "gid/textconfig.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gid::train {

using nn::Tensor;

/// Mean |pred - target| over all elements.
template <typename T>
double mae_loss(const Tensor<T>& pred, const Tensor<T>& target);

enum class VariantTag { full, no_lsd, no_acf, no_fps };
std::string to_string(VariantTag v);
VariantTag parse_variant_tag(const std::string& s);

struct TrainRun {
  std::uint64_t seed = 1;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 1e-3;
  double clip = 1.0;
  std::size_t patience = 10;
  VariantTag variant = VariantTag::full;
  std::vector<std::uint64_t> train_seeds, val_seeds;
  std::string log_path;  // per-epoch CSV, empty for none
  bool verbose = false;  // progress lines on stderr

  /// Throws ConfigError on overlapping seed sets or zero sizes.
  void validate() const;
  KeyValueText to_text() const;
  /// Reads the run keys (seed, epochs, batch, lr, clip, patience, variant);
  /// missing keys keep their defaults.
  static TrainRun from_text(const KeyValueText& kv);
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_mae = 0.0;
  double val_mae = 0.0;
  double lr = 0.0;
  double wallclock_s = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  bool stopped_early = false;
};

/// Header `epoch,train_mae,val_mae,lr,wallclock_s`.
std::string log_csv(const std::vector<EpochLog>& log);

template <typename T>
struct Tagged {
  io::Provenance tag = io::Provenance::tight;
  Tensor<T> windows;  // [N, T, M, C]
};

template <typename T>
struct PoseWindows {
  Tensor<T> rot;  // [N, T, J, 9]
  Tensor<T> pos;  // [N, T, J, 3]
};

/// Minimizes mae_loss(gid(input), target). Input must be loose (or tight for
/// the degenerate identity case), targets tight. The best-validation
/// parameters are restored at the end.
template <typename T>
TrainResult train_gid(nn::GidNet<T>& net, const Tagged<T>& input, const Tagged<T>& target,
                      const Tagged<T>& val_input, const Tagged<T>& val_target, const TrainRun& run);

struct SkeletonArrays {
  std::vector<int> parents;
  std::vector<double> offsets;
};

/// Pose predictor on tight-wear windows only; loose or denoised input is a
/// ProvenanceError. The logged val_mae column holds the validation pose loss.
template <typename T>
TrainResult train_predictor(nn::PoseNet<T>& net, const Tagged<T>& input, const PoseWindows<T>& target,
                            const Tagged<T>& val_input, const PoseWindows<T>& val_target,
                            const SkeletonArrays& skeleton, const TrainRun& run);

/// no_fps: the same predictor trained directly on loose-wear windows.
template <typename T>
TrainResult train_direct(nn::PoseNet<T>& net, const Tagged<T>& input, const PoseWindows<T>& target,
                         const Tagged<T>& val_input, const PoseWindows<T>& val_target,
                         const SkeletonArrays& skeleton, const TrainRun& run);

/// Rows of t selected by `index` along axis 0.
template <typename T>
Tensor<T> gather(const Tensor<T>& t, const std::vector<std::size_t>& index);

}  // namespace gid::train
