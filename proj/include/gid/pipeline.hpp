#pragma once

// End-to-end inference: T-pose calibration, offline denoise and pose
// prediction over whole sequences, evaluation with and without the denoiser,
// and paced streaming replay.

#include "gid/dataset.hpp"
#include "gid/gidnet.hpp"
#include "gid/metrics.hpp"
#include "gid/posenet.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace gid::pipeline {

using nn::Tensor;

// ---------------------------------------------------------------- calibration

constexpr double kMinCalibrationSeconds = 3.0;
constexpr double kMaxCalibrationSpreadDeg = 5.0;

struct SensorCalibration {
  rot::UnitQuaternion offset;
  std::size_t frames = 0;
  double spread_deg = 0.0;  // max angle of any frame from the window mean
};

struct CalibrationState {
  std::vector<SensorCalibration> sensors;
};

/// Chordal L2 mean: the principal eigenvector of the summed outer products.
rot::UnitQuaternion chordal_mean(const std::vector<rot::UnitQuaternion>& qs);

/// Per sensor offset = reference · mean⁻¹, where the reference is the sensor
/// orientation of an ideal T-pose on `skeleton`. Throws InsufficientData below
/// 3 s of frames and CalibrationMotionError when any sensor moves 5° or more.
CalibrationState calibrate_tpose(const std::vector<kin::ImuFrame>& frames, const kin::Skeleton& skeleton,
                                 const kin::SensorLayout& layout, double rate_hz);

/// Pre-multiplies each orientation and acceleration by its sensor's offset.
std::vector<kin::ImuFrame> apply_calibration(const std::vector<kin::ImuFrame>& frames, const CalibrationState& cal);

// ---------------------------------------------------------------- offline

/// Denoised features [F, M, C] of a whole sequence, windows at stride T/2
/// blended by stitch_windows. A null model is the passthrough.
template <typename T>
Tensor<double> denoise_sequence(const nn::GidNet<T>* gid, const Tensor<double>& features);

/// Axis-angle local joint rotations [F, J, 3].
template <typename T>
Tensor<double> predict_sequence(const nn::PoseNet<T>& pose, const Tensor<double>& features);

/// Pose frames from axis-angle predictions (root pinned, timestamps copied).
std::vector<kin::PoseFrame> to_pose_frames(const Tensor<double>& axis_angle, const std::vector<double>& timestamps);

struct EvalPair {
  metrics::EvalReport with_gid;
  metrics::EvalReport without_gid;
};

/// Evaluates every clip in `clips`: the loose stream goes through the denoiser
/// (or not) and then the pose predictor. Jitter and errors are averaged over
/// clips weighted by frame count.
template <typename T>
EvalPair evaluate(const std::vector<const data::Clip*>& clips, const kin::Skeleton& skeleton,
                  const kin::SensorLayout& layout, const nn::GidNet<T>* gid, const nn::PoseNet<T>& pose,
                  const std::string& label);

/// Same as evaluate's with-GID path but for the direct (no_fps) predictor:
/// loose features straight into the pose network.
template <typename T>
metrics::EvalReport evaluate_direct(const std::vector<const data::Clip*>& clips, const kin::Skeleton& skeleton,
                                    const kin::SensorLayout& layout, const nn::PoseNet<T>& pose,
                                    const std::string& label);

// ---------------------------------------------------------------- streaming

struct StreamOptions {
  double rate_hz = kin::kDefaultRate;
  bool pace = true;    // false feeds frames as fast as the consumer takes them
  bool causal = true;  // attention masks in both networks
  std::size_t queue_capacity = 4;
};

struct StreamResult {
  Tensor<double> poses;             // [F, J, 3] axis-angle, one per input frame
  std::vector<double> latency_ms;   // frame arrival to pose output
  std::size_t warmup = 0;           // frames before the first full window
  std::size_t overruns = 0;         // frames slower than the frame period
  bool overrun_flag = false;        // overruns on more than 1% of frames

  double percentile_ms(double p) const;
};

/// Replays `features` [F, M, C] as a live 40 Hz stream: a producer thread
/// paces frames into a bounded queue, the consumer keeps the last T frames,
/// runs the denoiser and the pose network on them and emits the pose of the
/// newest frame. Until T frames have arrived the window is left-padded with
/// the first frame.
template <typename T>
StreamResult stream_replay(const Tensor<double>& features, const nn::GidNet<T>* gid, const nn::PoseNet<T>& pose,
                           const StreamOptions& options = {});

/// The same per-frame outputs computed in batch without threads or pacing.
template <typename T>
Tensor<double> offline_sliding(const Tensor<double>& features, const nn::GidNet<T>* gid,
                               const nn::PoseNet<T>& pose, bool causal = true);

}  // namespace gid::pipeline
