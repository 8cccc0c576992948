#pragma once

// Pose and IMU evaluation metrics and the report table.

#include "gid/kinematics.hpp"
#include "gid/tensor.hpp"

#include <string>
#include <vector>

namespace gid::metrics {

using Poses = std::vector<kin::PoseFrame>;

/// Mean geodesic angle (degrees) between global joint rotations.
double angular_error_deg(const Poses& pred, const Poses& gt, const kin::Skeleton& skeleton);
/// Per-joint breakdown of angular_error_deg.
std::vector<double> angular_error_per_joint(const Poses& pred, const Poses& gt, const kin::Skeleton& skeleton);

/// Mean joint distance (cm) with the root pinned at the origin in both.
double positional_error_cm(const Poses& pred, const Poses& gt, const kin::Skeleton& skeleton);

/// Mean magnitude (m/s^3) of the 4-point third difference of global joint
/// positions. Needs at least 4 frames.
double jitter(const Poses& poses, const kin::Skeleton& skeleton, double rate_hz);

/// Same value as the training loss on normalized features.
double imu_mae(const nn::Tensor<double>& denoised, const nn::Tensor<double>& tight);

/// Jitter is also reported divided by this factor for table comparability.
constexpr double kJitterTableScale = 100.0;

struct EvalReport {
  std::string label;
  double ang_deg = 0.0;
  double pos_cm = 0.0;
  double jitter = 0.0;
  double jitter_scaled = 0.0;
  double imu_mae = 0.0;
  std::size_t sequences = 0;
  std::vector<double> per_joint_deg;

  bool operator==(const EvalReport&) const = default;
};

/// Header `label,ang_deg,pos_cm,mesh,jitter,jitter_scaled,imu_mae`; mesh is
/// always not_computed. Per-joint values are not part of the CSV.
std::string report_csv(const std::vector<EvalReport>& rows);
std::vector<EvalReport> parse_report_csv(const std::string& text);
/// Aligned text table including the per-joint breakdown.
std::string report_table(const std::vector<EvalReport>& rows, const std::vector<std::string>& joint_names);

}  // namespace gid::metrics
