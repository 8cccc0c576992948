#pragma once

// Articulated body model, procedural motion and ideal (tight-wear) IMU
// synthesis.

#include "gid/rotmath.hpp"
#include "gid/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gid::kin {

using rot::AxisAngle;
using rot::Mat3;
using rot::RotationMatrix;
using rot::UnitQuaternion;
using rot::Vec3;

/// Gravity reaction measured by a resting accelerometer, Y-up (m/s^2).
inline const Vec3 kGravity{0.0, 9.81, 0.0};

/// Accelerations are scaled by this factor in feature space.
constexpr double kAccScale = 1.0 / 30.0;
constexpr std::size_t kChannels = 12;
constexpr double kDefaultRate = 40.0;

struct Joint {
  std::string name;
  int parent = -1;
  Vec3 offset = Vec3::Zero();  // bone offset in the parent frame (m)
};

class Skeleton {
 public:
  Skeleton() = default;
  /// Validates topological order, a single root and positive bone lengths.
  explicit Skeleton(std::vector<Joint> joints);

  /// The shipped 16-joint body (data/skeleton_default.txt).
  static Skeleton default_body();
  static Skeleton parse(const std::string& text);
  static Skeleton load(const std::string& path);
  std::string serialize() const;

  std::size_t size() const { return joints_.size(); }
  const Joint& joint(std::size_t j) const { return joints_[j]; }
  const std::vector<Joint>& joints() const { return joints_; }
  int index_of(const std::string& name) const;
  std::vector<int> parents() const;
  /// Offsets flattened as 3J values (root entry included, unused).
  std::vector<double> offsets_flat() const;

 private:
  std::vector<Joint> joints_;
};

struct SensorSpec {
  std::string id;
  int joint = 0;
  UnitQuaternion mount;          // sensor frame relative to the joint frame
  Vec3 lever = Vec3::Zero();     // sensor position in the joint frame (m)
  bool root = false;
};

class SensorLayout {
 public:
  SensorLayout() = default;
  explicit SensorLayout(std::vector<SensorSpec> sensors);

  /// lforearm, rforearm, back, waist, lwaist, rwaist with back as root.
  static SensorLayout default_layout(const Skeleton& skeleton);

  std::size_t size() const { return sensors_.size(); }
  const SensorSpec& sensor(std::size_t m) const { return sensors_[m]; }
  const std::vector<SensorSpec>& sensors() const { return sensors_; }
  /// Throws ConfigError when no sensor is flagged as root.
  std::size_t root_index() const;
  std::vector<std::string> names() const;

 private:
  std::vector<SensorSpec> sensors_;
};

struct PoseFrame {
  double t = 0.0;
  Vec3 translation = Vec3::Zero();
  std::vector<AxisAngle> theta;  // local joint rotations
};

struct SensorReading {
  UnitQuaternion orientation;  // sensor to global
  Vec3 acc = Vec3::Zero();     // global frame, gravity inclusive
};

struct ImuFrame {
  double t = 0.0;
  std::vector<SensorReading> sensors;
};

struct FkResult {
  std::vector<RotationMatrix> rotations;  // global
  std::vector<Vec3> positions;            // global
};

FkResult forward_kinematics(const Skeleton& skeleton, const PoseFrame& pose);

struct MotionOptions {
  double rate_hz = kDefaultRate;
  double amplitude_scale = 1.0;
  /// Per-axis cap on the summed sinusoid rates (rad/s).
  double rate_cap = 5.0;
};

/// Deterministic procedural motion clip of `duration_s` seconds.
std::vector<PoseFrame> synth_motion(const Skeleton& skeleton, std::uint64_t seed, double duration_s,
                                    const MotionOptions& options = {});

/// Ideal strapped-on sensor readings for a pose sequence.
std::vector<ImuFrame> tight_imu_from_motion(const Skeleton& skeleton, const SensorLayout& layout,
                                            const std::vector<PoseFrame>& poses);

/// Root-relative features [F, M, 12]: rotation rows then acc * kAccScale.
nn::Tensor<double> normalize_root_relative(const std::vector<ImuFrame>& frames,
                                           const SensorLayout& layout);

/// Inverse of normalize_root_relative. Rotation blocks are projected onto
/// SO(3) first, so network outputs are accepted.
std::vector<ImuFrame> denormalize_root_relative(const nn::Tensor<double>& features,
                                                const SensorLayout& layout,
                                                const std::vector<double>& timestamps);

}  // namespace gid::kin
