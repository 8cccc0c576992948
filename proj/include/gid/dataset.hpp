#pragma once

// Synthetic paired datasets: clips of procedural motion with tight and loose
// IMU streams and ground-truth poses, split by clip seed into train, val and
// test.

#include "gid/garmentnoise.hpp"
#include "gid/kinematics.hpp"
#include "gid/seqfile.hpp"
#include "gid/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gid::data {

enum class Split { train, val, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ClipInfo {
  std::string name;
  Split split = Split::train;
  std::uint64_t motion_seed = 0;
  std::uint64_t noise_seed = 0;
  bool operator==(const ClipInfo&) const = default;
};

struct Manifest {
  std::uint64_t seed = 1;
  double rate_hz = kin::kDefaultRate;
  double clip_seconds = 30.0;
  std::string profile = "noise_profiles_v1.txt";
  std::string skeleton = "skeleton_default.txt";
  std::vector<ClipInfo> clips;

  std::string serialize() const;
  static Manifest parse(const std::string& text);
  std::vector<std::uint64_t> motion_seeds(Split s) const;
  bool operator==(const Manifest&) const = default;
};

struct Clip {
  ClipInfo info;
  io::ImuSequence tight, loose;
  io::PoseSequence pose;
};

struct Dataset {
  Manifest manifest;
  std::vector<Clip> clips;

  std::vector<const Clip*> split(Split s) const;
};

struct GenOptions {
  std::uint64_t seed = 1;
  double minutes = 10.0;       // train + val
  double test_minutes = 2.0;
  double clip_seconds = 30.0;
  double val_fraction = 0.1;
  std::string profile_name = "noise_profiles_v1.txt";
};

/// Deterministic in (options, skeleton, profiles). Motion seeds of all
/// clips are distinct.
Dataset generate(const kin::Skeleton& skeleton, const kin::SensorLayout& layout,
                 const noise::NoiseProfiles& profiles, const GenOptions& options);

/// Writes manifest.txt plus <clip>_tight.csv, <clip>_loose.csv and
/// <clip>_pose.csv per clip.
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

/// Start frames of length-T windows at stride T/2; the last partial window is
/// dropped. Sequences shorter than T yield none.
std::vector<std::size_t> window_starts(std::size_t frames, std::size_t window);

/// Cuts [F, ...] sequences into windows [N, T, ...].
template <typename T>
nn::Tensor<T> make_windows(const std::vector<nn::Tensor<double>>& sequences, std::size_t window);

/// Root-relative features [F, M, 12] of a sequence in `layout` order.
nn::Tensor<double> features(const io::ImuSequence& seq, const kin::SensorLayout& layout);

/// Local joint rotations [F, J, 9] and root-pinned joint positions [F, J, 3].
nn::Tensor<double> pose_rotations(const io::PoseSequence& seq);
nn::Tensor<double> pose_positions(const io::PoseSequence& seq, const kin::Skeleton& skeleton);

/// SplitMix64 step, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace gid::data
