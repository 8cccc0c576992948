#pragma once

// Text sequence files: a '#key=value' header block, one CSV column-name line,
// then one row per frame written with a fixed number of decimals.

#include "gid/kinematics.hpp"

#include <string>
#include <vector>

namespace gid::io {

enum class Provenance { tight, loose, denoised };

std::string to_string(Provenance p);
/// Throws FormatError on anything but tight, loose or denoised.
Provenance parse_provenance(const std::string& s);

constexpr int kSequenceFormatVersion = 1;
constexpr int kDecimals = 12;

struct ImuSequence {
  double rate_hz = kin::kDefaultRate;
  std::vector<std::string> sensor_names;
  Provenance provenance = Provenance::tight;
  std::vector<kin::ImuFrame> frames;
};

/// Columns: t, then per sensor qw qx qy qz ax ay az.
std::string serialize_imu(const ImuSequence& seq);
/// Checks row arity 1 + 7M, increasing timestamps and unit quaternions
/// (1e-6); violations raise FormatError.
ImuSequence parse_imu(const std::string& text);
void save_imu(const std::string& path, const ImuSequence& seq);
ImuSequence load_imu(const std::string& path);

struct PoseSequence {
  double rate_hz = kin::kDefaultRate;
  std::string skeleton = "skeleton_default.txt";
  std::size_t joints = 0;
  std::vector<kin::PoseFrame> frames;
};

/// Columns: t, tx ty tz, then J x 3 axis-angle.
std::string serialize_pose(const PoseSequence& seq);
PoseSequence parse_pose(const std::string& text);
void save_pose(const std::string& path, const PoseSequence& seq);
PoseSequence load_pose(const std::string& path);

}  // namespace gid::io
