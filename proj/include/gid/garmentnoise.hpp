#pragma once

// Structured loose-wear corruption of tight-wear IMU streams: fabric slip,
// pendulum-like swing, impact spikes and garment deformation smoothing.

#include "gid/kinematics.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gid::noise {

struct NoiseParams {
  double slip_sigma = 0.0;     // rad / sqrt(s)
  double slip_bound = 0.0;     // rad, reflecting
  double swing_freq = 0.0;     // Hz
  double swing_damping = 0.0;  // zeta
  double swing_gain = 0.0;     // forcing per m/s^2 of body acceleration
  double swing_lever = 0.0;    // m, converts swing angular acceleration to m/s^2
  double impact_rate = 0.0;    // events / s
  double impact_accel = 0.0;   // m/s^2
  double deform_cutoff = 0.0;  // Hz, 0 disables the low-pass

  bool slip_active() const { return slip_sigma > 0.0 && slip_bound > 0.0; }
  bool swing_active() const { return swing_gain > 0.0 && swing_freq > 0.0; }
  bool impact_active() const { return impact_rate > 0.0 && impact_accel > 0.0; }
  bool deform_active() const { return deform_cutoff > 0.0; }
  bool is_zero() const;

  /// Throws ConfigError on negative or non-finite values, zeta outside
  /// (0, 1) for an active swing, or a cutoff above Nyquist.
  void validate(double rate_hz) const;

  bool operator==(const NoiseParams&) const = default;
};

/// Per-location parameters and the sensors each location covers.
class NoiseProfiles {
 public:
  struct Location {
    std::string name;
    std::vector<std::string> sensors;
    NoiseParams params;
    bool operator==(const Location&) const = default;
  };

  NoiseProfiles() = default;
  explicit NoiseProfiles(std::vector<Location> locations);

  /// data/noise_profiles_v1.txt.
  static NoiseProfiles defaults();
  static NoiseProfiles parse(const std::string& text);
  static NoiseProfiles load(const std::string& path);
  std::string serialize() const;

  const std::vector<Location>& locations() const { return locations_; }
  const NoiseParams& location(const std::string& name) const;
  /// Throws ConfigError when no location lists the sensor.
  const NoiseParams& for_sensor(const std::string& sensor_id) const;
  /// Parameters for every sensor of `layout`, in layout order.
  std::vector<NoiseParams> for_layout(const kin::SensorLayout& layout) const;

  /// Every magnitude scaled by an independent factor in [1 - f, 1 + f];
  /// damping is kept inside (0, 1).
  NoiseProfiles perturbed(std::uint64_t seed, double fraction) const;

  bool operator==(const NoiseProfiles&) const = default;

 private:
  std::vector<Location> locations_;
};

constexpr int kSchemaVersion = 1;

/// Corrupts each sensor stream with its own parameters; deterministic given
/// the seed. All-zero parameters return the input unchanged.
std::vector<kin::ImuFrame> corrupt(const std::vector<kin::ImuFrame>& tight,
                                   const std::vector<NoiseParams>& params, std::uint64_t seed);

std::vector<kin::ImuFrame> corrupt(const std::vector<kin::ImuFrame>& tight, const kin::SensorLayout& layout,
                                   const NoiseProfiles& profiles, std::uint64_t seed);

}  // namespace gid::noise
