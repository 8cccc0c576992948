#include "gid/garmentnoise.hpp"

#include "gid/errors.hpp"
#include "gid/textconfig.hpp"

#include <array>
#include <cmath>
#include <random>
#include <sstream>

namespace gid::noise {

using kin::ImuFrame;
using rot::AxisAngle;
using rot::UnitQuaternion;
using rot::Vec3;

namespace {

struct Field {
  const char* key;
  double NoiseParams::*member;
};

constexpr std::array<Field, 9> kFields = {{
    {"slip_sigma", &NoiseParams::slip_sigma},
    {"slip_bound", &NoiseParams::slip_bound},
    {"swing_freq", &NoiseParams::swing_freq},
    {"swing_damping", &NoiseParams::swing_damping},
    {"swing_gain", &NoiseParams::swing_gain},
    {"swing_lever", &NoiseParams::swing_lever},
    {"impact_rate", &NoiseParams::impact_rate},
    {"impact_accel", &NoiseParams::impact_accel},
    {"deform_cutoff", &NoiseParams::deform_cutoff},
}};

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

}  // namespace

bool NoiseParams::is_zero() const {
  for (const auto& f : kFields) {
    if (this->*f.member != 0.0) return false;
  }
  return true;
}

void NoiseParams::validate(double rate_hz) const {
  for (const auto& f : kFields) {
    const double v = this->*f.member;
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError(std::string("noise parameter ") + f.key + " must be finite and non-negative");
    }
  }
  if (swing_active() && !(swing_damping > 0.0 && swing_damping < 1.0)) {
    throw ConfigError("swing_damping must lie in (0, 1)");
  }
  if (deform_cutoff > 0.5 * rate_hz) {
    throw ConfigError("deform_cutoff " + KeyValueText::format_double(deform_cutoff) +
                      " Hz exceeds Nyquist");
  }
}

NoiseProfiles::NoiseProfiles(std::vector<Location> locations) : locations_(std::move(locations)) {
  for (std::size_t a = 0; a < locations_.size(); ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      if (locations_[a].name == locations_[b].name) {
        throw ConfigError("duplicate noise location " + locations_[a].name);
      }
    }
  }
}

NoiseProfiles NoiseProfiles::defaults() { return load(data_path("noise_profiles_v1.txt")); }

NoiseProfiles NoiseProfiles::parse(const std::string& text) {
  const KeyValueText kv = KeyValueText::parse(text);
  if (kv.get_int("schema_version") != kSchemaVersion) {
    throw ConfigError("noise profiles: unsupported schema_version " + kv.get("schema_version"));
  }
  std::vector<Location> locs;
  for (const auto& name : kv.sections()) {
    Location loc;
    loc.name = name;
    std::istringstream ss(kv.get(name, "sensors"));
    std::string id;
    while (std::getline(ss, id, ',')) {
      if (!id.empty()) loc.sensors.push_back(id);
    }
    for (const auto& f : kFields) loc.params.*f.member = kv.get_double(name, f.key);
    locs.push_back(std::move(loc));
  }
  return NoiseProfiles(std::move(locs));
}

NoiseProfiles NoiseProfiles::load(const std::string& path) { return parse(read_file(path)); }

std::string NoiseProfiles::serialize() const {
  KeyValueText kv;
  kv.set("schema_version", std::to_string(kSchemaVersion));
  for (const auto& loc : locations_) {
    std::string ids;
    for (const auto& s : loc.sensors) ids += (ids.empty() ? "" : ",") + s;
    kv.set(loc.name, "sensors", ids);
    for (const auto& f : kFields) kv.set(loc.name, f.key, KeyValueText::format_double(loc.params.*f.member));
  }
  return kv.serialize();
}

const NoiseParams& NoiseProfiles::location(const std::string& name) const {
  for (const auto& loc : locations_) {
    if (loc.name == name) return loc.params;
  }
  throw ConfigError("no noise profile for location " + name);
}

const NoiseParams& NoiseProfiles::for_sensor(const std::string& sensor_id) const {
  for (const auto& loc : locations_) {
    for (const auto& s : loc.sensors) {
      if (s == sensor_id) return loc.params;
    }
  }
  throw ConfigError("no noise profile covers sensor " + sensor_id);
}

std::vector<NoiseParams> NoiseProfiles::for_layout(const kin::SensorLayout& layout) const {
  std::vector<NoiseParams> out;
  for (const auto& s : layout.sensors()) out.push_back(for_sensor(s.id));
  return out;
}

NoiseProfiles NoiseProfiles::perturbed(std::uint64_t seed, double fraction) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1.0 - fraction, 1.0 + fraction);
  NoiseProfiles out = *this;
  for (auto& loc : out.locations_) {
    for (const auto& f : kFields) loc.params.*f.member *= u(rng);
    loc.params.swing_damping = std::min(loc.params.swing_damping, 0.95);
  }
  return out;
}

std::vector<ImuFrame> corrupt(const std::vector<ImuFrame>& tight, const std::vector<NoiseParams>& params,
                              std::uint64_t seed) {
  if (tight.size() < 2) return tight;
  const std::size_t M = tight.front().sensors.size();
  if (params.size() != M) {
    throw ConfigError("corrupt: " + std::to_string(params.size()) + " parameter sets for " +
                      std::to_string(M) + " sensors");
  }
  const std::size_t F = tight.size();
  const double dt = (tight.back().t - tight.front().t) / static_cast<double>(F - 1);
  if (!(dt > 0.0)) throw InvalidInput("corrupt: timestamps must increase");
  for (const auto& p : params) p.validate(1.0 / dt);

  std::vector<ImuFrame> out = tight;
  for (std::size_t m = 0; m < M; ++m) {
    const NoiseParams& p = params[m];
    if (p.is_zero()) continue;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(m), 0x9e3779b9u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    // Fixed per-sensor geometry of the garment flap.
    const Vec3 swing_axis = random_unit(rng);
    const Vec3 tangent = swing_axis.unitOrthogonal();

    // (a) slip: reflected random walk of a rotation vector, applied in the
    // global frame.
    if (p.slip_active()) {
      Vec3 s = Vec3::Zero();
      const double step = p.slip_sigma * std::sqrt(dt);
      for (std::size_t f = 0; f < F; ++f) {
        s += step * Vec3(normal(rng), normal(rng), normal(rng));
        double n = s.norm();
        if (n > p.slip_bound) {
          const double reflected = std::max(0.0, 2.0 * p.slip_bound - n);
          s *= reflected / n;
        }
        auto& r = out[f].sensors[m];
        r.orientation = rot::axis_angle_to_quat(AxisAngle(s)) * r.orientation;
      }
    }

    // (b) swing: x'' + 2 zeta w x' + w^2 x = gain * |a - g|, RK4 with the
    // drive interpolated linearly inside each frame.
    if (p.swing_active()) {
      const double w = 2.0 * rot::kPi * p.swing_freq;
      const double zeta = p.swing_damping;
      auto drive = [&](std::size_t f) { return p.swing_gain * (tight[f].sensors[m].acc - kin::kGravity).norm(); };
      auto deriv = [&](double x, double v, double u) { return u - 2.0 * zeta * w * v - w * w * x; };
      constexpr int kSub = 4;
      const double h = dt / kSub;
      double x = 0.0, v = 0.0;
      for (std::size_t f = 0; f < F; ++f) {
        const double u0 = drive(f);
        if (f > 0) {
          const double ua = drive(f - 1);
          for (int k = 0; k < kSub; ++k) {
            const double s0 = static_cast<double>(k) / kSub;
            const double s1 = static_cast<double>(k + 1) / kSub;
            const double ub = ua + (u0 - ua) * s0;
            const double um = ua + (u0 - ua) * 0.5 * (s0 + s1);
            const double ue = ua + (u0 - ua) * s1;
            const double k1x = v, k1v = deriv(x, v, ub);
            const double k2x = v + 0.5 * h * k1v, k2v = deriv(x + 0.5 * h * k1x, v + 0.5 * h * k1v, um);
            const double k3x = v + 0.5 * h * k2v, k3v = deriv(x + 0.5 * h * k2x, v + 0.5 * h * k2v, um);
            const double k4x = v + h * k3v, k4v = deriv(x + h * k3x, v + h * k3v, ue);
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
          }
        }
        const double acc = deriv(x, v, u0);
        auto& r = out[f].sensors[m];
        r.orientation = r.orientation * rot::axis_angle_to_quat(AxisAngle(swing_axis * x));
        r.acc += p.swing_lever * acc * r.orientation.rotate(tangent);
      }
    }

    // (c) impacts: Poisson arrivals, each a 2-frame spike.
    if (p.impact_active()) {
      const double prob = 1.0 - std::exp(-p.impact_rate * dt);
      for (std::size_t f = 0; f + 1 < F; ++f) {
        if (u01(rng) >= prob) continue;
        const Vec3 spike = p.impact_accel * random_unit(rng);
        out[f].sensors[m].acc += spike;
        out[f + 1].sensors[m].acc += spike;
        ++f;
      }
    }

    // (d) deformation: first-order slerp low-pass on orientation.
    if (p.deform_active()) {
      const double alpha = 1.0 - std::exp(-2.0 * rot::kPi * p.deform_cutoff * dt);
      UnitQuaternion state = out[0].sensors[m].orientation;
      for (std::size_t f = 1; f < F; ++f) {
        state = rot::slerp(state, out[f].sensors[m].orientation, alpha);
        out[f].sensors[m].orientation = state;
      }
    }
  }
  return out;
}

std::vector<ImuFrame> corrupt(const std::vector<ImuFrame>& tight, const kin::SensorLayout& layout,
                              const NoiseProfiles& profiles, std::uint64_t seed) {
  return corrupt(tight, profiles.for_layout(layout), seed);
}

}  // namespace gid::noise
