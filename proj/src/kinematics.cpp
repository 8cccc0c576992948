#include "gid/kinematics.hpp"

#include "gid/errors.hpp"
#include "gid/textconfig.hpp"

#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace gid::kin {

Skeleton::Skeleton(std::vector<Joint> joints) : joints_(std::move(joints)) {
  if (joints_.empty()) throw InvalidInput("skeleton has no joints");
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    const Joint& jt = joints_[j];
    if (j == 0) {
      if (jt.parent != -1) throw InvalidInput("joint 0 must be the root");
      continue;
    }
    if (jt.parent < 0 || static_cast<std::size_t>(jt.parent) >= j) {
      throw InvalidInput("joint " + jt.name + ": parent index must precede the joint");
    }
    if (!(jt.offset.norm() > 0.0)) throw InvalidInput("joint " + jt.name + ": zero bone length");
  }
}

Skeleton Skeleton::default_body() { return load(data_path("skeleton_default.txt")); }

Skeleton Skeleton::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<Joint> joints;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::size_t index = 0;
    Joint j;
    if (!(ls >> index)) continue;
    if (!(ls >> j.name >> j.parent >> j.offset.x() >> j.offset.y() >> j.offset.z())) {
      throw FormatError("skeleton: malformed line '" + line + "'");
    }
    if (index != joints.size()) throw FormatError("skeleton: joints must be listed in index order");
    joints.push_back(j);
  }
  return Skeleton(std::move(joints));
}

Skeleton Skeleton::load(const std::string& path) { return parse(read_file(path)); }

std::string Skeleton::serialize() const {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    const Joint& jt = joints_[j];
    out << j << ' ' << jt.name << ' ' << jt.parent << ' ' << jt.offset.x() << ' ' << jt.offset.y()
        << ' ' << jt.offset.z() << '\n';
  }
  return out.str();
}

int Skeleton::index_of(const std::string& name) const {
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    if (joints_[j].name == name) return static_cast<int>(j);
  }
  throw ConfigError("skeleton has no joint named " + name);
}

std::vector<int> Skeleton::parents() const {
  std::vector<int> p;
  for (const auto& j : joints_) p.push_back(j.parent);
  return p;
}

std::vector<double> Skeleton::offsets_flat() const {
  std::vector<double> out;
  for (const auto& j : joints_) out.insert(out.end(), {j.offset.x(), j.offset.y(), j.offset.z()});
  return out;
}

SensorLayout::SensorLayout(std::vector<SensorSpec> sensors) : sensors_(std::move(sensors)) {
  std::size_t roots = 0;
  for (std::size_t a = 0; a < sensors_.size(); ++a) {
    roots += sensors_[a].root ? 1 : 0;
    for (std::size_t b = 0; b < a; ++b) {
      if (sensors_[a].id == sensors_[b].id) throw ConfigError("duplicate sensor id " + sensors_[a].id);
    }
  }
  if (roots > 1) throw ConfigError("sensor layout flags more than one root sensor");
}

SensorLayout SensorLayout::default_layout(const Skeleton& sk) {
  std::vector<SensorSpec> s;
  s.push_back({"lforearm", sk.index_of("lelbow"), {}, Vec3(0.15, 0.0, 0.03), false});
  s.push_back({"rforearm", sk.index_of("relbow"), {}, Vec3(-0.15, 0.0, 0.03), false});
  s.push_back({"back", sk.index_of("chestback"), {}, Vec3(0.0, 0.0, -0.02), true});
  s.push_back({"waist", sk.index_of("pelvis"), {}, Vec3(0.0, 0.02, 0.12), false});
  s.push_back({"lwaist", sk.index_of("lhip"), {}, Vec3(0.06, -0.05, 0.0), false});
  s.push_back({"rwaist", sk.index_of("rhip"), {}, Vec3(-0.06, -0.05, 0.0), false});
  return SensorLayout(std::move(s));
}

std::size_t SensorLayout::root_index() const {
  for (std::size_t m = 0; m < sensors_.size(); ++m) {
    if (sensors_[m].root) return m;
  }
  throw ConfigError("sensor layout has no root sensor");
}

std::vector<std::string> SensorLayout::names() const {
  std::vector<std::string> out;
  for (const auto& s : sensors_) out.push_back(s.id);
  return out;
}

FkResult forward_kinematics(const Skeleton& skeleton, const PoseFrame& pose) {
  const std::size_t J = skeleton.size();
  if (pose.theta.size() != J) {
    throw ShapeError("pose has " + std::to_string(pose.theta.size()) + " joints, skeleton " +
                     std::to_string(J));
  }
  FkResult fk;
  fk.rotations.resize(J);
  fk.positions.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    const RotationMatrix local = rot::axis_angle_to_matrix(pose.theta[j]);
    const int p = skeleton.joint(j).parent;
    if (p < 0) {
      fk.rotations[j] = local;
      fk.positions[j] = pose.translation;
    } else {
      fk.rotations[j] = fk.rotations[p] * local;
      fk.positions[j] = fk.positions[p] + fk.rotations[p] * skeleton.joint(j).offset;
    }
  }
  return fk;
}

namespace {

// Per-axis amplitude limits (rad) about the joint's local X, Y, Z.
Vec3 amplitude_limit(const std::string& name) {
  static const std::map<std::string, Vec3> table = {
      {"pelvis", {0.2, 0.35, 0.2}},     {"spine", {0.25, 0.25, 0.2}},
      {"chest", {0.2, 0.25, 0.15}},     {"neck", {0.3, 0.4, 0.2}},
      {"head", {0.15, 0.2, 0.1}},       {"lshoulder", {0.5, 0.8, 0.9}},
      {"rshoulder", {0.5, 0.8, 0.9}},   {"lelbow", {0.3, 1.0, 0.0}},
      {"relbow", {0.3, 1.0, 0.0}},      {"lwrist", {0.2, 0.2, 0.2}},
      {"rwrist", {0.2, 0.2, 0.2}},      {"lhip", {0.7, 0.15, 0.2}},
      {"rhip", {0.7, 0.15, 0.2}},       {"lknee", {0.9, 0.0, 0.0}},
      {"rknee", {0.9, 0.0, 0.0}},       {"chestback", {0.0, 0.0, 0.0}},
  };
  const auto it = table.find(name);
  return it == table.end() ? Vec3(0.2, 0.2, 0.2) : it->second;
}

constexpr std::size_t kMaxComponents = 4;
// Movement style of the single virtual subject: how each joint axis loads on
// the clip-level oscillators. Fixed so that every clip shares it.
constexpr std::uint64_t kStyleSeed = 0x5eed5717e;

}  // namespace

std::vector<PoseFrame> synth_motion(const Skeleton& skeleton, std::uint64_t seed, double duration_s,
                                    const MotionOptions& opt) {
  if (!(duration_s > 0.0)) throw InvalidInput("synth_motion: duration must be positive");
  if (!(opt.rate_hz > 0.0)) throw InvalidInput("synth_motion: rate must be positive");
  const std::size_t J = skeleton.size();
  constexpr double two_pi = 2.0 * rot::kPi;

  std::mt19937_64 style_rng(kStyleSeed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  struct Load {
    double weight;
    double phase;
  };
  std::vector<std::array<std::array<Load, kMaxComponents>, 3>> style(J);
  for (auto& joint : style)
    for (auto& axis : joint)
      for (auto& l : axis) l = {2.0 * u01(style_rng) - 1.0, two_pi * u01(style_rng)};

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(2, 4);
  const std::size_t K = static_cast<std::size_t>(count(rng));
  std::array<double, kMaxComponents> freq{}, phase{}, gain{};
  for (std::size_t i = 0; i < K; ++i) {
    freq[i] = 0.3 + 2.7 * u01(rng);
    phase[i] = two_pi * u01(rng);
    gain[i] = 0.4 + 0.6 * u01(rng);
  }

  struct Term {
    double amp, freq, phase;
  };
  std::vector<std::array<std::vector<Term>, 3>> terms(J);
  for (std::size_t j = 0; j < J; ++j) {
    const Vec3 limit = amplitude_limit(skeleton.joint(j).name) * opt.amplitude_scale;
    for (int a = 0; a < 3; ++a) {
      if (limit[a] == 0.0) continue;
      double wsum = 0.0;
      std::array<double, kMaxComponents> w{};
      for (std::size_t i = 0; i < K; ++i) {
        const double jitter = 1.0 + 0.15 * (2.0 * u01(rng) - 1.0);
        w[i] = style[j][a][i].weight * gain[i] * jitter;
        wsum += std::abs(style[j][a][i].weight);
      }
      double amp_total = 0.0, rate_total = 0.0;
      for (std::size_t i = 0; i < K; ++i) {
        w[i] *= limit[a] / wsum;
        amp_total += std::abs(w[i]);
        rate_total += std::abs(w[i]) * two_pi * freq[i];
      }
      const double k = std::min(amp_total > limit[a] ? limit[a] / amp_total : 1.0,
                                rate_total > opt.rate_cap ? opt.rate_cap / rate_total : 1.0);
      for (std::size_t i = 0; i < K; ++i) {
        terms[j][a].push_back({w[i] * k, freq[i], phase[i] + style[j][a][i].phase});
      }
    }
  }

  // Root: bounded heading sway and a smooth walk along a random direction.
  const double s = opt.amplitude_scale;
  const double yaw0 = s * (u01(rng) - 0.5);
  const double yaw_amp = s * 0.8 * u01(rng);
  const double yaw_freq = 0.03 + 0.07 * u01(rng);
  const double yaw_phase = two_pi * u01(rng);
  const double speed = s * 1.2 * u01(rng);
  const double heading = two_pi * u01(rng);
  // Vertical bob at the first oscillator's frequency, peak acceleration <= 2 m/s^2.
  const double bob_freq = freq[0];
  const double bob_amp = s * std::min(0.03, 2.0 / std::pow(two_pi * bob_freq, 2));

  const std::size_t frames = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(duration_s * opt.rate_hz)));
  std::vector<PoseFrame> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / opt.rate_hz;
    PoseFrame& p = out[f];
    p.t = t;
    p.theta.resize(J);
    for (std::size_t j = 0; j < J; ++j) {
      Vec3 v = Vec3::Zero();
      for (int a = 0; a < 3; ++a) {
        for (const Term& term : terms[j][a]) v[a] += term.amp * std::sin(two_pi * term.freq * t + term.phase);
      }
      p.theta[j] = AxisAngle(v);
    }
    const double yaw = yaw0 + yaw_amp * std::sin(two_pi * yaw_freq * t + yaw_phase);
    if (yaw != 0.0) {
      const RotationMatrix r = RotationMatrix::about_y(yaw) * rot::axis_angle_to_matrix(p.theta[0]);
      p.theta[0] = rot::matrix_to_axis_angle(r);
    }
    for (auto& th : p.theta) th = th.canonical();
    p.translation = Vec3(speed * t * std::cos(heading),
                         1.0 + bob_amp * std::sin(two_pi * bob_freq * t + phase[0]),
                         speed * t * std::sin(heading));
  }
  return out;
}

std::vector<ImuFrame> tight_imu_from_motion(const Skeleton& skeleton, const SensorLayout& layout,
                                            const std::vector<PoseFrame>& poses) {
  const std::size_t F = poses.size();
  if (F < 5) throw InvalidInput("tight_imu_from_motion: need at least 5 frames, got " + std::to_string(F));
  const double dt = (poses.back().t - poses.front().t) / static_cast<double>(F - 1);
  if (!(dt > 0.0)) throw InvalidInput("tight_imu_from_motion: timestamps must increase");
  for (std::size_t f = 1; f < F; ++f) {
    const double step = poses[f].t - poses[f - 1].t;
    if (std::abs(step - dt) > 0.01 * dt) {
      throw InvalidInput("tight_imu_from_motion: non-uniform timestamps at frame " + std::to_string(f));
    }
  }
  const std::size_t M = layout.size();
  std::vector<ImuFrame> out(F);
  std::vector<std::vector<Vec3>> pos(F, std::vector<Vec3>(M));
  for (std::size_t f = 0; f < F; ++f) {
    const FkResult fk = forward_kinematics(skeleton, poses[f]);
    out[f].t = poses[f].t;
    out[f].sensors.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
      const SensorSpec& s = layout.sensor(m);
      const RotationMatrix& rj = fk.rotations[s.joint];
      out[f].sensors[m].orientation = rot::matrix_to_quat(rj) * s.mount;
      pos[f][m] = fk.positions[s.joint] + rj * s.lever;
    }
  }
  const double inv_dt2 = 1.0 / (dt * dt);
  // Second-order one-sided stencil 2p0 - 5p1 + 4p2 - p3, written on
  // differences so a motionless sensor yields exactly zero.
  auto one_sided = [](const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) -> Vec3 {
    return 2.0 * (p0 - p1) - 3.0 * (p1 - p2) + (p2 - p3);
  };
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t m = 0; m < M; ++m) {
      Vec3 a;
      if (f == 0) {
        a = one_sided(pos[0][m], pos[1][m], pos[2][m], pos[3][m]) * inv_dt2;
      } else if (f == F - 1) {
        a = one_sided(pos[f][m], pos[f - 1][m], pos[f - 2][m], pos[f - 3][m]) * inv_dt2;
      } else {
        const double h1 = poses[f].t - poses[f - 1].t;
        const double h2 = poses[f + 1].t - poses[f].t;
        a = 2.0 * ((pos[f + 1][m] - pos[f][m]) / h2 - (pos[f][m] - pos[f - 1][m]) / h1) / (h1 + h2);
      }
      out[f].sensors[m].acc = a + kGravity;
    }
  }
  return out;
}

nn::Tensor<double> normalize_root_relative(const std::vector<ImuFrame>& frames, const SensorLayout& layout) {
  const std::size_t M = layout.size();
  const std::size_t r = layout.root_index();
  nn::Tensor<double> out(nn::Shape{frames.size(), M, kChannels});
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const ImuFrame& fr = frames[f];
    if (fr.sensors.size() != M) {
      throw ShapeError("frame " + std::to_string(f) + " has " + std::to_string(fr.sensors.size()) +
                       " sensors, layout " + std::to_string(M));
    }
    const Mat3 root_t = rot::quat_to_matrix(fr.sensors[r].orientation).matrix().transpose();
    for (std::size_t m = 0; m < M; ++m) {
      const Mat3 g = rot::quat_to_matrix(fr.sensors[m].orientation).matrix();
      const Mat3 rel = m == r ? g : Mat3(root_t * g);
      const Vec3 acc = m == r ? fr.sensors[m].acc : Vec3(root_t * fr.sensors[m].acc);
      double* d = &out.at({f, m, 0});
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) d[3 * i + k] = rel(i, k);
      for (int i = 0; i < 3; ++i) d[9 + i] = acc[i] * kAccScale;
    }
  }
  return out;
}

std::vector<ImuFrame> denormalize_root_relative(const nn::Tensor<double>& features, const SensorLayout& layout,
                                                const std::vector<double>& timestamps) {
  const std::size_t M = layout.size();
  const std::size_t r = layout.root_index();
  if (features.rank() != 3 || features.dim(1) != M || features.dim(2) != kChannels) {
    throw ShapeError("denormalize: expected [F, " + std::to_string(M) + ", 12], got " +
                     nn::to_string(features.shape()));
  }
  const std::size_t F = timestamps.size();
  if (features.dim(0) < F) throw ShapeError("denormalize: fewer feature frames than timestamps");
  std::vector<ImuFrame> out(F);
  auto block = [&](std::size_t f, std::size_t m, Mat3& rot, Vec3& acc) {
    const double* d = &features.at({f, m, 0});
    Mat3 raw;
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) raw(i, k) = d[3 * i + k];
    rot = RotationMatrix::nearest(raw).matrix();
    for (int i = 0; i < 3; ++i) acc[i] = d[9 + i] / kAccScale;
  };
  for (std::size_t f = 0; f < F; ++f) {
    out[f].t = timestamps[f];
    out[f].sensors.resize(M);
    Mat3 root_rot;
    Vec3 root_acc;
    block(f, r, root_rot, root_acc);
    for (std::size_t m = 0; m < M; ++m) {
      Mat3 rel;
      Vec3 acc;
      block(f, m, rel, acc);
      const Mat3 g = m == r ? rel : Mat3(root_rot * rel);
      const Vec3 a = m == r ? acc : Vec3(root_rot * acc);
      out[f].sensors[m].orientation = rot::matrix_to_quat(RotationMatrix::nearest(g));
      out[f].sensors[m].acc = a;
    }
  }
  return out;
}

}  // namespace gid::kin
