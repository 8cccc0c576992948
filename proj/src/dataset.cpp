#include "gid/dataset.hpp"

#include "gid/errors.hpp"
#include "gid/textconfig.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

namespace gid::data {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string Manifest::serialize() const {
  KeyValueText kv;
  kv.set("format", "gid-dataset");
  kv.set("version", "1");
  kv.set("seed", std::to_string(seed));
  kv.set("rate_hz", rate_hz);
  kv.set("clip_seconds", clip_seconds);
  kv.set("profile", profile);
  kv.set("skeleton", skeleton);
  for (const auto& c : clips) {
    kv.set(c.name, "split", to_string(c.split));
    kv.set(c.name, "motion_seed", std::to_string(c.motion_seed));
    kv.set(c.name, "noise_seed", std::to_string(c.noise_seed));
  }
  return kv.serialize();
}

Manifest Manifest::parse(const std::string& text) {
  const KeyValueText kv = KeyValueText::parse(text);
  if (kv.get_string("format", "") != "gid-dataset") throw FormatError("not a dataset manifest");
  Manifest m;
  m.seed = std::stoull(kv.get("seed"));
  m.rate_hz = kv.get_double("rate_hz");
  m.clip_seconds = kv.get_double("clip_seconds");
  m.profile = kv.get("profile");
  m.skeleton = kv.get("skeleton");
  for (const auto& name : kv.sections()) {
    ClipInfo c;
    c.name = name;
    c.split = parse_split(kv.get(name, "split"));
    c.motion_seed = std::stoull(kv.get(name, "motion_seed"));
    c.noise_seed = std::stoull(kv.get(name, "noise_seed"));
    m.clips.push_back(c);
  }
  return m;
}

std::vector<std::uint64_t> Manifest::motion_seeds(Split s) const {
  std::vector<std::uint64_t> out;
  for (const auto& c : clips)
    if (c.split == s) out.push_back(c.motion_seed);
  return out;
}

std::vector<const Clip*> Dataset::split(Split s) const {
  std::vector<const Clip*> out;
  for (const auto& c : clips)
    if (c.info.split == s) out.push_back(&c);
  return out;
}

Dataset generate(const kin::Skeleton& skeleton, const kin::SensorLayout& layout,
                 const noise::NoiseProfiles& profiles, const GenOptions& o) {
  if (!(o.minutes >= 0.0) || !(o.test_minutes >= 0.0) || !(o.clip_seconds >= 1.0)) {
    throw ConfigError("gen-data: minutes must be non-negative and clips at least 1 s long");
  }
  if (!(o.val_fraction >= 0.0 && o.val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  const auto n_main = static_cast<std::size_t>(std::llround(o.minutes * 60.0 / o.clip_seconds));
  const auto n_test = static_cast<std::size_t>(std::llround(o.test_minutes * 60.0 / o.clip_seconds));
  std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n_main) * o.val_fraction));
  if (o.val_fraction > 0.0 && n_main >= 2) n_val = std::max<std::size_t>(n_val, 1);
  const std::size_t n_train = n_main - n_val;

  Dataset ds;
  ds.manifest.seed = o.seed;
  ds.manifest.clip_seconds = o.clip_seconds;
  ds.manifest.profile = o.profile_name;
  std::set<std::uint64_t> used;
  auto add = [&](Split split, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      ClipInfo c;
      c.split = split;
      char name[32];
      std::snprintf(name, sizeof name, "%s_%03zu", to_string(split).c_str(), i);
      c.name = name;
      const std::uint64_t tag = (static_cast<std::uint64_t>(split) + 1) << 32 | i;
      c.motion_seed = mix_seed(o.seed, tag);
      c.noise_seed = mix_seed(c.motion_seed, 0x6e6f697365ULL);
      if (!used.insert(c.motion_seed).second) throw ConfigError("duplicate clip seed");
      ds.manifest.clips.push_back(c);
    }
  };
  add(Split::train, n_train);
  add(Split::val, n_val);
  add(Split::test, n_test);

  for (const auto& info : ds.manifest.clips) {
    Clip clip;
    clip.info = info;
    auto poses = kin::synth_motion(skeleton, info.motion_seed, o.clip_seconds);
    auto tight = kin::tight_imu_from_motion(skeleton, layout, poses);
    auto loose = noise::corrupt(tight, layout, profiles, info.noise_seed);
    clip.tight.sensor_names = layout.names();
    clip.tight.provenance = io::Provenance::tight;
    clip.tight.frames = std::move(tight);
    clip.loose.sensor_names = layout.names();
    clip.loose.provenance = io::Provenance::loose;
    clip.loose.frames = std::move(loose);
    clip.pose.joints = skeleton.size();
    clip.pose.frames = std::move(poses);
    ds.clips.push_back(std::move(clip));
  }
  return ds;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidInput("cannot create directory " + dir + ": " + ec.message());
  write_file((fs::path(dir) / "manifest.txt").string(), ds.manifest.serialize());
  for (const auto& c : ds.clips) {
    io::save_imu((fs::path(dir) / (c.info.name + "_tight.csv")).string(), c.tight);
    io::save_imu((fs::path(dir) / (c.info.name + "_loose.csv")).string(), c.loose);
    io::save_pose((fs::path(dir) / (c.info.name + "_pose.csv")).string(), c.pose);
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.manifest = Manifest::parse(read_file((fs::path(dir) / "manifest.txt").string()));
  for (const auto& info : ds.manifest.clips) {
    Clip c;
    c.info = info;
    c.tight = io::load_imu((fs::path(dir) / (info.name + "_tight.csv")).string());
    c.loose = io::load_imu((fs::path(dir) / (info.name + "_loose.csv")).string());
    c.pose = io::load_pose((fs::path(dir) / (info.name + "_pose.csv")).string());
    if (c.tight.provenance != io::Provenance::tight || c.loose.provenance != io::Provenance::loose) {
      throw ProvenanceError("clip " + info.name + ": tight/loose files carry the wrong provenance tags");
    }
    if (c.tight.frames.size() != c.loose.frames.size() || c.tight.frames.size() != c.pose.frames.size()) {
      throw FormatError("clip " + info.name + ": streams differ in length");
    }
    ds.clips.push_back(std::move(c));
  }
  return ds;
}

std::vector<std::size_t> window_starts(std::size_t frames, std::size_t window) {
  std::vector<std::size_t> out;
  const std::size_t stride = std::max<std::size_t>(1, window / 2);
  for (std::size_t s = 0; s + window <= frames; s += stride) out.push_back(s);
  return out;
}

template <typename T>
nn::Tensor<T> make_windows(const std::vector<nn::Tensor<double>>& sequences, std::size_t window) {
  std::size_t n = 0;
  nn::Shape tail;
  for (const auto& s : sequences) {
    nn::Shape st(s.shape().begin() + 1, s.shape().end());
    if (n == 0 && tail.empty()) tail = st;
    if (st != tail) throw ShapeError("make_windows: sequences differ in frame shape");
    n += window_starts(s.dim(0), window).size();
  }
  nn::Shape shape{n, window};
  shape.insert(shape.end(), tail.begin(), tail.end());
  nn::Tensor<T> out(shape);
  std::size_t per = 1;
  for (auto d : tail) per *= d;
  std::size_t w = 0;
  for (const auto& s : sequences) {
    for (std::size_t start : window_starts(s.dim(0), window)) {
      const double* src = s.data() + start * per;
      T* dst = out.data() + w * window * per;
      for (std::size_t i = 0; i < window * per; ++i) dst[i] = static_cast<T>(src[i]);
      ++w;
    }
  }
  return out;
}

template nn::Tensor<float> make_windows(const std::vector<nn::Tensor<double>>&, std::size_t);
template nn::Tensor<double> make_windows(const std::vector<nn::Tensor<double>>&, std::size_t);

nn::Tensor<double> features(const io::ImuSequence& seq, const kin::SensorLayout& layout) {
  const auto names = layout.names();
  if (seq.sensor_names == names) return kin::normalize_root_relative(seq.frames, layout);
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    auto it = std::find(seq.sensor_names.begin(), seq.sensor_names.end(), n);
    if (it == seq.sensor_names.end()) throw ConfigError("sequence has no sensor " + n);
    idx.push_back(static_cast<std::size_t>(it - seq.sensor_names.begin()));
  }
  std::vector<kin::ImuFrame> frames;
  frames.reserve(seq.frames.size());
  for (const auto& f : seq.frames) {
    kin::ImuFrame g;
    g.t = f.t;
    for (std::size_t i : idx) g.sensors.push_back(f.sensors[i]);
    frames.push_back(std::move(g));
  }
  return kin::normalize_root_relative(frames, layout);
}

nn::Tensor<double> pose_rotations(const io::PoseSequence& seq) {
  const std::size_t F = seq.frames.size(), J = seq.joints;
  nn::Tensor<double> out(nn::Shape{F, J, 9});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t j = 0; j < J; ++j) {
      const auto R = rot::axis_angle_to_matrix(seq.frames[f].theta[j]).matrix();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out[(f * J + j) * 9 + 3 * r + c] = R(r, c);
    }
  return out;
}

nn::Tensor<double> pose_positions(const io::PoseSequence& seq, const kin::Skeleton& skeleton) {
  const std::size_t F = seq.frames.size(), J = seq.joints;
  if (J != skeleton.size()) throw ConfigError("pose sequence and skeleton differ in joint count");
  nn::Tensor<double> out(nn::Shape{F, J, 3});
  for (std::size_t f = 0; f < F; ++f) {
    kin::PoseFrame p = seq.frames[f];
    p.translation = rot::Vec3::Zero();
    const auto fk = kin::forward_kinematics(skeleton, p);
    for (std::size_t j = 0; j < J; ++j)
      for (int k = 0; k < 3; ++k) out[(f * J + j) * 3 + k] = fk.positions[j][k];
  }
  return out;
}

}  // namespace gid::data
