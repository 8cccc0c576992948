#include "gid/pipeline.hpp"

#include "gid/detail/stitch.hpp"
#include "gid/errors.hpp"
#include "gid/trainer.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

namespace gid::pipeline {

using rot::UnitQuaternion;
using rot::Vec3;

UnitQuaternion chordal_mean(const std::vector<UnitQuaternion>& qs) {
  if (qs.empty()) throw InsufficientData("chordal_mean of no orientations");
  Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
  for (const auto& q : qs) {
    const Eigen::Vector4d v(q.w(), q.x(), q.y(), q.z());
    acc += v * v.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(acc);
  const Eigen::Vector4d v = es.eigenvectors().col(3);
  return UnitQuaternion(v[0], v[1], v[2], v[3]);
}

CalibrationState calibrate_tpose(const std::vector<kin::ImuFrame>& frames, const kin::Skeleton& skeleton,
                                 const kin::SensorLayout& layout, double rate_hz) {
  if (!(rate_hz > 0.0)) throw InvalidInput("calibration: rate must be positive");
  const double seconds = static_cast<double>(frames.size()) / rate_hz;
  if (seconds < kMinCalibrationSeconds) {
    throw InsufficientData("calibration needs at least 3 s of frames, got " + std::to_string(seconds) + " s");
  }
  // Reference orientations: the ideal sensors of a motionless T-pose.
  kin::PoseFrame tpose;
  tpose.theta.assign(skeleton.size(), rot::AxisAngle());
  std::vector<kin::PoseFrame> still(5, tpose);
  for (std::size_t i = 0; i < still.size(); ++i) still[i].t = static_cast<double>(i) / rate_hz;
  const auto ref = kin::tight_imu_from_motion(skeleton, layout, still).front();

  CalibrationState st;
  const std::size_t M = layout.size();
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<UnitQuaternion> qs;
    qs.reserve(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
      if (frames[f].sensors.size() != M) throw ShapeError("calibration frame " + std::to_string(f) + ": sensor count");
      qs.push_back(frames[f].sensors[m].orientation);
    }
    const UnitQuaternion mean = chordal_mean(qs);
    SensorCalibration c;
    c.frames = qs.size();
    for (const auto& q : qs) c.spread_deg = std::max(c.spread_deg, rot::geodesic_angle_rad(q, mean) * 180.0 / M_PI);
    if (c.spread_deg >= kMaxCalibrationSpreadDeg) {
      throw CalibrationMotionError("sensor " + layout.sensor(m).id + " moved " + std::to_string(c.spread_deg) +
                                   " deg during calibration (limit 5)");
    }
    c.offset = ref.sensors[m].orientation * mean.inverse();
    st.sensors.push_back(c);
  }
  return st;
}

std::vector<kin::ImuFrame> apply_calibration(const std::vector<kin::ImuFrame>& frames, const CalibrationState& cal) {
  std::vector<kin::ImuFrame> out = frames;
  for (auto& f : out) {
    if (f.sensors.size() != cal.sensors.size()) throw ShapeError("calibration and stream differ in sensor count");
    for (std::size_t m = 0; m < f.sensors.size(); ++m) {
      const UnitQuaternion& o = cal.sensors[m].offset;
      f.sensors[m].orientation = o * f.sensors[m].orientation;
      f.sensors[m].acc = o.rotate(f.sensors[m].acc);
    }
  }
  return out;
}

namespace {

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return out;
}

void check_features(const Tensor<double>& f, std::size_t M, std::size_t C, const char* what) {
  if (f.rank() != 3 || f.dim(1) != M || f.dim(2) != C) {
    throw ShapeError(std::string(what) + ": expected features [F, " + std::to_string(M) + ", " + std::to_string(C) +
                     "], got " + nn::to_string(f.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<double> denoise_sequence(const nn::GidNet<T>* gid, const Tensor<double>& features) {
  if (gid == nullptr) return features;
  const auto& cfg = gid->config();
  check_features(features, cfg.sensors, cfg.channels, "denoise");
  const Tensor<T> x = cast<T>(features);
  const Tensor<T> y = nn::stitch_windows(x, cfg.window, cfg.sensors * cfg.channels,
                                         [&](const Tensor<T>& batch) { return gid->infer(batch, false); });
  return Tensor<double>(features.shape(), std::vector<double>(y.values().begin(), y.values().end()));
}

template <typename T>
Tensor<double> predict_sequence(const nn::PoseNet<T>& pose, const Tensor<double>& features) {
  const auto& cfg = pose.config();
  check_features(features, cfg.sensors, cfg.channels, "predict");
  const Tensor<T> x = cast<T>(features);
  const Tensor<T> y = nn::stitch_windows(x, cfg.window, cfg.joints * 3,
                                         [&](const Tensor<T>& batch) { return pose.infer(batch, false); });
  return Tensor<double>(nn::Shape{features.dim(0), cfg.joints, 3},
                        std::vector<double>(y.values().begin(), y.values().end()));
}

std::vector<kin::PoseFrame> to_pose_frames(const Tensor<double>& aa, const std::vector<double>& timestamps) {
  const std::size_t F = aa.dim(0), J = aa.dim(1);
  std::vector<kin::PoseFrame> out(F);
  for (std::size_t f = 0; f < F; ++f) {
    out[f].t = f < timestamps.size() ? timestamps[f] : 0.0;
    out[f].theta.reserve(J);
    for (std::size_t j = 0; j < J; ++j) {
      const double* p = aa.data() + (f * J + j) * 3;
      out[f].theta.emplace_back(p[0], p[1], p[2]);
    }
  }
  return out;
}

namespace {

struct Accum {
  double ang = 0.0, pos = 0.0, jit = 0.0, mae = 0.0, frames = 0.0;
  std::vector<double> per_joint;
  std::size_t sequences = 0;

  void add(const metrics::Poses& pred, const metrics::Poses& gt, const kin::Skeleton& sk, double rate,
           double imu_mae) {
    const double w = static_cast<double>(pred.size());
    const auto pj = metrics::angular_error_per_joint(pred, gt, sk);
    if (per_joint.empty()) per_joint.assign(pj.size(), 0.0);
    double a = 0.0;
    for (std::size_t j = 0; j < pj.size(); ++j) {
      per_joint[j] += w * pj[j];
      a += pj[j];
    }
    ang += w * a / static_cast<double>(pj.size());
    pos += w * metrics::positional_error_cm(pred, gt, sk);
    jit += w * metrics::jitter(pred, sk, rate);
    mae += w * imu_mae;
    frames += w;
    ++sequences;
  }

  metrics::EvalReport report(const std::string& label) const {
    metrics::EvalReport r;
    r.label = label;
    r.sequences = sequences;
    if (frames == 0.0) return r;
    r.ang_deg = ang / frames;
    r.pos_cm = pos / frames;
    r.jitter = jit / frames;
    r.jitter_scaled = r.jitter / metrics::kJitterTableScale;
    r.imu_mae = mae / frames;
    for (double v : per_joint) r.per_joint_deg.push_back(v / frames);
    return r;
  }
};

std::vector<double> timestamps(const io::PoseSequence& s) {
  std::vector<double> t;
  for (const auto& f : s.frames) t.push_back(f.t);
  return t;
}

}  // namespace

template <typename T>
EvalPair evaluate(const std::vector<const data::Clip*>& clips, const kin::Skeleton& skeleton,
                  const kin::SensorLayout& layout, const nn::GidNet<T>* gid, const nn::PoseNet<T>& pose,
                  const std::string& label) {
  if (clips.empty()) throw InsufficientData("evaluate: no sequences");
  Accum with, without;
  for (const data::Clip* c : clips) {
    const Tensor<double> tight = data::features(c->tight, layout);
    const Tensor<double> loose = data::features(c->loose, layout);
    const Tensor<double> den = denoise_sequence(gid, loose);
    const auto ts = timestamps(c->pose);
    const double rate = c->tight.rate_hz;
    const auto pred_raw = to_pose_frames(predict_sequence(pose, loose), ts);
    const auto pred_den = gid == nullptr ? pred_raw : to_pose_frames(predict_sequence(pose, den), ts);
    without.add(pred_raw, c->pose.frames, skeleton, rate, train::mae_loss(loose, tight));
    with.add(pred_den, c->pose.frames, skeleton, rate, metrics::imu_mae(den, tight));
  }
  return {with.report(label), without.report(label + "_without_gid")};
}

template <typename T>
metrics::EvalReport evaluate_direct(const std::vector<const data::Clip*>& clips, const kin::Skeleton& skeleton,
                                    const kin::SensorLayout& layout, const nn::PoseNet<T>& pose,
                                    const std::string& label) {
  if (clips.empty()) throw InsufficientData("evaluate: no sequences");
  Accum acc;
  for (const data::Clip* c : clips) {
    const Tensor<double> tight = data::features(c->tight, layout);
    const Tensor<double> loose = data::features(c->loose, layout);
    const auto pred = to_pose_frames(predict_sequence(pose, loose), timestamps(c->pose));
    acc.add(pred, c->pose.frames, skeleton, c->tight.rate_hz, train::mae_loss(loose, tight));
  }
  return acc.report(label);
}

// ---------------------------------------------------------------- streaming

double StreamResult::percentile_ms(double p) const {
  if (latency_ms.empty()) return 0.0;
  std::vector<double> v = latency_ms;
  std::sort(v.begin(), v.end());
  const double rank = std::ceil(p / 100.0 * static_cast<double>(v.size()));
  const std::size_t i = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(v.size()))) - 1;
  return v[i];
}

namespace {

using Clock = std::chrono::steady_clock;

struct Item {
  std::size_t frame;
  Clock::time_point arrival;
};

class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t cap) : cap_(cap) {}

  void push(Item it) {
    std::unique_lock lk(mu_);
    not_full_.wait(lk, [&] { return q_.size() < cap_; });
    q_.push_back(it);
    not_empty_.notify_one();
  }
  void close() {
    std::lock_guard lk(mu_);
    closed_ = true;
    not_empty_.notify_all();
  }
  std::optional<Item> pop() {
    std::unique_lock lk(mu_);
    not_empty_.wait(lk, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    Item it = q_.front();
    q_.pop_front();
    not_full_.notify_one();
    return it;
  }

 private:
  std::size_t cap_;
  std::deque<Item> q_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
};

/// Copies the window ending at `last` into slot `b` of `dst` [B, T, M, C],
/// left-padding with frame 0.
template <typename T>
void fill_window(const Tensor<double>& x, std::size_t last, std::size_t window, Tensor<T>& dst, std::size_t b) {
  const std::size_t per = x.dim(1) * x.dim(2);
  for (std::size_t t = 0; t < window; ++t) {
    const std::ptrdiff_t f = static_cast<std::ptrdiff_t>(last) - static_cast<std::ptrdiff_t>(window - 1 - t);
    const double* src = x.data() + static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, f)) * per;
    T* d = dst.data() + (b * window + t) * per;
    for (std::size_t i = 0; i < per; ++i) d[i] = static_cast<T>(src[i]);
  }
}

template <typename T>
void check_pair(const nn::GidNet<T>* gid, const nn::PoseNet<T>& pose, const Tensor<double>& x) {
  const auto& pc = pose.config();
  check_features(x, pc.sensors, pc.channels, "stream");
  if (gid != nullptr) {
    const auto& gc = gid->config();
    if (gc.window != pc.window || gc.sensors != pc.sensors || gc.channels != pc.channels) {
      throw ConfigError("denoiser and pose network disagree on window or sensor layout");
    }
  }
}

}  // namespace

template <typename T>
StreamResult stream_replay(const Tensor<double>& features, const nn::GidNet<T>* gid, const nn::PoseNet<T>& pose,
                           const StreamOptions& o) {
  const auto& pc = pose.config();
  const std::size_t W = pc.window, J = pc.joints;
  StreamResult res;
  res.warmup = W - 1;
  if (features.size() == 0) {
    res.poses = Tensor<double>(nn::Shape{0, J, 3});
    return res;
  }
  check_pair(gid, pose, features);
  if (!(o.rate_hz > 0.0)) throw InvalidInput("stream: rate must be positive");
  const std::size_t F = features.dim(0);
  res.poses = Tensor<double>(nn::Shape{F, J, 3});
  res.latency_ms.resize(F);

  BoundedQueue queue(std::max<std::size_t>(1, o.queue_capacity));
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / o.rate_hz));
  std::thread producer([&] {
    const auto start = Clock::now();
    for (std::size_t f = 0; f < F; ++f) {
      const auto due = start + period * static_cast<long>(f);
      if (o.pace) std::this_thread::sleep_until(due);
      queue.push({f, o.pace ? std::max(due, Clock::now()) : Clock::now()});
    }
    queue.close();
  });

  const double period_ms = 1000.0 / o.rate_hz;
  Tensor<T> win(nn::Shape{1, W, pc.sensors, pc.channels});
  try {
    while (auto it = queue.pop()) {
      fill_window(features, it->frame, W, win, 0);
      const Tensor<T> den = gid != nullptr ? gid->infer(win, o.causal) : win;
      const Tensor<T> y = pose.infer(den, o.causal);
      const T* last = y.data() + (W - 1) * J * 3;
      for (std::size_t k = 0; k < J * 3; ++k) res.poses[it->frame * J * 3 + k] = static_cast<double>(last[k]);
      const double ms = std::chrono::duration<double, std::milli>(Clock::now() - it->arrival).count();
      res.latency_ms[it->frame] = ms;
      if (ms > period_ms) ++res.overruns;
    }
  } catch (...) {
    // Drain so the producer can finish before the exception propagates.
    while (queue.pop()) {
    }
    producer.join();
    throw;
  }
  producer.join();
  res.overrun_flag = static_cast<double>(res.overruns) > 0.01 * static_cast<double>(F);
  return res;
}

template <typename T>
Tensor<double> offline_sliding(const Tensor<double>& features, const nn::GidNet<T>* gid, const nn::PoseNet<T>& pose,
                               bool causal) {
  const auto& pc = pose.config();
  const std::size_t W = pc.window, J = pc.joints;
  if (features.size() == 0) return Tensor<double>(nn::Shape{0, J, 3});
  check_pair(gid, pose, features);
  const std::size_t F = features.dim(0);
  Tensor<double> out(nn::Shape{F, J, 3});
  constexpr std::size_t kBatch = 16;
  for (std::size_t f0 = 0; f0 < F; f0 += kBatch) {
    const std::size_t nb = std::min(kBatch, F - f0);
    Tensor<T> batch(nn::Shape{nb, W, pc.sensors, pc.channels});
    for (std::size_t b = 0; b < nb; ++b) fill_window(features, f0 + b, W, batch, b);
    const Tensor<T> den = gid != nullptr ? gid->infer(batch, causal) : batch;
    const Tensor<T> y = pose.infer(den, causal);
    for (std::size_t b = 0; b < nb; ++b) {
      const T* last = y.data() + ((b * W) + W - 1) * J * 3;
      for (std::size_t k = 0; k < J * 3; ++k) out[(f0 + b) * J * 3 + k] = static_cast<double>(last[k]);
    }
  }
  return out;
}

#define GID_PIPELINE_INSTANTIATE(T)                                                                               \
  template Tensor<double> denoise_sequence(const nn::GidNet<T>*, const Tensor<double>&);                          \
  template Tensor<double> predict_sequence(const nn::PoseNet<T>&, const Tensor<double>&);                         \
  template EvalPair evaluate(const std::vector<const data::Clip*>&, const kin::Skeleton&, const kin::SensorLayout&, \
                             const nn::GidNet<T>*, const nn::PoseNet<T>&, const std::string&);                     \
  template metrics::EvalReport evaluate_direct(const std::vector<const data::Clip*>&, const kin::Skeleton&,       \
                                               const kin::SensorLayout&, const nn::PoseNet<T>&,                   \
                                               const std::string&);                                               \
  template StreamResult stream_replay(const Tensor<double>&, const nn::GidNet<T>*, const nn::PoseNet<T>&,         \
                                      const StreamOptions&);                                                      \
  template Tensor<double> offline_sliding(const Tensor<double>&, const nn::GidNet<T>*, const nn::PoseNet<T>&, bool);

GID_PIPELINE_INSTANTIATE(float)
GID_PIPELINE_INSTANTIATE(double)

}  // namespace gid::pipeline
