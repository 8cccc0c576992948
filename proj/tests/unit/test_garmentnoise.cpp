#include "gid/errors.hpp"
#include "gid/garmentnoise.hpp"
#include "gid/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gid::noise;
using namespace gid::kin;

namespace {

struct Fixture {
  Skeleton sk = Skeleton::default_body();
  SensorLayout layout = SensorLayout::default_layout(sk);
  std::vector<ImuFrame> tight = tight_imu_from_motion(sk, layout, synth_motion(sk, 11, 30.0));
};

std::vector<ImuFrame> single_sensor_step(std::size_t frames, double step_end_s, double step) {
  std::vector<ImuFrame> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    out[f].t = static_cast<double>(f) / 40.0;
    const double a = out[f].t < step_end_s ? step : 0.0;
    out[f].sensors.push_back({UnitQuaternion::identity(), kGravity + Vec3(a, 0.0, 0.0)});
  }
  return out;
}

double feature_mae(const std::vector<ImuFrame>& a, const std::vector<ImuFrame>& b, const SensorLayout& layout) {
  const auto x = normalize_root_relative(a, layout);
  const auto y = normalize_root_relative(b, layout);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

}  // namespace

TEST(GarmentNoise, ZeroParamsAreBitwiseIdentity) {
  Fixture fx;
  const auto out = corrupt(fx.tight, std::vector<NoiseParams>(fx.layout.size()), 5);
  ASSERT_EQ(out.size(), fx.tight.size());
  for (std::size_t f = 0; f < out.size(); ++f) {
    EXPECT_EQ(out[f].t, fx.tight[f].t);
    for (std::size_t m = 0; m < fx.layout.size(); ++m) {
      EXPECT_EQ(out[f].sensors[m].orientation, fx.tight[f].sensors[m].orientation);
      EXPECT_EQ(out[f].sensors[m].acc, fx.tight[f].sensors[m].acc);
    }
  }
}

TEST(GarmentNoise, DeterministicPerSeed) {
  Fixture fx;
  const NoiseProfiles prof = NoiseProfiles::defaults();
  const auto a = corrupt(fx.tight, fx.layout, prof, 3);
  const auto b = corrupt(fx.tight, fx.layout, prof, 3);
  const auto c = corrupt(fx.tight, fx.layout, prof, 4);
  bool differs = false;
  for (std::size_t f = 0; f < a.size(); ++f)
    for (std::size_t m = 0; m < fx.layout.size(); ++m) {
      EXPECT_EQ(a[f].sensors[m].orientation, b[f].sensors[m].orientation);
      EXPECT_EQ(a[f].sensors[m].acc, b[f].sensors[m].acc);
      differs = differs || !(a[f].sensors[m].acc == c[f].sensors[m].acc);
    }
  EXPECT_TRUE(differs);
}

TEST(GarmentNoise, SlipIsBoundedRandomWalk) {
  Fixture fx;
  NoiseParams p;
  p.slip_sigma = 0.4;
  p.slip_bound = 0.15;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = corrupt(fx.tight, std::vector<NoiseParams>(fx.layout.size(), p), seed);
    double worst = 0.0;
    for (std::size_t f = 0; f < out.size(); ++f)
      for (std::size_t m = 0; m < fx.layout.size(); ++m) {
        worst = std::max(worst, gid::rot::geodesic_angle_rad(out[f].sensors[m].orientation,
                                                             fx.tight[f].sensors[m].orientation));
        EXPECT_EQ(out[f].sensors[m].acc, fx.tight[f].sensors[m].acc);
      }
    EXPECT_LE(worst, p.slip_bound + 1e-9);
    EXPECT_GT(worst, 0.5 * p.slip_bound);
  }
}

TEST(GarmentNoise, SwingStepResponseMatchesDampingRatio) {
  NoiseParams p;
  p.swing_freq = 2.0;
  p.swing_damping = 0.1;
  p.swing_gain = 2.0;
  p.swing_lever = 0.1;
  const auto tight = single_sensor_step(400, 0.1, 5.0);
  const auto out = corrupt(tight, {p}, 1);
  std::vector<Vec3> d;
  for (std::size_t f = 0; f < out.size(); ++f) d.push_back(out[f].sensors[0].acc - tight[f].sensors[0].acc);
  const Vec3 dir = d[8].normalized();  // first free-ringing frame
  std::vector<double> s;
  for (const auto& v : d) s.push_back(v.dot(dir));
  // Positive peaks after the drive ends, refined by parabolic interpolation.
  std::vector<double> peaks;
  for (std::size_t f = 6; f + 1 < s.size(); ++f) {
    if (s[f] > 0.0 && s[f] >= s[f - 1] && s[f] > s[f + 1]) {
      const double a = s[f - 1], b = s[f], c = s[f + 1];
      const double off = 0.5 * (a - c) / (a - 2.0 * b + c);
      peaks.push_back(b - 0.25 * (a - c) * off);
    }
  }
  ASSERT_GE(peaks.size(), 5u);
  const int n = 4;
  const double measured = std::log(peaks[0] / peaks[n]) / n;
  const double z = p.swing_damping;
  const double expected = 2.0 * gid::rot::kPi * z / std::sqrt(1.0 - z * z);
  EXPECT_NEAR(measured, expected, 0.1 * expected);
}

TEST(GarmentNoise, OrientationsStayUnit) {
  Fixture fx;
  const auto out = corrupt(fx.tight, fx.layout, NoiseProfiles::defaults(), 2);
  for (const auto& fr : out)
    for (const auto& s : fr.sensors) {
      const auto c = s.orientation.coeffs();
      EXPECT_NEAR(c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3], 1.0, 1e-9);
    }
}

TEST(GarmentNoise, DefaultDisturbanceIsStructured) {
  Fixture fx;
  const NoiseProfiles prof = NoiseProfiles::defaults();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto out = corrupt(fx.tight, fx.layout, prof, seed);
    for (std::size_t m = 0; m < fx.layout.size(); ++m) {
      std::vector<Vec3> d;
      Vec3 mean = Vec3::Zero();
      for (std::size_t f = 0; f < out.size(); ++f) {
        d.push_back(out[f].sensors[m].acc - fx.tight[f].sensors[m].acc);
        mean += d.back();
      }
      mean /= static_cast<double>(d.size());
      double num = 0.0, den = 0.0;
      for (std::size_t f = 0; f < d.size(); ++f) {
        den += (d[f] - mean).squaredNorm();
        if (f + 1 < d.size()) num += (d[f] - mean).dot(d[f + 1] - mean);
      }
      EXPECT_GT(num / den, 0.5) << "sensor " << fx.layout.sensor(m).id << " seed " << seed;
    }
  }
}

TEST(GarmentNoise, DefaultsRaiseFeatureMae) {
  Fixture fx;
  const auto loose = corrupt(fx.tight, fx.layout, NoiseProfiles::defaults(), 1);
  EXPECT_GT(feature_mae(loose, fx.tight, fx.layout), 0.05);
}

TEST(NoiseProfiles, OrderedByLocation) {
  const NoiseProfiles p = NoiseProfiles::defaults();
  const auto& fore = p.location("forearm");
  const auto& waist = p.location("waist");
  const auto& back = p.location("back");
  EXPECT_LT(back.swing_gain, fore.swing_gain);
  EXPECT_LT(back.swing_gain, waist.swing_gain);
  EXPECT_LT(waist.swing_gain, fore.swing_gain);
  EXPECT_LT(back.slip_bound, waist.slip_bound);
  EXPECT_LT(waist.slip_bound, fore.slip_bound);
  const auto layout = SensorLayout::default_layout(Skeleton::default_body());
  EXPECT_EQ(p.for_layout(layout).size(), layout.size());
}

TEST(NoiseProfiles, FileRoundTrip) {
  const NoiseProfiles p = NoiseProfiles::defaults();
  const std::string text = p.serialize();
  const NoiseProfiles back = NoiseProfiles::parse(text);
  EXPECT_EQ(back, p);
  EXPECT_EQ(back.serialize(), text);
  const NoiseProfiles shaken = p.perturbed(9, 0.25);
  EXPECT_EQ(NoiseProfiles::parse(shaken.serialize()), shaken);
}

TEST(NoiseProfiles, PerturbationStaysWithinFraction) {
  const NoiseProfiles p = NoiseProfiles::defaults();
  const NoiseProfiles q = p.perturbed(3, 0.25);
  for (std::size_t i = 0; i < p.locations().size(); ++i) {
    const auto& a = p.locations()[i].params;
    const auto& b = q.locations()[i].params;
    EXPECT_GE(b.swing_gain, 0.75 * a.swing_gain);
    EXPECT_LE(b.swing_gain, 1.25 * a.swing_gain);
    EXPECT_NE(b.swing_gain, a.swing_gain);
  }
}

TEST(NoiseProfiles, InvalidParamsRejected) {
  Fixture fx;
  NoiseParams p;
  p.slip_sigma = -1.0;
  EXPECT_THROW(corrupt(fx.tight, std::vector<NoiseParams>(6, p), 1), gid::ConfigError);
  p = {};
  p.swing_gain = 1.0;
  p.swing_freq = 2.0;
  p.swing_damping = 1.0;
  EXPECT_THROW(corrupt(fx.tight, std::vector<NoiseParams>(6, p), 1), gid::ConfigError);
  p = {};
  p.deform_cutoff = 25.0;
  EXPECT_THROW(corrupt(fx.tight, std::vector<NoiseParams>(6, p), 1), gid::ConfigError);
  EXPECT_THROW(NoiseProfiles::parse("schema_version=2\n"), gid::ConfigError);
  EXPECT_THROW(corrupt(fx.tight, std::vector<NoiseParams>(2), 1), gid::ConfigError);
}
