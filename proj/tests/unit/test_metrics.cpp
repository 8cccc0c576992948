#include "gid/errors.hpp"
#include "gid/metrics.hpp"
#include "gid/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gid;
using gid::kin::Joint;
using gid::kin::PoseFrame;
using gid::rot::AxisAngle;
using gid::rot::Vec3;

namespace {

kin::Skeleton chain2() {
  return kin::Skeleton({Joint{"root", -1, Vec3::Zero()}, Joint{"hand", 0, Vec3(0.3, 0.0, 0.0)}});
}

kin::Skeleton single() { return kin::Skeleton({Joint{"root", -1, Vec3::Zero()}}); }

PoseFrame frame(std::vector<AxisAngle> theta, Vec3 tr = Vec3::Zero(), double t = 0.0) {
  PoseFrame f;
  f.t = t;
  f.translation = tr;
  f.theta = std::move(theta);
  return f;
}

metrics::Poses random_poses(const kin::Skeleton& sk, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  metrics::Poses out;
  for (std::size_t f = 0; f < n; ++f) {
    std::vector<AxisAngle> th;
    for (std::size_t j = 0; j < sk.size(); ++j) th.emplace_back(u(rng), u(rng), u(rng));
    out.push_back(frame(th, Vec3(u(rng), u(rng), u(rng)), 0.025 * static_cast<double>(f)));
  }
  return out;
}

metrics::Poses root_track(const std::function<double(double)>& x, std::size_t n, double rate) {
  metrics::Poses out;
  for (std::size_t f = 0; f < n; ++f) {
    const double t = static_cast<double>(f) / rate;
    out.push_back(frame({AxisAngle()}, Vec3(x(t), 0.0, 0.0), t));
  }
  return out;
}

}  // namespace

TEST(AngularError, IdenticalIsZeroAndNinetyDegreeCase) {
  const auto sk = single();
  const metrics::Poses a{frame({AxisAngle()})};
  EXPECT_EQ(metrics::angular_error_deg(a, a, sk), 0.0);
  const metrics::Poses b{frame({AxisAngle(0.0, 0.0, M_PI / 2)})};
  EXPECT_NEAR(metrics::angular_error_deg(a, b, sk), 90.0, 1e-9);
}

TEST(AngularError, RootRotationPropagatesThroughChain) {
  const auto sk = chain2();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  metrics::Poses pred, gt;
  for (int f = 0; f < 5; ++f) {
    const rot::RotationMatrix r0 = rot::axis_angle_to_matrix(AxisAngle(u(rng), u(rng), u(rng)));
    const AxisAngle child(u(rng), u(rng), u(rng));
    pred.push_back(frame({rot::matrix_to_axis_angle(r0), child}));
    // gt root = Rz(30) * pred root, local child rotation unchanged.
    gt.push_back(frame({rot::matrix_to_axis_angle(rot::RotationMatrix::about_z(M_PI / 6) * r0), child}));
  }
  const auto per = metrics::angular_error_per_joint(pred, gt, sk);
  EXPECT_NEAR(per[0], 30.0, 1e-9);
  EXPECT_NEAR(per[1], 30.0, 1e-9);
  EXPECT_NEAR(metrics::angular_error_deg(pred, gt, sk), 30.0, 1e-9);
}

TEST(AngularError, SymmetricAndFrameOrderInvariant) {
  const auto sk = kin::Skeleton::default_body();
  std::mt19937_64 rng(2);
  auto a = random_poses(sk, 7, rng);
  auto b = random_poses(sk, 7, rng);
  const double ab = metrics::angular_error_deg(a, b, sk);
  EXPECT_NEAR(ab, metrics::angular_error_deg(b, a, sk), 1e-12);
  std::reverse(a.begin(), a.end());
  std::reverse(b.begin(), b.end());
  EXPECT_NEAR(ab, metrics::angular_error_deg(a, b, sk), 1e-12);
  b.pop_back();
  EXPECT_THROW(metrics::angular_error_deg(a, b, sk), InvalidInput);
}

TEST(PositionalError, HandChainFiveCentimetres) {
  const auto sk = chain2();
  // Rotating the root moves the hand along a chord of length 2 L sin(a / 2).
  const double a = 2.0 * std::asin(0.05 / (2.0 * 0.3));
  const metrics::Poses pred{frame({AxisAngle(), AxisAngle()})};
  const metrics::Poses gt{frame({AxisAngle(0.0, 0.0, a), AxisAngle()}, Vec3(4.0, 5.0, 6.0))};
  EXPECT_NEAR(metrics::positional_error_cm(pred, gt, sk), 2.5, 1e-9);
  EXPECT_EQ(metrics::positional_error_cm(pred, pred, sk), 0.0);
}

TEST(PositionalError, RigidRotationOfBothIsInvariant) {
  const auto sk = kin::Skeleton::default_body();
  std::mt19937_64 rng(3);
  auto a = random_poses(sk, 4, rng);
  auto b = random_poses(sk, 4, rng);
  const double before = metrics::positional_error_cm(a, b, sk);
  const auto g = rot::axis_angle_to_matrix(AxisAngle(0.3, -1.1, 0.7));
  for (auto* s : {&a, &b})
    for (auto& f : *s) {
      f.theta[0] = rot::matrix_to_axis_angle(g * rot::axis_angle_to_matrix(f.theta[0]));
      f.translation = g * f.translation;
    }
  EXPECT_NEAR(metrics::positional_error_cm(a, b, sk), before, 1e-9);
}

TEST(Jitter, CubicGivesSixAtAnyRate) {
  const auto sk = single();
  for (double rate : {10.0, 40.0, 120.0}) {
    const auto p = root_track([](double t) { return t * t * t; }, 12, rate);
    EXPECT_NEAR(metrics::jitter(p, sk, rate), 6.0, 1e-6) << rate;
  }
}

TEST(Jitter, StaticAndConstantAccelerationAreZero) {
  const auto sk = single();
  const auto still = root_track([](double) { return 0.7; }, 10, 40.0);
  EXPECT_EQ(metrics::jitter(still, sk, 40.0), 0.0);
  const auto quad = root_track([](double t) { return 0.5 * 3.0 * t * t; }, 40, 40.0);
  EXPECT_NEAR(metrics::jitter(quad, sk, 40.0), 0.0, 1e-9);
  EXPECT_THROW(metrics::jitter(metrics::Poses(quad.begin(), quad.begin() + 3), sk, 40.0), InvalidInput);
}

TEST(ImuMae, DelegatesToTrainingLoss) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  nn::Tensor<double> a(nn::Shape{3, 8, 2, 12}), b(a.shape());
  for (auto& v : a.values()) v = n(rng);
  for (auto& v : b.values()) v = n(rng);
  EXPECT_EQ(metrics::imu_mae(a, b), train::mae_loss(a, b));
  EXPECT_EQ(metrics::imu_mae(a, a), 0.0);
}

TEST(Report, CsvRoundTripAndMeshMarker) {
  metrics::EvalReport r;
  r.label = "full";
  r.ang_deg = 12.3456789012345;
  r.pos_cm = 4.5;
  r.jitter = 123.25;
  r.jitter_scaled = 1.2325;
  r.imu_mae = 0.0313;
  metrics::EvalReport s = r;
  s.label = "no_fps";
  s.ang_deg = 1.0 / 3.0;
  const std::string csv = metrics::report_csv({r, s});
  EXPECT_NE(csv.find("not_computed"), std::string::npos);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "label,ang_deg,pos_cm,mesh,jitter,jitter_scaled,imu_mae");
  const auto back = metrics::parse_report_csv(csv);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], r);
  EXPECT_EQ(back[1], s);
  EXPECT_THROW(metrics::parse_report_csv("nope\n"), FormatError);
  const std::string table = metrics::report_table({r}, {"root"});
  EXPECT_NE(table.find("full"), std::string::npos);
}
