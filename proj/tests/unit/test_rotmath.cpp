#include "gid/errors.hpp"
#include "gid/rotmath.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace gid::rot;

namespace {

UnitQuaternion random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return UnitQuaternion(n(rng), n(rng), n(rng), n(rng));
}

double max_abs(const Mat3& m) { return m.cwiseAbs().maxCoeff(); }

// Independent oracle for the geodesic angle: 2 acos |q1 . q2|.
double quat_dot_angle_deg(const UnitQuaternion& a, const UnitQuaternion& b) {
  return rad2deg(2.0 * std::acos(std::min(1.0, std::abs(a.dot(b)))));
}

}  // namespace

TEST(RotMath, IdentityQuaternionGivesIdentityMatrix) {
  EXPECT_EQ(quat_to_matrix(UnitQuaternion::identity()).matrix(), Mat3::Identity());
}

TEST(RotMath, QuarterTurnAboutZ) {
  const double h = std::sqrt(0.5);
  const Mat3 m = quat_to_matrix(UnitQuaternion(h, 0, 0, h)).matrix();
  EXPECT_NEAR(m(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(m(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(m(2, 0), 0.0, 1e-15);
}

TEST(RotMath, RandomQuaternionsGiveOrthonormalMatrices) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 m = quat_to_matrix(random_quat(rng)).matrix();
    EXPECT_LT(max_abs(m * m.transpose() - Mat3::Identity()), 1e-8);
    EXPECT_NEAR(m.determinant(), 1.0, 1e-8);
  }
}

TEST(RotMath, NonFiniteQuaternionRejected) {
  EXPECT_THROW(UnitQuaternion(std::nan(""), 0, 0, 0), gid::InvalidInput);
  EXPECT_THROW(UnitQuaternion(0, 0, 0, 0), gid::InvalidInput);
}

TEST(RotMath, MatrixToQuatSpecialCases) {
  EXPECT_EQ(matrix_to_quat(RotationMatrix::identity()), UnitQuaternion::identity());
  const UnitQuaternion q = matrix_to_quat(RotationMatrix::about_x(kPi));
  EXPECT_NEAR(q.w(), 0.0, 1e-15);
  EXPECT_NEAR(q.x(), 1.0, 1e-15);
  EXPECT_NEAR(q.y(), 0.0, 1e-15);
  EXPECT_NEAR(q.z(), 0.0, 1e-15);
}

TEST(RotMath, MatrixQuaternionRoundTrip) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 1000; ++i) {
    const RotationMatrix r = quat_to_matrix(random_quat(rng));
    const UnitQuaternion q = matrix_to_quat(r);
    EXPECT_GE(q.w(), 0.0);
    EXPECT_LT(max_abs(quat_to_matrix(q).matrix() - r.matrix()), 1e-7);
  }
}

TEST(RotMath, NonOrthonormalMatrixRejected) {
  Mat3 m = Mat3::Identity();
  m(0, 1) = 1e-3;
  EXPECT_THROW(RotationMatrix{m}, gid::InvalidInput);
  m = -Mat3::Identity();
  EXPECT_THROW(RotationMatrix{m}, gid::InvalidInput);  // det -1
}

TEST(RotMath, GeodesicAnalyticCases) {
  const RotationMatrix r = RotationMatrix::about_y(0.3) * RotationMatrix::about_x(1.1);
  EXPECT_EQ(geodesic_angle_deg(r, r), 0.0);
  EXPECT_NEAR(geodesic_angle_deg(RotationMatrix::identity(), RotationMatrix::about_z(kPi / 2)), 90.0, 1e-12);
}

TEST(RotMath, Geodesic37DegreesMatchesQuaternionOracle) {
  const RotationMatrix rb = RotationMatrix::about_x(deg2rad(37.0)) * RotationMatrix::about_y(0.0);
  const double got = geodesic_angle_deg(RotationMatrix::identity(), rb);
  const double oracle = quat_dot_angle_deg(UnitQuaternion::identity(), matrix_to_quat(rb));
  EXPECT_NEAR(oracle, 37.0, 1e-9);
  EXPECT_NEAR(got, 37.0, 1e-9);
  EXPECT_NEAR(got, oracle, 1e-9);
}

TEST(RotMath, GeodesicPropertySweep) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 500; ++i) {
    const UnitQuaternion qa = random_quat(rng);
    const UnitQuaternion qb = random_quat(rng);
    const RotationMatrix a = quat_to_matrix(qa);
    const RotationMatrix b = quat_to_matrix(qb);
    const double ab = geodesic_angle_deg(a, b);
    EXPECT_DOUBLE_EQ(ab, geodesic_angle_deg(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 180.0);
    EXPECT_LT(geodesic_angle_deg(a, a), 1e-9);
    // Agrees with the clamped arccos form where arccos is well conditioned.
    const Mat3 m = a.matrix().transpose() * b.matrix();
    const double acos_form = rad2deg(std::acos(std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0)));
    if (ab > 1.0 && ab < 179.0) {
      EXPECT_NEAR(ab, acos_form, 1e-9);
    }
    EXPECT_NEAR(ab, quat_dot_angle_deg(qa, qb), 1e-6);
  }
}

TEST(RotMath, AxisAngleSpecialCases) {
  EXPECT_EQ(axis_angle_to_matrix(AxisAngle()).matrix(), Mat3::Identity());
  const Mat3 r = axis_angle_to_matrix(AxisAngle(0, 0, kPi / 2)).matrix();
  EXPECT_LT(max_abs(r - RotationMatrix::about_z(kPi / 2).matrix()), 1e-15);
  EXPECT_EQ(matrix_to_axis_angle(RotationMatrix::identity()).vector(), Vec3::Zero());
}

TEST(RotMath, AxisAngleRoundTrip) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> mag(1e-6, kPi - 0.01);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
    const Vec3 v = axis * mag(rng);
    const AxisAngle back = matrix_to_axis_angle(axis_angle_to_matrix(AxisAngle(v)));
    EXPECT_LT((back.vector() - v).cwiseAbs().maxCoeff(), 1e-7);
    const AxisAngle viaq = quat_to_axis_angle(axis_angle_to_quat(AxisAngle(v)));
    EXPECT_LT((viaq.vector() - v).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(RotMath, CanonicalizationIsIdempotent) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const AxisAngle v(n(rng), n(rng), n(rng));
    const AxisAngle c = v.canonical();
    EXPECT_LE(c.angle(), kPi + 1e-12);
    EXPECT_EQ(c.canonical().vector(), c.vector());
    EXPECT_LT(geodesic_angle_deg(axis_angle_to_matrix(v), axis_angle_to_matrix(c)), 1e-6);

    const UnitQuaternion q = random_quat(rng);
    const UnitQuaternion q2 = UnitQuaternion(q.w(), q.x(), q.y(), q.z());
    EXPECT_GE(q.w(), 0.0);
    EXPECT_NEAR(q.w(), q2.w(), 1e-15);
    const UnitQuaternion neg = UnitQuaternion(-q.w(), -q.x(), -q.y(), -q.z());
    EXPECT_NEAR(neg.dot(q), 1.0, 1e-12);
  }
}

TEST(RotMath, QuaternionUnitNorm) {
  std::mt19937_64 rng(16);
  for (int i = 0; i < 200; ++i) {
    const UnitQuaternion q = random_quat(rng) * random_quat(rng);
    const auto c = q.coeffs();
    EXPECT_NEAR(c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3], 1.0, 1e-9);
  }
}

TEST(RotMath, SlerpEndpointsAndHalfway) {
  std::mt19937_64 rng(17);
  const UnitQuaternion q = random_quat(rng);
  for (double t : {0.0, 0.3, 0.7, 1.0}) {
    EXPECT_NEAR(slerp(q, q, t).dot(q), 1.0, 1e-12);
  }
  const UnitQuaternion z90 = matrix_to_quat(RotationMatrix::about_z(kPi / 2));
  const UnitQuaternion half = slerp(UnitQuaternion::identity(), z90, 0.5);
  EXPECT_LT(geodesic_angle_deg(quat_to_matrix(half), RotationMatrix::about_z(kPi / 4)), 1e-9);
  const UnitQuaternion q1 = random_quat(rng);
  EXPECT_NEAR(std::abs(slerp(q, q1, 0.0).dot(q)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(slerp(q, q1, 1.0).dot(q1)), 1.0, 1e-12);
}

TEST(RotMath, SlerpAngleIsProportionalToT) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int pair = 0; pair < 10; ++pair) {
    const UnitQuaternion q0 = random_quat(rng);
    const UnitQuaternion q1 = random_quat(rng);
    const double total = geodesic_angle_rad(q0, q1);
    for (int i = 0; i < 10; ++i) {
      const double t = u(rng);
      EXPECT_NEAR(geodesic_angle_rad(slerp(q0, q1, t), q0), t * total, 1e-9);
    }
  }
}

TEST(RotMath, SlerpNegativeDotTakesShortArc) {
  // +170 and -170 degrees about X: canonical quaternions have a negative dot,
  // and the short arc passes through the half turn.
  const UnitQuaternion q0 = axis_angle_to_quat(AxisAngle(deg2rad(170.0), 0, 0));
  const UnitQuaternion q1 = axis_angle_to_quat(AxisAngle(deg2rad(-170.0), 0, 0));
  ASSERT_LT(q0.dot(q1), 0.0);
  const UnitQuaternion mid = slerp(q0, q1, 0.5);
  EXPECT_LT(geodesic_angle_deg(quat_to_matrix(mid), RotationMatrix::about_x(kPi)), 1e-9);
}
