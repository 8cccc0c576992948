#include "gid/rotmath.hpp"

#include "gid/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace gid::rot {

namespace {

// Below this angle the trigonometric ratios switch to their Taylor series.
constexpr double kSmallAngle = 1e-4;

bool all_finite(double a, double b, double c, double d) {
  return std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && std::isfinite(d);
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// UnitQuaternion

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  if (!all_finite(w, x, y, z)) throw InvalidInput("quaternion has non-finite components");
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n == 0.0) throw InvalidInput("quaternion has zero norm");
  w_ = w / n;
  x_ = x / n;
  y_ = y / n;
  z_ = z / n;
  canonicalize_sign();
}

UnitQuaternion UnitQuaternion::from_near_unit(double w, double x, double y, double z,
                                              double tol) {
  if (!all_finite(w, x, y, z)) throw InvalidInput("quaternion has non-finite components");
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (std::abs(n - 1.0) > tol) return UnitQuaternion(w, x, y, z);
  UnitQuaternion q(Raw{}, w, x, y, z);
  q.canonicalize_sign();
  return q;
}

void UnitQuaternion::canonicalize_sign() {
  bool flip = false;
  if (w_ != 0.0) {
    flip = w_ < 0.0;
  } else if (x_ != 0.0) {
    flip = x_ < 0.0;
  } else if (y_ != 0.0) {
    flip = y_ < 0.0;
  } else {
    flip = z_ < 0.0;
  }
  if (flip) {
    w_ = -w_;
    x_ = -x_;
    y_ = -y_;
    z_ = -z_;
  }
  // Avoid a signed zero in w so that bitwise comparisons are stable.
  if (w_ == 0.0) w_ = 0.0;
}

UnitQuaternion UnitQuaternion::inverse() const {
  UnitQuaternion q(Raw{}, w_, -x_, -y_, -z_);
  q.canonicalize_sign();
  return q;
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& r) const {
  const double w = w_ * r.w_ - x_ * r.x_ - y_ * r.y_ - z_ * r.z_;
  const double x = w_ * r.x_ + x_ * r.w_ + y_ * r.z_ - z_ * r.y_;
  const double y = w_ * r.y_ - x_ * r.z_ + y_ * r.w_ + z_ * r.x_;
  const double z = w_ * r.z_ + x_ * r.y_ - y_ * r.x_ + z_ * r.w_;
  return UnitQuaternion(w, x, y, z);
}

Vec3 UnitQuaternion::rotate(const Vec3& v) const {
  const Vec3 u = vec();
  const Vec3 t = 2.0 * u.cross(v);
  return v + w_ * t + u.cross(t);
}

double UnitQuaternion::dot(const UnitQuaternion& r) const {
  return w_ * r.w_ + x_ * r.x_ + y_ * r.y_ + z_ * r.z_;
}

// ---------------------------------------------------------------------------
// RotationMatrix

RotationMatrix::RotationMatrix(const Mat3& m, double tol) : m_(m) {
  if (!m.allFinite()) throw InvalidInput("rotation matrix has non-finite entries");
  const double ortho = (m * m.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (ortho > tol || std::abs(det - 1.0) > tol) {
    throw InvalidInput("matrix is not a proper rotation (orthonormality error " +
                       std::to_string(ortho) + ", det " + std::to_string(det) + ")");
  }
}

RotationMatrix RotationMatrix::about_x(double a) {
  Mat3 m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return RotationMatrix(Raw{}, m);
}

RotationMatrix RotationMatrix::about_y(double a) {
  Mat3 m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return RotationMatrix(Raw{}, m);
}

RotationMatrix RotationMatrix::about_z(double a) {
  Mat3 m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return RotationMatrix(Raw{}, m);
}

RotationMatrix RotationMatrix::nearest(const Mat3& m) {
  if (!m.allFinite()) throw InvalidInput("matrix has non-finite entries");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return RotationMatrix(Raw{}, svd.matrixU() * d * svd.matrixV().transpose());
}

RotationMatrix RotationMatrix::transpose() const {
  return RotationMatrix(Raw{}, m_.transpose());
}

RotationMatrix RotationMatrix::operator*(const RotationMatrix& rhs) const {
  return RotationMatrix(Raw{}, m_ * rhs.m_);
}

// ---------------------------------------------------------------------------
// AxisAngle

AxisAngle AxisAngle::canonical() const {
  const double theta = v_.norm();
  if (theta <= kPi) return *this;
  const Vec3 axis = v_ / theta;
  double wrapped = std::fmod(theta, 2.0 * kPi);
  if (wrapped > kPi) return AxisAngle(-axis * (2.0 * kPi - wrapped));
  return AxisAngle(axis * wrapped);
}

// ---------------------------------------------------------------------------
// Conversions

RotationMatrix quat_to_matrix(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  if (!all_finite(w, x, y, z)) throw InvalidInput("quaternion has non-finite components");
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return RotationMatrix(m, 1e-6);
}

UnitQuaternion matrix_to_quat(const RotationMatrix& rm) {
  // Shepperd's method: branch on the largest diagonal term for stability.
  const Mat3& m = rm.matrix();
  const double tr = m.trace();
  double w, x, y, z;
  if (tr > m(0, 0) && tr > m(1, 1) && tr > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    w = 0.25 * s;
    x = (m(2, 1) - m(1, 2)) / s;
    y = (m(0, 2) - m(2, 0)) / s;
    z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    w = (m(2, 1) - m(1, 2)) / s;
    x = 0.25 * s;
    y = (m(0, 1) + m(1, 0)) / s;
    z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    w = (m(0, 2) - m(2, 0)) / s;
    x = (m(0, 1) + m(1, 0)) / s;
    y = 0.25 * s;
    z = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    w = (m(1, 0) - m(0, 1)) / s;
    x = (m(0, 2) + m(2, 0)) / s;
    y = (m(1, 2) + m(2, 1)) / s;
    z = 0.25 * s;
  }
  return UnitQuaternion(w, x, y, z);
}

RotationMatrix axis_angle_to_matrix(const AxisAngle& aa) {
  const Vec3& v = aa.vector();
  if (!v.allFinite()) throw InvalidInput("axis-angle has non-finite components");
  const double theta2 = v.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a, b;  // sin(t)/t, (1 - cos(t))/t^2
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Mat3 k = skew(v);
  return RotationMatrix(Mat3::Identity() + a * k + b * k * k, 1e-6);
}

AxisAngle quat_to_axis_angle(const UnitQuaternion& q) {
  const Vec3 u = q.vec();
  const double s = u.norm();
  if (s == 0.0) return AxisAngle();
  // w >= 0 by canonicalization, so the angle lies in [0, pi].
  const double angle = 2.0 * std::atan2(s, q.w());
  return AxisAngle(u * (angle / s));
}

UnitQuaternion axis_angle_to_quat(const AxisAngle& aa) {
  const Vec3& v = aa.vector();
  if (!v.allFinite()) throw InvalidInput("axis-angle has non-finite components");
  const double theta = v.norm();
  const double half = 0.5 * theta;
  // sin(theta/2)/theta, series near zero.
  const double k = theta < kSmallAngle ? 0.5 - theta * theta / 48.0 : std::sin(half) / theta;
  return UnitQuaternion(std::cos(half), v.x() * k, v.y() * k, v.z() * k);
}

AxisAngle matrix_to_axis_angle(const RotationMatrix& r) {
  return quat_to_axis_angle(matrix_to_quat(r));
}

double geodesic_angle_deg(const RotationMatrix& a, const RotationMatrix& b) {
  const Mat3 m = a.matrix().transpose() * b.matrix();
  const Vec3 axis(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  const double s = 0.5 * axis.norm();
  const double c = std::clamp(0.5 * (m.trace() - 1.0), -1.0, 1.0);
  return rad2deg(std::atan2(s, c));
}

double geodesic_angle_rad(const UnitQuaternion& a, const UnitQuaternion& b) {
  // 2*atan2(|vec(a^-1 b)|, |w|) is accurate near zero, unlike 2*acos|a.b|.
  const UnitQuaternion rel = a.inverse() * b;
  return 2.0 * std::atan2(rel.vec().norm(), std::abs(rel.w()));
}

UnitQuaternion slerp(const UnitQuaternion& q0, const UnitQuaternion& q1, double t) {
  double c = q0.dot(q1);
  const double sign = c < 0.0 ? -1.0 : 1.0;
  c *= sign;
  const auto a = q0.coeffs();
  const auto b = q1.coeffs();
  double k0, k1;
  if (c > 1.0 - 1e-12) {
    k0 = 1.0 - t;
    k1 = t;
  } else {
    const double omega = std::acos(std::min(c, 1.0));
    const double so = std::sin(omega);
    k0 = std::sin((1.0 - t) * omega) / so;
    k1 = std::sin(t * omega) / so;
  }
  k1 *= sign;
  return UnitQuaternion(k0 * a[0] + k1 * b[0], k0 * a[1] + k1 * b[1],
                        k0 * a[2] + k1 * b[2], k0 * a[3] + k1 * b[3]);
}

}  // namespace gid::rot
