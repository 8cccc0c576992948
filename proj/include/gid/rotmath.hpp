#pragma once

// Rotation representations used throughout the pipeline.
//
// Conventions: Hamilton quaternions stored scalar-first (w, x, y, z), active
// rotations, column vectors. A sensor orientation maps sensor-frame vectors
// into the global frame. The global frame is Y-up.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>

namespace gid::rot {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

class AxisAngle;
class RotationMatrix;

/// Unit quaternion with the double cover resolved to w >= 0 (ties broken by
/// the first non-zero vector component being positive).
class UnitQuaternion {
 public:
  UnitQuaternion() = default;

  /// Normalizes and canonicalizes. Throws InvalidInput on non-finite or
  /// zero-norm input.
  UnitQuaternion(double w, double x, double y, double z);

  /// Keeps the components untouched when their norm is already within `tol`
  /// of one (only the sign is canonicalized); otherwise normalizes. Parsers
  /// use this so values read from text round-trip exactly.
  static UnitQuaternion from_near_unit(double w, double x, double y, double z,
                                       double tol = 1e-9);

  static UnitQuaternion identity() { return {}; }

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  Vec3 vec() const { return {x_, y_, z_}; }
  std::array<double, 4> coeffs() const { return {w_, x_, y_, z_}; }

  UnitQuaternion inverse() const;
  UnitQuaternion operator*(const UnitQuaternion& rhs) const;
  Vec3 rotate(const Vec3& v) const;

  /// Plain 4-vector dot product (sign-sensitive).
  double dot(const UnitQuaternion& rhs) const;

  bool operator==(const UnitQuaternion& rhs) const = default;

 private:
  struct Raw {};
  UnitQuaternion(Raw, double w, double x, double y, double z)
      : w_(w), x_(x), y_(y), z_(z) {}
  void canonicalize_sign();

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

/// Proper rotation matrix (orthonormal, det +1).
class RotationMatrix {
 public:
  RotationMatrix() : m_(Mat3::Identity()) {}

  /// Validates orthonormality and determinant within `tol`; throws
  /// InvalidInput otherwise.
  explicit RotationMatrix(const Mat3& m, double tol = 1e-6);

  static RotationMatrix identity() { return {}; }
  static RotationMatrix about_x(double radians);
  static RotationMatrix about_y(double radians);
  static RotationMatrix about_z(double radians);

  /// Projects an arbitrary 3x3 matrix onto SO(3) (closest in Frobenius norm).
  static RotationMatrix nearest(const Mat3& m);

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }
  RotationMatrix transpose() const;
  RotationMatrix operator*(const RotationMatrix& rhs) const;
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  struct Raw {};
  RotationMatrix(Raw, const Mat3& m) : m_(m) {}
  Mat3 m_;
};

/// Rotation vector: direction = axis, magnitude = angle in radians.
class AxisAngle {
 public:
  AxisAngle() : v_(Vec3::Zero()) {}
  explicit AxisAngle(const Vec3& v) : v_(v) {}
  AxisAngle(double x, double y, double z) : v_(x, y, z) {}

  const Vec3& vector() const { return v_; }
  double angle() const { return v_.norm(); }

  /// Equivalent rotation vector with magnitude in [0, pi].
  AxisAngle canonical() const;

 private:
  Vec3 v_;
};

RotationMatrix quat_to_matrix(const UnitQuaternion& q);
UnitQuaternion matrix_to_quat(const RotationMatrix& r);

RotationMatrix axis_angle_to_matrix(const AxisAngle& v);
AxisAngle matrix_to_axis_angle(const RotationMatrix& r);
UnitQuaternion axis_angle_to_quat(const AxisAngle& v);
AxisAngle quat_to_axis_angle(const UnitQuaternion& q);

/// Shortest rotation angle between two orientations, in [0, 180] degrees.
double geodesic_angle_deg(const RotationMatrix& a, const RotationMatrix& b);
double geodesic_angle_rad(const UnitQuaternion& a, const UnitQuaternion& b);

/// Spherical linear interpolation along the shorter arc, t in [0, 1].
UnitQuaternion slerp(const UnitQuaternion& q0, const UnitQuaternion& q1, double t);

constexpr double kPi = 3.14159265358979323846;
constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace gid::rot
