#pragma once
// Rotation conventions used throughout the engine.
//
// Euler angles are intrinsic XYZ: R = Rx(a) * Ry(b) * Rz(c).
// Quaternions are (w, x, y, z) and act on column vectors.

#include <array>

#include "signsplat/common.hpp"

namespace signsplat {

Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);

Mat3 euler_to_matrix(const Vec3& euler);

/// Partial derivatives dR/da, dR/db, dR/dc of euler_to_matrix.
std::array<Mat3, 3> euler_matrix_partials(const Vec3& euler);

struct EulerResult {
  Vec3 angles = Vec3::Zero();
  /// |pitch| within 1e-6 of pi/2; angles hold one valid representative.
  bool gimbal_lock = false;
};

EulerResult matrix_to_euler(const Mat3& r);

Vec3 euler_to_axis_angle(const Vec3& euler);
EulerResult axis_angle_to_euler(const Vec3& axis_angle);

Mat3 axis_angle_to_matrix(const Vec3& axis_angle);
Vec3 matrix_to_axis_angle(const Mat3& r);

Quat quat_identity();
Quat quat_mul(const Quat& a, const Quat& b);
Quat quat_conj(const Quat& q);
Quat quat_from_matrix(const Mat3& r);
Quat quat_from_axis_angle(const Vec3& axis_angle);
Quat euler_to_quat(const Vec3& euler);
Vec3 quat_to_euler(const Quat& q);

/// Rotation matrix of a unit quaternion (the polynomial form, so the
/// derivative below is exact for unit inputs).
Mat3 quat_to_matrix(const Quat& q);

/// Given dL/dR for R = quat_to_matrix(q), returns dL/dq.
Quat quat_to_matrix_backward(const Quat& q, const Mat3& grad_r);

/// Backward of q / |q|: maps dL/d(unit) to dL/d(raw).
Quat normalize_backward(const Quat& raw, const Quat& grad_unit);
Vec3 normalize_backward(const Vec3& raw, const Vec3& grad_unit);

/// Geodesic angle in [0, pi] between two rotations.
double quat_angle_between(const Quat& a, const Quat& b);

}  // namespace signsplat
