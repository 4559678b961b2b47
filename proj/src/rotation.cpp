#include "signsplat/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace signsplat {

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Mat3 euler_to_matrix(const Vec3& e) { return rot_x(e.x()) * rot_y(e.y()) * rot_z(e.z()); }

std::array<Mat3, 3> euler_matrix_partials(const Vec3& e) {
  const double ca = std::cos(e.x()), sa = std::sin(e.x());
  const double cb = std::cos(e.y()), sb = std::sin(e.y());
  const double cc = std::cos(e.z()), sc = std::sin(e.z());
  Mat3 dx, dy, dz;
  dx << 0, 0, 0, 0, -sa, -ca, 0, ca, -sa;
  dy << -sb, 0, cb, 0, 0, 0, -cb, 0, -sb;
  dz << -sc, -cc, 0, cc, -sc, 0, 0, 0, 0;
  const Mat3 rx = rot_x(e.x()), ry = rot_y(e.y()), rz = rot_z(e.z());
  return {dx * ry * rz, rx * dy * rz, rx * ry * dz};
}

EulerResult matrix_to_euler(const Mat3& r) {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  EulerResult out;
  const double cb = std::hypot(r(0, 0), r(0, 1));
  const double b = std::atan2(r(0, 2), cb);
  out.gimbal_lock = std::abs(kHalfPi - std::abs(b)) < 1e-6;
  if (out.gimbal_lock) {
    // Only c +/- a is observable; pin a to zero.
    out.angles = Vec3(0.0, b, std::atan2(r(1, 0), r(1, 1)));
  } else {
    out.angles = Vec3(std::atan2(-r(1, 2), r(2, 2)), b, std::atan2(-r(0, 1), r(0, 0)));
  }
  return out;
}

Mat3 axis_angle_to_matrix(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

Vec3 matrix_to_axis_angle(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

Vec3 euler_to_axis_angle(const Vec3& euler) { return matrix_to_axis_angle(euler_to_matrix(euler)); }

EulerResult axis_angle_to_euler(const Vec3& axis_angle) {
  return matrix_to_euler(axis_angle_to_matrix(axis_angle));
}

Quat quat_identity() { return Quat(1.0, 0.0, 0.0, 0.0); }

Quat quat_mul(const Quat& a, const Quat& b) {
  return Quat(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

Quat quat_conj(const Quat& q) { return Quat(q[0], -q[1], -q[2], -q[3]); }

Quat quat_from_matrix(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  Quat out(q.w(), q.x(), q.y(), q.z());
  return out / out.norm();
}

Quat quat_from_axis_angle(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-300) return quat_identity();
  const Vec3 axis = aa / angle;
  const double s = std::sin(angle / 2.0);
  return Quat(std::cos(angle / 2.0), axis.x() * s, axis.y() * s, axis.z() * s);
}

Quat euler_to_quat(const Vec3& e) {
  const Quat qx(std::cos(e.x() / 2), std::sin(e.x() / 2), 0, 0);
  const Quat qy(std::cos(e.y() / 2), 0, std::sin(e.y() / 2), 0);
  const Quat qz(std::cos(e.z() / 2), 0, 0, std::sin(e.z() / 2));
  return quat_mul(quat_mul(qx, qy), qz);
}

Vec3 quat_to_euler(const Quat& q) { return matrix_to_euler(quat_to_matrix(q / q.norm())).angles; }

Mat3 quat_to_matrix(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Quat quat_to_matrix_backward(const Quat& q, const Mat3& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const double gw = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) -
                         y * g(2, 0) + x * g(2, 1));
  const double gx = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) -
                         w * g(1, 2) + z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
  const double gy = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) +
                         z * g(1, 2) - w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
  const double gz = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) -
                         2 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return Quat(gw, gx, gy, gz);
}

Quat normalize_backward(const Quat& raw, const Quat& grad_unit) {
  const double n = raw.norm();
  const Quat u = raw / n;
  return (grad_unit - u * u.dot(grad_unit)) / n;
}

Vec3 normalize_backward(const Vec3& raw, const Vec3& grad_unit) {
  const double n = raw.norm();
  const Vec3 u = raw / n;
  return (grad_unit - u * u.dot(grad_unit)) / n;
}

double quat_angle_between(const Quat& a, const Quat& b) {
  // 2*acos(|a.b|) loses precision near identity; use the atan2 form.
  const Quat rel = quat_mul(quat_conj(a / a.norm()), b / b.norm());
  const double v = rel.tail<3>().norm();
  return 2.0 * std::atan2(v, std::abs(rel[0]));
}

}  // namespace signsplat
