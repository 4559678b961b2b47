#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "signsplat/rotation.hpp"

using namespace signsplat;

namespace {

Mat3 eigen_xyz(const Vec3& e) {
  return (Eigen::AngleAxisd(e.x(), Vec3::UnitX()) * Eigen::AngleAxisd(e.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(e.z(), Vec3::UnitZ()))
      .toRotationMatrix();
}

}  // namespace

TEST(Rotation, ZeroEulerIsZeroAxisAngle) {
  const Vec3 aa = euler_to_axis_angle(Vec3::Zero());
  EXPECT_EQ(aa, Vec3::Zero());
}

TEST(Rotation, SingleAxisEuler) {
  const Vec3 aa = euler_to_axis_angle(Vec3(std::numbers::pi / 2, 0, 0));
  EXPECT_NEAR(aa.norm(), std::numbers::pi / 2, 1e-12);
  const Vec3 axis = aa.normalized();
  EXPECT_NEAR(axis.x(), 1.0, 1e-12);
  EXPECT_NEAR(axis.y(), 0.0, 1e-12);
  EXPECT_NEAR(axis.z(), 0.0, 1e-12);
}

TEST(Rotation, EulerMatchesComposedAxisRotations) {
  const Vec3 e(0.3, 0.4, 0.5);
  EXPECT_LT((euler_to_matrix(e) - eigen_xyz(e)).norm(), 1e-12);
  const Vec3 aa = euler_to_axis_angle(e);
  const Mat3 r = Eigen::AngleAxisd(aa.norm(), aa.normalized()).toRotationMatrix();
  EXPECT_LT((r - eigen_xyz(e)).norm(), 1e-9);
}

TEST(Rotation, AxisAngleRoundTrip) {
  const Vec3 e(0.3, 0.4, 0.5);
  const EulerResult back = axis_angle_to_euler(euler_to_axis_angle(e));
  EXPECT_FALSE(back.gimbal_lock);
  EXPECT_LT((euler_to_matrix(back.angles) - eigen_xyz(e)).norm(), 1e-6);
}

TEST(Rotation, RandomRoundTrips) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 e(u(rng), u(rng) * 0.5, u(rng));
    const Mat3 r = euler_to_matrix(e);
    EXPECT_LT((euler_to_matrix(matrix_to_euler(r).angles) - r).norm(), 1e-6);
    EXPECT_LT((euler_to_matrix(axis_angle_to_euler(euler_to_axis_angle(e)).angles) - r).norm(), 1e-6);
    EXPECT_LT((quat_to_matrix(euler_to_quat(e)) - r).norm(), 1e-9);
    EXPECT_LT((euler_to_matrix(quat_to_euler(euler_to_quat(e))) - r).norm(), 1e-6);
  }
}

TEST(Rotation, GimbalLockIsFlagged) {
  const EulerResult r = matrix_to_euler(euler_to_matrix(Vec3(0.2, std::numbers::pi / 2, 0.1)));
  EXPECT_TRUE(r.gimbal_lock);
  EXPECT_LT((euler_to_matrix(r.angles) - euler_to_matrix(Vec3(0.2, std::numbers::pi / 2, 0.1))).norm(), 1e-6);
}

TEST(Rotation, EulerPartialsMatchFiniteDifferences) {
  const Vec3 e(0.3, -0.7, 1.1);
  const auto p = euler_matrix_partials(e);
  for (int k = 0; k < 3; ++k) {
    Vec3 hi = e, lo = e;
    hi[k] += 1e-6;
    lo[k] -= 1e-6;
    const Mat3 fd = (euler_to_matrix(hi) - euler_to_matrix(lo)) / 2e-6;
    EXPECT_LT((fd - p[k]).norm(), 1e-8);
  }
}

TEST(Rotation, QuatAlgebra) {
  const Quat a = euler_to_quat(Vec3(0.1, 0.2, 0.3));
  const Quat b = euler_to_quat(Vec3(-0.4, 0.5, 0.2));
  EXPECT_LT((quat_to_matrix(quat_mul(a, b)) - quat_to_matrix(a) * quat_to_matrix(b)).norm(), 1e-12);
  EXPECT_LT((quat_mul(a, quat_conj(a)) - quat_identity()).norm(), 1e-12);
  EXPECT_NEAR(quat_angle_between(quat_identity(), quat_from_axis_angle(Vec3(0, 0, 1.0))), 1.0, 1e-12);
  EXPECT_NEAR(quat_angle_between(a, -a), 0.0, 1e-7);
}

TEST(Rotation, QuatBackwardMatchesFiniteDifferences) {
  Quat q(0.8, 0.3, -0.2, 0.4);
  q.normalize();
  Mat3 g;
  g << 0.3, -1.0, 0.2, 0.7, 0.1, -0.5, 0.9, 0.4, -0.3;
  const Quat an = quat_to_matrix_backward(q, g);
  for (int k = 0; k < 4; ++k) {
    Quat hi = q, lo = q;
    hi[k] += 1e-6;
    lo[k] -= 1e-6;
    const double fd = ((quat_to_matrix(hi) - quat_to_matrix(lo)).cwiseProduct(g)).sum() / 2e-6;
    EXPECT_NEAR(fd, an[k], 1e-7);
  }
}
