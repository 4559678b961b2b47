#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace signsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Quaternion stored as (w, x, y, z).
using Quat = Eigen::Vector4d;

enum class Segment : std::uint8_t { Body = 0, Head = 1, LeftHand = 2, RightHand = 3 };

inline bool is_hand(Segment s) { return s == Segment::LeftHand || s == Segment::RightHand; }

const char* segment_name(Segment s);
Segment segment_from_name(const std::string& name);

/// Bad input: malformed files, dimension mismatches, violated preconditions.
/// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while running on valid input. Exit code 1.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-segment scalar, e.g. displacement caps or scale limits.
struct SegmentValues {
  double body = 0.0;
  double head = 0.0;
  double hands = 0.0;

  double operator()(Segment s) const {
    switch (s) {
      case Segment::Body: return body;
      case Segment::Head: return head;
      default: return hands;
    }
  }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rounds to the nearest float32. Parameters that are persisted as float32
/// live on the float lattice so checkpoints round-trip exactly.
inline double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace signsplat
