#pragma once

#include <Eigen/Core>

namespace evtrack {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Axis-angle vector; magnitude is the rotation angle in radians.
using RotVec = Eigen::Vector3d;

/// Below this angle (rad) exp/log/right-Jacobian switch to their Taylor series.
inline constexpr double kSmallAngle = 1e-6;

/// Orthonormality tolerance for the Rotation invariant.
inline constexpr double kOrthoTol = 1e-9;

/**
 * @brief Element of SO(3), stored as a 3x3 orthonormal matrix.
 *
 * The default-constructed value is the identity. Construction from an
 * arbitrary matrix goes through from_matrix(), which validates the
 * invariant; unchecked() is for matrices produced by group operations.
 */
class Rotation {
 public:
  Rotation() : R_(Mat3::Identity()) {}

  static Rotation from_matrix(const Mat3& R);
  static Rotation unchecked(const Mat3& R) { return Rotation(R); }
  static Rotation Identity() { return Rotation(); }

  const Mat3& matrix() const { return R_; }
  Rotation inverse() const { return Rotation(R_.transpose()); }
  Vec3 operator*(const Vec3& v) const { return R_ * v; }
  Rotation operator*(const Rotation& o) const { return Rotation(R_ * o.R_); }

  /// Max-abs deviation of R^T R from the identity and of det(R) from 1.
  double orthonormality_error() const;

  /// Projects back onto SO(3) (polar decomposition via SVD).
  void renormalize();

 private:
  explicit Rotation(const Mat3& R) : R_(R) {}
  Mat3 R_;
};

/// Skew-symmetric matrix with hat(v) * w == v.cross(w).
Mat3 hat(const Vec3& v);

/// Rodrigues exponential map so(3) -> SO(3).
Rotation exp_so3(const RotVec& theta);

/// Logarithm SO(3) -> so(3), |result| <= pi.
/// At exactly pi the axis is chosen with its first nonzero component
/// positive. Throws std::invalid_argument on a non-orthonormal input.
RotVec log_so3(const Rotation& R);

/// Right Jacobian of SO(3):
///   Jr(t) = I - (1 - cos|t|)/|t|^2 [t]x + (|t| - sin|t|)/|t|^3 [t]x^2
Mat3 right_jacobian(const RotVec& theta);

/// Right plus, R (+) theta = R * Exp(theta).
Rotation oplus(const Rotation& R, const RotVec& theta);

/// Right minus, Log(A^-1 * B), so that A (+) (B (-) A) == B.
RotVec ominus(const Rotation& B, const Rotation& A);

namespace detail {
// Log without the orthonormality check; used on the filter hot path where
// the input is a product of rotations.
RotVec log_unchecked(const Mat3& R);
}  // namespace detail

}  // namespace evtrack
