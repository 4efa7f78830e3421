#include "evtrack/lie.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace evtrack {

Rotation Rotation::from_matrix(const Mat3& R) {
  Rotation out(R);
  if (!(out.orthonormality_error() < kOrthoTol)) {
    throw std::invalid_argument("Rotation: matrix is not orthonormal");
  }
  return out;
}

double Rotation::orthonormality_error() const {
  const double e = (R_.transpose() * R_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(e, std::abs(R_.determinant() - 1.0));
}

void Rotation::renormalize() {
  Eigen::JacobiSVD<Mat3> svd(R_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0) {
    Mat3 U = svd.matrixU();
    U.col(2) *= -1.0;
    R = U * svd.matrixV().transpose();
  }
  R_ = R;
}

Mat3 hat(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return S;
}

Rotation exp_so3(const RotVec& theta) {
  const double angle = theta.norm();
  const Mat3 K = hat(theta);
  if (angle < kSmallAngle) {
    return Rotation::unchecked(Mat3::Identity() + K + 0.5 * K * K);
  }
  const double s = std::sin(0.5 * angle);
  // (1 - cos a) / a^2 written with the half angle to avoid cancellation.
  const double b = 2.0 * s * s / (angle * angle);
  return Rotation::unchecked(Mat3::Identity() + (std::sin(angle) / angle) * K + b * K * K);
}

namespace detail {

RotVec log_unchecked(const Mat3& R) {
  const Vec3 w(0.5 * (R(2, 1) - R(1, 2)),
               0.5 * (R(0, 2) - R(2, 0)),
               0.5 * (R(1, 0) - R(0, 1)));
  const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double s = w.norm();
  const double angle = std::atan2(s, c);

  if (angle < kSmallAngle) {
    return (1.0 + angle * angle / 6.0) * w;
  }
  if (c > -0.99) {
    return (angle / s) * w;
  }

  // Near pi: recover the axis from the symmetric part, (1 - c) a a^T.
  const Mat3 B = 0.5 * (R + R.transpose()) - c * Mat3::Identity();
  int k = 0;
  B.diagonal().maxCoeff(&k);
  Vec3 axis = B.col(k) / std::sqrt(std::max(B(k, k), 0.0) * (1.0 - c));
  axis.normalize();
  // Within 1e-9 of pi the sign of w is rounding noise and both axes map to
  // the same rotation; pick the one whose first nonzero component is positive.
  const double d = axis.dot(w);
  if (std::numbers::pi - angle > 1e-9) {
    if (d < 0.0) axis = -axis;
  } else {
    for (int i = 0; i < 3; ++i) {
      if (axis[i] != 0.0) {
        if (axis[i] < 0.0) axis = -axis;
        break;
      }
    }
  }
  return angle * axis;
}

}  // namespace detail

RotVec log_so3(const Rotation& R) {
  if (!(R.orthonormality_error() < kOrthoTol)) {
    throw std::invalid_argument("log_so3: matrix is not orthonormal");
  }
  return detail::log_unchecked(R.matrix());
}

Mat3 right_jacobian(const RotVec& theta) {
  const double angle = theta.norm();
  const Mat3 K = hat(theta);
  if (angle < kSmallAngle) {
    return Mat3::Identity() - 0.5 * K + (1.0 / 6.0) * K * K;
  }
  const double a2 = angle * angle;
  const double s = std::sin(0.5 * angle);
  const double b = 2.0 * s * s / a2;
  const double c = (angle - std::sin(angle)) / (a2 * angle);
  return Mat3::Identity() - b * K + c * K * K;
}

Rotation oplus(const Rotation& R, const RotVec& theta) { return R * exp_so3(theta); }

RotVec ominus(const Rotation& B, const Rotation& A) {
  return detail::log_unchecked(A.matrix().transpose() * B.matrix());
}

}  // namespace evtrack
