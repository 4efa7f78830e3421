#include "evtrack/motion.hpp"

#include <stdexcept>

namespace evtrack {

std::string_view to_string(MotionModel m) {
  switch (m) {
    case MotionModel::CP: return "cp";
    case MotionModel::CV: return "cv";
    case MotionModel::CA: return "ca";
  }
  return "?";
}

std::optional<MotionModel> parse_motion_model(std::string_view s) {
  if (s == "cp" || s == "CP") return MotionModel::CP;
  if (s == "cv" || s == "CV") return MotionModel::CV;
  if (s == "ca" || s == "CA") return MotionModel::CA;
  return std::nullopt;
}

Eigen::Quaterniond to_quaternion(const Rotation& R) {
  Eigen::Quaterniond q(R.matrix());
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return q;
}

Rotation to_rotation(const Eigen::Quaterniond& q) {
  return Rotation::unchecked(q.normalized().toRotationMatrix());
}

ClassicState to_classic(const FilterState& x) {
  ClassicState c;
  c.position = x.position;
  c.rotation = to_quaternion(x.rotation);
  c.twist = x.twist;
  c.accel = x.accel;
  c.stamp_us = x.stamp_us;
  return c;
}

FilterState to_lie(const ClassicState& x) {
  FilterState l;
  l.position = x.position;
  l.rotation = to_rotation(x.rotation);
  l.twist = x.twist;
  l.accel = x.accel;
  l.stamp_us = x.stamp_us;
  return l;
}

// ---------------------------------------------------------------------------
// BlockCovariance

BlockCovariance::BlockCovariance(MotionModel model)
    : model_(model), P_(CovStorage::Zero(error_dim(model), error_dim(model))) {}

BlockCovariance::BlockCovariance(MotionModel model, const CovStorage& dense)
    : model_(model), P_(dense) {
  if (dense.rows() != error_dim(model) || dense.cols() != error_dim(model)) {
    throw std::invalid_argument("BlockCovariance: dimension does not match motion model");
  }
}

BlockCovariance BlockCovariance::initial(MotionModel model, const InitialSigmas& s) {
  BlockCovariance P(model);
  const std::array<double, 6> sig{s.pos, s.rot, s.vel, s.angvel, s.acc, s.angacc};
  for (int b = 0; b < P.blocks(); ++b) {
    P.block(b, b) = sig[b] * sig[b] * Mat3::Identity();
  }
  return P;
}

double BlockCovariance::symmetry_error() const {
  return (P_ - P_.transpose()).cwiseAbs().maxCoeff();
}

void BlockCovariance::mirror_upper() {
  const int n = dim();
  for (int j = 0; j < n; ++j) {
    for (int i = j + 1; i < n; ++i) P_(i, j) = P_(j, i);
  }
}

// ---------------------------------------------------------------------------
// Transition / noise

CovStorage Transition::dense() const {
  const int n = error_dim(model);
  const int nb = block_count(model);
  CovStorage F = CovStorage::Identity(n, n);
  F.block<3, 3>(3 * kRot, 3 * kRot) = rot_rot;
  if (nb > kVel) {
    F.block<3, 3>(3 * kPos, 3 * kVel) = dt * Mat3::Identity();
    F.block<3, 3>(3 * kRot, 3 * kAngVel) = rot_angvel;
  }
  if (nb > kAcc) {
    F.block<3, 3>(3 * kPos, 3 * kAcc) = 0.5 * dt * dt * Mat3::Identity();
    F.block<3, 3>(3 * kVel, 3 * kAcc) = dt * Mat3::Identity();
    F.block<3, 3>(3 * kAngVel, 3 * kAngAcc) = dt * Mat3::Identity();
    F.block<3, 3>(3 * kRot, 3 * kAngAcc) = rot_angacc;
  }
  return F;
}

CovStorage ProcessNoise::dense() const {
  const int n = error_dim(model);
  CovStorage Q = CovStorage::Zero(n, n);
  for (int i = 0; i < n; ++i) Q(i, i) = block_variance[i / 3];
  return Q;
}

namespace {

// Rotation increment over dt: omega dt (+ alpha dt^2 / 2 for CA).
template <class S>
Vec3 rotation_increment(const S& x, double dt) {
  Vec3 th = Vec3::Zero();
  if (x.twist) th += x.twist->angular * dt;
  if (x.accel) th += 0.5 * dt * dt * x.accel->angular;
  return th;
}

template <class S>
void predict_euclidean(S& y, const S& x, double dt) {
  if (!x.twist) return;
  y.position = x.position + x.twist->linear * dt;
  if (x.accel) {
    y.position += 0.5 * dt * dt * x.accel->linear;
    y.twist->linear = x.twist->linear + x.accel->linear * dt;
    y.twist->angular = x.twist->angular + x.accel->angular * dt;
  }
}

Eigen::Quaterniond quat_exp(const Vec3& th) {
  const double a = th.norm();
  if (a < kSmallAngle) {
    Eigen::Quaterniond q(1.0, 0.5 * th.x(), 0.5 * th.y(), 0.5 * th.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(a, th / a));
}

}  // namespace

FilterState predict_state(const FilterState& x, double dt) {
  FilterState y = x;
  if (x.model() == MotionModel::CP) return y;
  predict_euclidean(y, x, dt);
  y.rotation = oplus(x.rotation, rotation_increment(x, dt));
  return y;
}

ClassicState classic_predict(const ClassicState& x, double dt) {
  ClassicState y = x;
  if (x.model() == MotionModel::CP) return y;
  predict_euclidean(y, x, dt);
  y.rotation = (x.rotation * quat_exp(rotation_increment(x, dt))).normalized();
  return y;
}

Transition transition_jacobian(const FilterState& x, double dt) {
  Transition F;
  F.model = x.model();
  F.dt = dt;
  if (F.model == MotionModel::CP) return F;
  const Vec3 th = rotation_increment(x, dt);
  F.rot_rot = exp_so3(th).matrix().transpose();
  const Mat3 Jr = right_jacobian(th);
  F.rot_angvel = Jr * dt;
  if (F.model == MotionModel::CA) F.rot_angacc = 0.5 * dt * F.rot_angvel;
  return F;
}

Transition classic_transition_jacobian(const ClassicState& x, double dt) {
  Transition F;
  F.model = x.model();
  F.dt = dt;
  if (F.model == MotionModel::CP) return F;
  F.rot_rot = Mat3::Identity() - hat(rotation_increment(x, dt));
  F.rot_angvel = dt * Mat3::Identity();
  if (F.model == MotionModel::CA) F.rot_angacc = 0.5 * dt * dt * Mat3::Identity();
  return F;
}

ProcessNoise build_process_noise(const NoiseParams& p, double dt, MotionModel model) {
  ProcessNoise Q;
  Q.model = model;
  auto& v = Q.block_variance;
  switch (model) {
    case MotionModel::CP:
      v[kPos] = p.sigma_pos * p.sigma_pos * dt;
      v[kRot] = p.sigma_rot * p.sigma_rot * dt;
      break;
    case MotionModel::CV:
      v[kVel] = p.sigma_vel * p.sigma_vel * dt;
      v[kAngVel] = p.sigma_angvel * p.sigma_angvel * dt;
      break;
    case MotionModel::CA:
      v[kAcc] = p.sigma_acc * p.sigma_acc * dt;
      v[kAngAcc] = p.sigma_angacc * p.sigma_angacc * dt;
      break;
  }
  return Q;
}

// ---------------------------------------------------------------------------
// Block-sparse propagation.
//
// F has identity diagonal blocks except (R,R), plus scalar-identity blocks
// dt (r,v) (v,a) (w,alpha), dt^2/2 (r,a), and the matrix blocks (R,w), (R,alpha).
// A = F P is formed row by row, then P' = A F^T for the upper triangle only.

BlockCovariance propagate_covariance(const BlockCovariance& P, const Transition& F,
                                     const ProcessNoise& Q) {
  if (P.model() != F.model || Q.model != F.model) {
    throw std::invalid_argument("propagate_covariance: dimension mismatch with motion model");
  }
  const int nb = P.blocks();
  BlockCovariance out(F.model);

  if (F.model == MotionModel::CP) {
    out.dense() = P.dense();
  } else {
    const double dt = F.dt;
    const double h = 0.5 * dt * dt;
    const bool ca = nb > kAcc;

    // A = F P, block rows.
    Eigen::Matrix<double, kMaxDim, kMaxDim> A;
    for (int j = 0; j < nb; ++j) {
      auto Pb = [&](int i) { return P.block(i, j); };
      auto Ab = [&](int i) { return A.block<3, 3>(3 * i, 3 * j); };
      Ab(kPos) = Pb(kPos) + dt * Pb(kVel);
      Ab(kRot) = F.rot_rot * Pb(kRot) + F.rot_angvel * Pb(kAngVel);
      if (ca) {
        Ab(kPos) += h * Pb(kAcc);
        Ab(kRot) += F.rot_angacc * Pb(kAngAcc);
        Ab(kVel) = Pb(kVel) + dt * Pb(kAcc);
        Ab(kAngVel) = Pb(kAngVel) + dt * Pb(kAngAcc);
        Ab(kAcc) = Pb(kAcc);
        Ab(kAngAcc) = Pb(kAngAcc);
      } else {
        Ab(kVel) = Pb(kVel);
        Ab(kAngVel) = Pb(kAngVel);
      }
    }

    // P' = A F^T, upper blocks, mirrored.
    for (int i = 0; i < nb; ++i) {
      auto Ab = [&](int k) { return A.block<3, 3>(3 * i, 3 * k); };
      for (int j = i; j < nb; ++j) {
        Mat3 blk;
        switch (j) {
          case kPos:
            blk = Ab(kPos) + dt * Ab(kVel);
            if (ca) blk += h * Ab(kAcc);
            break;
          case kRot:
            blk = Ab(kRot) * F.rot_rot.transpose() + Ab(kAngVel) * F.rot_angvel.transpose();
            if (ca) blk += Ab(kAngAcc) * F.rot_angacc.transpose();
            break;
          case kVel:
            blk = ca ? Mat3(Ab(kVel) + dt * Ab(kAcc)) : Mat3(Ab(kVel));
            break;
          case kAngVel:
            blk = ca ? Mat3(Ab(kAngVel) + dt * Ab(kAngAcc)) : Mat3(Ab(kAngVel));
            break;
          default:
            blk = Ab(j);
            break;
        }
        if (i == j) {
          out.block(i, i) = 0.5 * (blk + blk.transpose());
        } else {
          out.block(i, j) = blk;
          out.block(j, i) = blk.transpose();
        }
      }
    }
  }

  for (int b = 0; b < nb; ++b) {
    const double q = Q.block_variance[b];
    if (q != 0.0) out.block(b, b).diagonal().array() += q;
  }
  return out;
}

BlockCovariance propagate_covariance(const BlockCovariance& P, const FilterState& x,
                                     const NoiseParams& p, double dt) {
  return propagate_covariance(P, transition_jacobian(x, dt), build_process_noise(p, dt, x.model()));
}

BlockCovariance propagate_covariance(const BlockCovariance& P, const ClassicState& x,
                                     const NoiseParams& p, double dt) {
  return propagate_covariance(P, classic_transition_jacobian(x, dt),
                              build_process_noise(p, dt, x.model()));
}

// ---------------------------------------------------------------------------
// Manifold plus / minus

namespace {

template <class S>
void add_euclidean(S& x, std::span<const double> dx) {
  auto seg = [&](int b) { return Eigen::Map<const Vec3>(dx.data() + 3 * b); };
  x.position += seg(kPos);
  if (x.twist) {
    x.twist->linear += seg(kVel);
    x.twist->angular += seg(kAngVel);
  }
  if (x.accel) {
    x.accel->linear += seg(kAcc);
    x.accel->angular += seg(kAngAcc);
  }
}

template <class S>
ErrorVector euclidean_difference(const S& b, const S& a) {
  ErrorVector d = ErrorVector::Zero(error_dim(a.model()));
  d.segment<3>(3 * kPos) = b.position - a.position;
  if (a.twist) {
    d.segment<3>(3 * kVel) = b.twist->linear - a.twist->linear;
    d.segment<3>(3 * kAngVel) = b.twist->angular - a.twist->angular;
  }
  if (a.accel) {
    d.segment<3>(3 * kAcc) = b.accel->linear - a.accel->linear;
    d.segment<3>(3 * kAngAcc) = b.accel->angular - a.accel->angular;
  }
  return d;
}

}  // namespace

void apply_correction(FilterState& x, std::span<const double> dx) {
  add_euclidean(x, dx);
  x.rotation = oplus(x.rotation, Eigen::Map<const Vec3>(dx.data() + 3 * kRot));
}

void apply_correction(ClassicState& x, std::span<const double> dx) {
  add_euclidean(x, dx);
  const Eigen::Map<const Vec3> dth(dx.data() + 3 * kRot);
  const Eigen::Quaterniond dq(1.0, 0.5 * dth.x(), 0.5 * dth.y(), 0.5 * dth.z());
  x.rotation = (x.rotation * dq).normalized();
}

ErrorVector state_difference(const FilterState& b, const FilterState& a) {
  ErrorVector d = euclidean_difference(b, a);
  d.segment<3>(3 * kRot) = ominus(b.rotation, a.rotation);
  return d;
}

ErrorVector state_difference(const ClassicState& b, const ClassicState& a) {
  ErrorVector d = euclidean_difference(b, a);
  d.segment<3>(3 * kRot) =
      detail::log_unchecked((a.rotation.conjugate() * b.rotation).normalized().toRotationMatrix());
  return d;
}

}  // namespace evtrack
