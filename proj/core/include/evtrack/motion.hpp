#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "evtrack/lie.hpp"

namespace evtrack {

/// Constant position, constant velocity, constant acceleration.
enum class MotionModel { CP, CV, CA };

/// Number of 3x3 blocks in the error state (2, 4 or 6).
constexpr int block_count(MotionModel m) {
  return m == MotionModel::CP ? 2 : (m == MotionModel::CV ? 4 : 6);
}
/// Error-state dimension (6, 12 or 18).
constexpr int error_dim(MotionModel m) { return 3 * block_count(m); }

inline constexpr int kMaxDim = 18;

std::string_view to_string(MotionModel m);
std::optional<MotionModel> parse_motion_model(std::string_view s);

/// Error-state block indices, in state order.
enum Block : int { kPos = 0, kRot = 1, kVel = 2, kAngVel = 3, kAcc = 4, kAngAcc = 5 };

struct Twist {
  Vec3 linear = Vec3::Zero();   // m/s
  Vec3 angular = Vec3::Zero();  // rad/s, body frame
};

struct AccelBlock {
  Vec3 linear = Vec3::Zero();   // m/s^2
  Vec3 angular = Vec3::Zero();  // rad/s^2
};

/**
 * @brief Nominal filter state, generic over the orientation representation.
 *
 * The velocity and acceleration blocks are present only for the models
 * that carry them; model() is derived from which blocks exist.
 */
template <class Orientation>
struct BasicState {
  Vec3 position = Vec3::Zero();
  Orientation rotation = Orientation::Identity();
  std::optional<Twist> twist;
  std::optional<AccelBlock> accel;
  std::int64_t stamp_us = 0;

  MotionModel model() const {
    if (accel) return MotionModel::CA;
    if (twist) return MotionModel::CV;
    return MotionModel::CP;
  }
};

/// Lie parameterization: orientation is a rotation matrix.
using FilterState = BasicState<Rotation>;
/// Classic parameterization: orientation is a unit quaternion.
using ClassicState = BasicState<Eigen::Quaterniond>;

/// Builds a state with the blocks required by `model`, all zero.
template <class Orientation>
BasicState<Orientation> make_state(MotionModel model, const Vec3& position,
                                   const Orientation& rotation, std::int64_t stamp_us = 0) {
  BasicState<Orientation> x;
  x.position = position;
  x.rotation = rotation;
  x.stamp_us = stamp_us;
  if (model != MotionModel::CP) x.twist = Twist{};
  if (model == MotionModel::CA) x.accel = AccelBlock{};
  return x;
}

/// Same state with blocks added (zero) or dropped to match `model`.
template <class Orientation>
BasicState<Orientation> with_model(BasicState<Orientation> x, MotionModel model) {
  if (model == MotionModel::CP) {
    x.twist.reset();
    x.accel.reset();
  } else {
    if (!x.twist) x.twist = Twist{};
    if (model == MotionModel::CA) {
      if (!x.accel) x.accel = AccelBlock{};
    } else {
      x.accel.reset();
    }
  }
  return x;
}

inline Mat3 rotation_matrix(const Rotation& R) { return R.matrix(); }
inline Mat3 rotation_matrix(const Eigen::Quaterniond& q) { return q.toRotationMatrix(); }
Eigen::Quaterniond to_quaternion(const Rotation& R);
Rotation to_rotation(const Eigen::Quaterniond& q);
ClassicState to_classic(const FilterState& x);
FilterState to_lie(const ClassicState& x);

/// Continuous-time perturbation densities (reference tuning by default).
struct NoiseParams {
  double sigma_pos = 0.03;       // m/s^1/2
  double sigma_rot = 0.3;        // rad/s^1/2
  double sigma_vel = 3.0;        // m/s^3/2
  double sigma_angvel = 10.0;    // rad/s^3/2
  double sigma_acc = 80.0;       // m/s^5/2
  double sigma_angacc = 300.0;   // rad/s^5/2

  friend bool operator==(const NoiseParams&, const NoiseParams&) = default;
};

/// Standard deviations of the diagonal initial covariance.
struct InitialSigmas {
  double pos = 0.01;
  double rot = 0.02;
  double vel = 0.1;
  double angvel = 0.5;
  double acc = 1.0;
  double angacc = 5.0;
};

using CovStorage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using ErrorVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

/**
 * @brief Error-state covariance partitioned in 3x3 blocks.
 *
 * Storage is a fixed-capacity (18x18) matrix with the active dimension set
 * by the model, so no allocation happens on the filter path.
 */
class BlockCovariance {
 public:
  explicit BlockCovariance(MotionModel model);
  BlockCovariance(MotionModel model, const CovStorage& dense);

  static BlockCovariance initial(MotionModel model, const InitialSigmas& s = {});

  MotionModel model() const { return model_; }
  int dim() const { return static_cast<int>(P_.rows()); }
  int blocks() const { return dim() / 3; }

  auto block(int i, int j) { return P_.block<3, 3>(3 * i, 3 * j); }
  auto block(int i, int j) const { return P_.block<3, 3>(3 * i, 3 * j); }

  CovStorage& dense() { return P_; }
  const CovStorage& dense() const { return P_; }

  /// Max-abs of P - P^T.
  double symmetry_error() const;
  /// Copies the upper triangle onto the lower one.
  void mirror_upper();

 private:
  MotionModel model_;
  CovStorage P_;
};

/**
 * @brief Block-sparse transition Jacobian.
 *
 * Only the orientation row carries non-trivial blocks; every other nonzero
 * block is a multiple of the identity (1, dt or dt^2/2) and is applied as a
 * scalar.
 */
struct Transition {
  MotionModel model = MotionModel::CP;
  double dt = 0.0;
  Mat3 rot_rot = Mat3::Identity();   // d(theta')/d(theta)
  Mat3 rot_angvel = Mat3::Zero();    // d(theta')/d(omega)
  Mat3 rot_angacc = Mat3::Zero();    // d(theta')/d(alpha)

  CovStorage dense() const;
};

/// Diagonal process noise; one variance per block, already scaled by dt.
struct ProcessNoise {
  MotionModel model = MotionModel::CP;
  std::array<double, 6> block_variance{};

  CovStorage dense() const;
};

FilterState predict_state(const FilterState& x, double dt);
ClassicState classic_predict(const ClassicState& x, double dt);

Transition transition_jacobian(const FilterState& x, double dt);
/// First-order orientation blocks: I - [w dt]x, I dt, I dt^2/2.
Transition classic_transition_jacobian(const ClassicState& x, double dt);

ProcessNoise build_process_noise(const NoiseParams& p, double dt, MotionModel model);

/// F P F^T + Q, computed block by block.
BlockCovariance propagate_covariance(const BlockCovariance& P, const Transition& F,
                                     const ProcessNoise& Q);
BlockCovariance propagate_covariance(const BlockCovariance& P, const FilterState& x,
                                     const NoiseParams& p, double dt);
BlockCovariance propagate_covariance(const BlockCovariance& P, const ClassicState& x,
                                     const NoiseParams& p, double dt);

/// x (+) dx. Euclidean blocks add; orientation composes on the right.
void apply_correction(FilterState& x, std::span<const double> dx);
/// Quaternion first-order correction q * [1, dtheta/2], then renormalized.
void apply_correction(ClassicState& x, std::span<const double> dx);

/// b (-) a, in the error-state layout of a.model().
ErrorVector state_difference(const FilterState& b, const FilterState& a);
ErrorVector state_difference(const ClassicState& b, const ClassicState& a);

}  // namespace evtrack
