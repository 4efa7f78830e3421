#include <gtest/gtest.h>

#include "evtrack/motion.hpp"
#include "test_util.hpp"

namespace evtrack {
namespace {

using test::rand_state;
using test::rand_vec;

constexpr MotionModel kModels[] = {MotionModel::CP, MotionModel::CV, MotionModel::CA};

// Dense F assembled by hand from the block layout, independent of Transition::dense().
CovStorage dense_from_blocks(const Transition& T) {
  const int n = error_dim(T.model);
  const double dt = T.dt;
  CovStorage F = CovStorage::Identity(n, n);
  const Mat3 I = Mat3::Identity();
  F.block<3, 3>(3, 3) = T.rot_rot;
  if (T.model != MotionModel::CP) {
    F.block<3, 3>(0, 6) = I * dt;
    F.block<3, 3>(3, 9) = T.rot_angvel;
  }
  if (T.model == MotionModel::CA) {
    F.block<3, 3>(0, 12) = I * 0.5 * dt * dt;
    F.block<3, 3>(3, 15) = T.rot_angacc;
    F.block<3, 3>(6, 12) = I * dt;
    F.block<3, 3>(9, 15) = I * dt;
  }
  return F;
}

// Central finite differences of dx -> predict(x (+) dx) (-) predict(x).
template <class State, class Predict>
CovStorage numeric_transition(const State& x, double dt, Predict predict, double h = 1e-6) {
  const int n = error_dim(x.model());
  const State y0 = predict(x, dt);
  CovStorage F(n, n);
  for (int k = 0; k < n; ++k) {
    ErrorVector d = ErrorVector::Zero(n);
    d[k] = h;
    State xp = x, xm = x;
    apply_correction(xp, std::span<const double>(d.data(), n));
    d[k] = -h;
    apply_correction(xm, std::span<const double>(d.data(), n));
    F.col(k) = (state_difference(predict(xp, dt), y0) - state_difference(predict(xm, dt), y0)) / (2 * h);
  }
  return F;
}

TEST(Predict, ConstantPositionUnchanged) {
  const FilterState x = rand_state(MotionModel::CP);
  const FilterState y = predict_state(x, 1e-4);
  EXPECT_EQ(y.position, x.position);
  EXPECT_EQ(y.rotation.matrix(), x.rotation.matrix());
}

TEST(Predict, ConstantVelocityLinear) {
  FilterState x = make_state(MotionModel::CV, Vec3::Zero(), Rotation());
  x.twist->linear = Vec3(1, 0, 0);
  const FilterState y = predict_state(x, 0.1);
  EXPECT_LT((y.position - Vec3(0.1, 0, 0)).norm(), 1e-15);
  EXPECT_EQ(y.twist->linear, x.twist->linear);
}

TEST(Predict, ConstantAcceleration) {
  FilterState x = make_state(MotionModel::CA, Vec3::Zero(), Rotation());
  x.accel->linear = Vec3(0, 0, 10);
  const FilterState y = predict_state(x, 0.1);
  EXPECT_LT((y.position - Vec3(0, 0, 0.05)).norm(), 1e-15);
  EXPECT_LT((y.twist->linear - Vec3(0, 0, 1)).norm(), 1e-15);
  EXPECT_EQ(y.accel->linear, x.accel->linear);
}

TEST(Predict, CaRotationIncludesHalfAlphaDt2) {
  FilterState x = make_state(MotionModel::CA, Vec3::Zero(), Rotation());
  x.twist->angular = Vec3(0.3, -0.2, 0.1);
  x.accel->angular = Vec3(4, 5, -6);
  const double dt = 0.05;
  const FilterState y = predict_state(x, dt);
  const Vec3 th = x.twist->angular * dt + 0.5 * x.accel->angular * dt * dt;
  EXPECT_LT((y.rotation.matrix() - test::angle_axis(th)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((y.twist->angular - (x.twist->angular + x.accel->angular * dt)).norm(), 1e-15);
}

TEST(Transition, ConstantPositionIsIdentity) {
  const Transition T = transition_jacobian(rand_state(MotionModel::CP), 1e-4);
  EXPECT_EQ(T.dense(), CovStorage::Identity(6, 6));
}

TEST(Transition, ZeroAngularVelocity) {
  FilterState x = make_state(MotionModel::CV, rand_vec(), Rotation::unchecked(test::rand_rotation()));
  const double dt = 1e-3;
  const Transition T = transition_jacobian(x, dt);
  EXPECT_EQ(T.rot_rot, Mat3::Identity());
  EXPECT_LT((T.rot_angvel - Mat3::Identity() * dt).cwiseAbs().maxCoeff(), 1e-18);
}

TEST(Transition, DenseMatchesBlockLayout) {
  for (MotionModel m : kModels) {
    const Transition T = transition_jacobian(rand_state(m), 1e-3);
    EXPECT_EQ(T.dense(), dense_from_blocks(T)) << to_string(m);
  }
}

TEST(Transition, MatchesFiniteDifferences) {
  for (MotionModel m : kModels) {
    for (int i = 0; i < 200; ++i) {
      const FilterState x = rand_state(m);
      const double dt = test::uni(1e-4, 2e-2);
      const CovStorage Fn = numeric_transition(x, dt, [](const FilterState& s, double d) {
        return predict_state(s, d);
      });
      const CovStorage F = transition_jacobian(x, dt).dense();
      for (int c = 0; c < F.cols(); ++c) {
        const double rel = (Fn.col(c) - F.col(c)).norm() / std::max(1e-3, F.col(c).norm());
        ASSERT_LT(rel, 1e-5) << to_string(m) << " column " << c;
      }
    }
  }
}

TEST(ClassicTransition, NearLieForSmallRotation) {
  for (MotionModel m : {MotionModel::CV, MotionModel::CA}) {
    for (int i = 0; i < 100; ++i) {
      const FilterState x = rand_state(m);
      const double dt = 1e-4;
      const Transition Tl = transition_jacobian(x, dt);
      const Transition Tc = classic_transition_jacobian(to_classic(x), dt);
      Vec3 th = x.twist->angular * dt;
      if (x.accel) th += 0.5 * x.accel->angular * dt * dt;
      const double bound = 2.0 * th.squaredNorm() + 1e-15;
      EXPECT_LT((Tl.rot_rot - Tc.rot_rot).cwiseAbs().maxCoeff(), bound);
      EXPECT_LT((Tl.rot_angvel - Tc.rot_angvel).cwiseAbs().maxCoeff(), dt * th.norm());
    }
  }
}

TEST(ClassicTransition, MatchesFiniteDifferencesToFirstOrder) {
  for (MotionModel m : kModels) {
    for (int i = 0; i < 100; ++i) {
      const ClassicState x = to_classic(rand_state(m));
      const double dt = 1e-4;
      const CovStorage Fn = numeric_transition(x, dt, [](const ClassicState& s, double d) {
        return classic_predict(s, d);
      });
      const CovStorage F = classic_transition_jacobian(x, dt).dense();
      EXPECT_LT((Fn - F).cwiseAbs().maxCoeff() / F.cwiseAbs().maxCoeff(), 1e-5);
    }
  }
}

TEST(ClassicPredict, ZeroAngularVelocityKeepsQuaternion) {
  ClassicState x = to_classic(make_state(MotionModel::CV, Vec3::Zero(),
                                         Rotation::unchecked(test::rand_rotation())));
  const ClassicState y = classic_predict(x, 0.01);
  EXPECT_LT((y.rotation.coeffs() - x.rotation.coeffs()).norm(), 1e-15);
}

TEST(ClassicPredict, UnitNormOverMillionSteps) {
  ClassicState x = to_classic(make_state(MotionModel::CV, Vec3::Zero(), Rotation()));
  x.twist->angular = Vec3(3.0, -2.0, 5.0);
  for (int i = 0; i < 1'000'000; ++i) x = classic_predict(x, 1e-4);
  EXPECT_LT(std::abs(x.rotation.norm() - 1.0), 1e-9);
}

TEST(ProcessNoise, VelocityEntries) {
  const CovStorage Q = build_process_noise(NoiseParams{}, 1e-4, MotionModel::CV).dense();
  for (int k = 6; k < 9; ++k) EXPECT_NEAR(Q(k, k), 9e-4, 1e-18);
  for (int k = 0; k < 6; ++k) EXPECT_EQ(Q(k, k), 0.0);
  EXPECT_NEAR(Q(9, 9), 100 * 1e-4, 1e-16);
}

TEST(ProcessNoise, PositionEntriesForCp) {
  const CovStorage Q = build_process_noise(NoiseParams{}, 1e-4, MotionModel::CP).dense();
  EXPECT_NEAR(Q(0, 0), 9e-8, 1e-20);
  EXPECT_NEAR(Q(3, 3), 0.09 * 1e-4, 1e-18);
}

TEST(ProcessNoise, CaOnlyAccelerationBlocks) {
  const CovStorage Q = build_process_noise(NoiseParams{}, 1e-4, MotionModel::CA).dense();
  for (int k = 0; k < 12; ++k) EXPECT_EQ(Q(k, k), 0.0);
  EXPECT_NEAR(Q(12, 12), 6400 * 1e-4, 1e-12);
  EXPECT_NEAR(Q(15, 15), 90000 * 1e-4, 1e-10);
}

TEST(ProcessNoise, ZeroDtIsZero) {
  for (MotionModel m : kModels) {
    EXPECT_TRUE(build_process_noise(NoiseParams{}, 0.0, m).dense().isZero(0.0));
  }
}

TEST(Propagate, CpWithZeroNoiseUnchanged) {
  NoiseParams p;
  p.sigma_pos = p.sigma_rot = 0.0;
  const BlockCovariance P(MotionModel::CP, test::rand_spd(6));
  const BlockCovariance Pn = propagate_covariance(P, rand_state(MotionModel::CP), p, 1e-4);
  EXPECT_EQ(Pn.dense(), P.dense());
}

TEST(Propagate, SparseEqualsDense) {
  for (MotionModel m : kModels) {
    const int n = error_dim(m);
    for (int i = 0; i < 300; ++i) {
      const FilterState x = rand_state(m);
      const double dt = test::uni(1e-5, 1e-2);
      const BlockCovariance P(m, test::rand_spd(n));
      const Transition T = transition_jacobian(x, dt);
      const ProcessNoise Q = build_process_noise(NoiseParams{}, dt, m);
      const CovStorage F = dense_from_blocks(T);
      const CovStorage ref = F * P.dense() * F.transpose() + Q.dense();
      const BlockCovariance out = propagate_covariance(P, T, Q);
      ASSERT_LT((out.dense() - ref).cwiseAbs().maxCoeff(), 1e-10) << to_string(m);
      ASSERT_LT(out.symmetry_error(), 1e-12);
    }
  }
}

TEST(Propagate, VelocityBlockGrowsByNoise) {
  const NoiseParams p;
  const double dt = 1e-4;
  const FilterState x = rand_state(MotionModel::CV);
  const BlockCovariance P(MotionModel::CV, test::rand_spd(12));
  const BlockCovariance Pn = propagate_covariance(P, x, p, dt);
  const Mat3 expected = P.block(kVel, kVel) + p.sigma_vel * p.sigma_vel * dt * Mat3::Identity();
  EXPECT_LT((Pn.block(kVel, kVel) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagate, CvNestsInCaWithDecoupledAcceleration) {
  // With zero cross-covariance to the acceleration blocks and matching noise,
  // the CA result restricted to the first 12 dimensions equals CV.
  const double dt = 1e-4;
  FilterState xa = rand_state(MotionModel::CA);
  *xa.accel = AccelBlock{};
  const FilterState xv = with_model(xa, MotionModel::CV);
  CovStorage Pa = CovStorage::Zero(18, 18);
  Pa.topLeftCorner(12, 12) = test::rand_spd(12);
  const Transition Ta = transition_jacobian(xa, dt);
  const Transition Tv = transition_jacobian(xv, dt);
  ProcessNoise Qa = build_process_noise(NoiseParams{}, dt, MotionModel::CA);
  const ProcessNoise Qv = build_process_noise(NoiseParams{}, dt, MotionModel::CV);
  for (int b = 0; b < 4; ++b) Qa.block_variance[b] = Qv.block_variance[b];
  const BlockCovariance ya = propagate_covariance(BlockCovariance(MotionModel::CA, Pa), Ta, Qa);
  const BlockCovariance yv = propagate_covariance(BlockCovariance(MotionModel::CV, Pa.topLeftCorner(12, 12)), Tv, Qv);
  EXPECT_LT((ya.dense().topLeftCorner(12, 12) - yv.dense()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Covariance, InitialDiagonal) {
  const BlockCovariance P = BlockCovariance::initial(MotionModel::CA);
  EXPECT_EQ(P.dim(), 18);
  EXPECT_DOUBLE_EQ(P.dense()(0, 0), 1e-4);
  EXPECT_DOUBLE_EQ(P.dense()(3, 3), 4e-4);
  EXPECT_DOUBLE_EQ(P.dense()(6, 6), 1e-2);
  EXPECT_DOUBLE_EQ(P.dense()(9, 9), 0.25);
  EXPECT_DOUBLE_EQ(P.dense()(12, 12), 1.0);
  EXPECT_DOUBLE_EQ(P.dense()(15, 15), 25.0);
  EXPECT_EQ(P.symmetry_error(), 0.0);
}

TEST(State, ModelFromBlocks) {
  for (MotionModel m : kModels) {
    const FilterState x = make_state(m, Vec3::Zero(), Rotation());
    EXPECT_EQ(x.model(), m);
    EXPECT_EQ(x.twist.has_value(), m != MotionModel::CP);
    EXPECT_EQ(x.accel.has_value(), m == MotionModel::CA);
  }
  EXPECT_EQ(parse_motion_model("cv"), MotionModel::CV);
  EXPECT_FALSE(parse_motion_model("xx"));
}

TEST(State, CorrectionAndDifferenceAreInverse) {
  for (MotionModel m : kModels) {
    const FilterState a = rand_state(m);
    ErrorVector d = ErrorVector::Random(error_dim(m));
    FilterState b = a;
    apply_correction(b, std::span<const double>(d.data(), d.size()));
    EXPECT_LT((state_difference(b, a) - d).norm(), 1e-12);
  }
}

TEST(State, LieClassicRoundTrip) {
  const FilterState x = rand_state(MotionModel::CA);
  const FilterState y = to_lie(to_classic(x));
  EXPECT_LT((y.rotation.matrix() - x.rotation.matrix()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(y.position, x.position);
}

}  // namespace
}  // namespace evtrack
