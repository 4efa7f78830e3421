#include <gtest/gtest.h>

#include "evtrack/camera.hpp"
#include "test_util.hpp"

namespace evtrack {
namespace {

using test::rand_vec;
using test::uni;

constexpr MotionModel kModels[] = {MotionModel::CP, MotionModel::CV, MotionModel::CA};
constexpr ProjectionMode kModes[] = {ProjectionMode::MovingCamera, ProjectionMode::MovingObject};

CameraCalib distorted_calib(double k1 = -0.3, double k2 = 0.05) {
  CameraCalib c = default_calib();
  c.k1 = k1;
  c.k2 = k2;
  return c;
}

// A camera pose looking at the origin from roughly 1 m, and a segment near
// the origin, so both endpoints are in front of the camera in either mode.
struct Config {
  Pose pose;
  Segment3D seg;
  Event e;
};

Config random_config(ProjectionMode mode) {
  Config c;
  const Mat3 R = test::angle_axis(test::rand_rotvec(0.3));
  // Camera frame: the segment sits about 1 m in front.
  const Vec3 p1c = Vec3(uni(-0.2, 0.2), uni(-0.2, 0.2), uni(0.8, 1.2));
  const Vec3 p2c = p1c + rand_vec(0.2);
  const Vec3 r = rand_vec(0.1);
  if (mode == ProjectionMode::MovingCamera) {
    // p_c = R^T (p - r)  =>  p = R p_c + r
    c.pose = {r, R};
    c.seg = {R * p1c + r, R * p2c + r, 1};
  } else {
    // p_c = r + R p  =>  p = R^T (p_c - r)
    c.pose = {r, R};
    c.seg = {R.transpose() * (p1c - r), R.transpose() * (p2c - r), 1};
  }
  c.e = Event{0, uni(20, 220), uni(20, 160), 1};
  return c;
}

Pose perturb(const Pose& p, const Eigen::Matrix<double, 6, 1>& d) {
  return Pose{p.position + d.head<3>(), p.rotation * test::angle_axis(d.tail<3>())};
}

double distance_at(const Config& c, const Pose& pose, ProjectionMode mode, const Mat3& K) {
  const Vec3 u1 = project_endpoint(c.seg.p1, pose, mode, K);
  const Vec3 u2 = project_endpoint(c.seg.p2, pose, mode, K);
  return point_line_distance(Vec2(c.e.u, c.e.v), u1.cross(u2));
}

TEST(Undistort, PrincipalPointFixed) {
  const CameraCalib c = distorted_calib();
  const Vec2 pp(c.cx, c.cy);
  EXPECT_EQ(undistort_event(pp, c), pp);
}

TEST(Undistort, NoDistortionIsIdentity) {
  const CameraCalib c = distorted_calib(0.0, 0.0);
  for (int i = 0; i < 100; ++i) {
    const Vec2 p(uni(0, 240), uni(0, 180));
    EXPECT_EQ(undistort_event(p, c), p);
  }
}

// With k2 = 0 the radial map r (1 - 0.3 r^2) peaks below the sensor corner
// radius, so the corners would have no preimage; k2 = 0.05 keeps it monotonic.
TEST(Undistort, ForwardRoundTrip) {
  const CameraCalib c = distorted_calib(-0.3, 0.05);
  ASSERT_NO_THROW(c.validate());
  for (int i = 0; i < 10000; ++i) {
    const Vec2 p(uni(0, 240), uni(0, 180));
    EXPECT_LT((distort_pixel(undistort_event(p, c), c) - p).norm(), 1e-6);
  }
}

TEST(Undistort, LookupTableAgrees) {
  const CameraCalib c = distorted_calib();
  const UndistortLut lut(c);
  for (int v = 0; v < c.height; v += 7) {
    for (int u = 0; u < c.width; u += 5) {
      const Vec2 ref = undistort_event(Vec2(u, v), c);
      const auto got = lut.lookup(u, v);
      const bool inside = ref.x() >= 0 && ref.y() >= 0 && ref.x() < c.width && ref.y() < c.height;
      ASSERT_EQ(got.has_value(), inside);
      if (got) EXPECT_LT((*got - ref).norm(), 1e-12);
    }
  }
  EXPECT_FALSE(lut.lookup(-1, 0));
  EXPECT_FALSE(lut.lookup(0, c.height));
}

TEST(Calib, RejectsNonMonotonicDistortion) {
  EXPECT_NO_THROW(distorted_calib().validate());
  EXPECT_THROW(distorted_calib(-3.0, 0.0).validate(), std::invalid_argument);
  CameraCalib c = default_calib();
  c.fx = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Project, OpticalAxis) {
  const Vec3 u = project_endpoint(Vec3(0, 0, 1), Pose{}, ProjectionMode::MovingCamera, Mat3::Identity());
  EXPECT_EQ(u, Vec3(0, 0, 1));
}

TEST(Project, MovingObjectTranslation) {
  const Vec3 u = project_endpoint(Vec3::Zero(), Pose{Vec3(0, 0, 1), Mat3::Identity()},
                                  ProjectionMode::MovingObject, Mat3::Identity());
  EXPECT_EQ(u, Vec3(0, 0, 1));
}

TEST(Project, BehindCameraThrows) {
  try {
    project_endpoint(Vec3(0, 0, -1), Pose{}, ProjectionMode::MovingCamera, Mat3::Identity());
    FAIL();
  } catch (const GeometryError& e) {
    EXPECT_EQ(e.code(), GeometryErrorCode::NonPositiveDepth);
  }
}

TEST(Project, FrameInversionDuality) {
  const Mat3 K = default_calib().K();
  for (int i = 0; i < 1000; ++i) {
    const Pose T{rand_vec(0.5), test::rand_rotation()};
    const Vec3 pc = Vec3(uni(-1, 1), uni(-1, 1), uni(1, 3));
    const Vec3 p = T.rotation * pc + T.position;
    const Pose Ti{-T.rotation.transpose() * T.position, T.rotation.transpose()};
    const Vec3 a = project_endpoint(p, T, ProjectionMode::MovingCamera, K);
    const Vec3 b = project_endpoint(p, Ti, ProjectionMode::MovingObject, K);
    EXPECT_LT((a - b).norm(), 1e-9 * a.norm());
    const Pose Tl = inverse(T);
    EXPECT_LT((Tl.position - Ti.position).norm(), 1e-15);
  }
}

TEST(ProjectSegment, VerticalSegmentOnAxis) {
  const Segment3D s{Vec3(0, -0.1, 1), Vec3(0, 0.1, 1), 3};
  const ProjectedLine l = project_segment(s, Pose{}, ProjectionMode::MovingCamera, [] {
    CameraCalib c = default_calib();
    c.fx = c.fy = 1;
    c.cx = c.cy = 0;
    return c;
  }());
  EXPECT_NEAR(std::abs(l.line.normalized().x()), 1.0, 1e-15);
  EXPECT_EQ(l.seg_id, 3);
}

TEST(ProjectSegment, IncidenceAndSwap) {
  const CameraCalib calib = default_calib();
  for (ProjectionMode mode : kModes) {
    for (int i = 0; i < 1000; ++i) {
      const Config c = random_config(mode);
      const ProjectedLine l = project_segment(c.seg, c.pose, mode, calib);
      const double s = l.line.norm() * std::max(l.u1.norm(), l.u2.norm());
      EXPECT_LT(std::abs(l.line.dot(l.u1)) / s, 1e-12);
      EXPECT_LT(std::abs(l.line.dot(l.u2)) / s, 1e-12);
      const ProjectedLine sw = project_segment({c.seg.p2, c.seg.p1, 1}, c.pose, mode, calib);
      EXPECT_LT((sw.line + l.line).norm(), 1e-12 * l.line.norm());
      EXPECT_NEAR(std::abs(point_line_distance(c.e, l)), std::abs(point_line_distance(c.e, sw)), 1e-9);
    }
  }
}

TEST(Distance, OnLineIsZero) {
  const Vec3 l = Vec3(1, 2, 1).cross(Vec3(5, -1, 1));
  EXPECT_NEAR(point_line_distance(Vec2(3, 0.5), l), 0.0, 1e-12);
}

TEST(Distance, AxisAligned) { EXPECT_DOUBLE_EQ(point_line_distance(Vec2(3.5, 7), Vec3(1, 0, 0)), 3.5); }

TEST(Distance, DegenerateThrows) {
  EXPECT_THROW(point_line_distance(Vec2(1, 1), Vec3(0, 0, 1)), GeometryError);
}

TEST(Distance, TwoPointOracleAndScaleInvariance) {
  for (int i = 0; i < 10000; ++i) {
    const Vec2 a(uni(0, 240), uni(0, 180));
    const Vec2 b(uni(0, 240), uni(0, 180));
    if ((b - a).norm() < 1.0) continue;
    const Vec2 e(uni(0, 240), uni(0, 180));
    const double ref = std::abs((b.x() - a.x()) * (a.y() - e.y()) - (a.x() - e.x()) * (b.y() - a.y())) /
                       (b - a).norm();
    const Vec3 l = Vec3(a.x(), a.y(), 1).cross(Vec3(b.x(), b.y(), 1));
    const double z = point_line_distance(e, l);
    EXPECT_NEAR(std::abs(z), ref, 1e-9);
    const double k = uni(-100, 100);
    if (std::abs(k) > 1e-3) EXPECT_NEAR(std::abs(point_line_distance(e, k * l)), std::abs(z), 1e-9);
  }
}

TEST(Clip, MatchesSampledRectangleOracle) {
  for (int i = 0; i < 2000; ++i) {
    const Vec2 a0(uni(-100, 340), uni(-100, 280));
    const Vec2 b0(uni(-100, 340), uni(-100, 280));
    Vec2 a = a0, b = b0;
    const bool kept = clip_segment(a, b, 0, 0, 240, 180);
    // Sampled oracle: parameter range of samples inside the rectangle.
    double tmin = 2, tmax = -1;
    constexpr int n = 4000;
    for (int k = 0; k <= n; ++k) {
      const double t = static_cast<double>(k) / n;
      const Vec2 p = a0 + t * (b0 - a0);
      if (p.x() >= 0 && p.x() <= 240 && p.y() >= 0 && p.y() <= 180) {
        tmin = std::min(tmin, t);
        tmax = std::max(tmax, t);
      }
    }
    if (tmax < 0) {
      // Only grazing intersections can be missed by sampling.
      if (kept) EXPECT_LT((b - a).norm(), (b0 - a0).norm() * 2.0 / n);
      continue;
    }
    ASSERT_TRUE(kept);
    const double step = (b0 - a0).norm() / n;
    EXPECT_LT((a - (a0 + tmin * (b0 - a0))).norm(), step * 1.01);
    EXPECT_LT((b - (a0 + tmax * (b0 - a0))).norm(), step * 1.01);
  }
}

TEST(Visible, BehindInsideAndCrossing) {
  const CameraCalib calib = default_calib();
  const std::vector<Segment3D> map = {
      {Vec3(-0.1, 0, -1), Vec3(0.1, 0, -1), 0},  // behind
      {Vec3(-0.1, 0, 1), Vec3(0.1, 0, 1), 1},    // inside
      {Vec3(-5.0, 0, 1), Vec3(0.0, 0, 1), 2},    // crosses the left border
      {Vec3(-5.0, 0, 1), Vec3(-4, 0, 1), 3},     // entirely left of the image
  };
  const auto lines = visible_segments(map, Pose{}, ProjectionMode::MovingCamera, calib);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].seg_id, 1);
  EXPECT_EQ(lines[1].seg_id, 2);
  EXPECT_NEAR(lines[1].clip1.x(), 0.0, 1e-12);
  EXPECT_NEAR(lines[1].clip2.x(), calib.cx, 1e-12);
  EXPECT_LT(lines[1].px1.x(), -100.0);
}

TEST(InnovationJacobian, SparseLayout) {
  const Config c = random_config(ProjectionMode::MovingCamera);
  const SparseRow J = innovation_jacobian(c.e, c.seg, c.pose, ProjectionMode::MovingCamera,
                                          default_calib(), MotionModel::CV);
  const auto d = J.dense();
  ASSERT_EQ(d.size(), 12);
  for (int k = 6; k < 12; ++k) EXPECT_EQ(d[k], 0.0);
  EXPECT_GT(d.head<6>().norm(), 0.0);
}

// Central differences of z under a right perturbation of (r, R), both modes,
// all models (only the dimension of the row changes with the model).
TEST(InnovationJacobian, MatchesFiniteDifferences) {
  const CameraCalib calib = default_calib();
  const Mat3 K = calib.K();
  constexpr double h = 1e-6;
  for (ProjectionMode mode : kModes) {
    for (MotionModel m : kModels) {
      for (int i = 0; i < 300; ++i) {
        const Config c = random_config(mode);
        const SparseRow J = innovation_jacobian(c.e, c.seg, c.pose, mode, calib, m);
        ASSERT_EQ(J.dim, error_dim(m));
        Eigen::Matrix<double, 1, 6> num;
        for (int k = 0; k < 6; ++k) {
          Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
          d[k] = h;
          const double fp = distance_at(c, perturb(c.pose, d), mode, K);
          const double fm = distance_at(c, perturb(c.pose, -d), mode, K);
          num[k] = (fp - fm) / (2 * h);
        }
        const double rel = (num - J.pose_part).norm() / std::max(1e-3, J.pose_part.norm());
        ASSERT_LT(rel, 1e-5) << (mode == ProjectionMode::MovingCamera ? "cam" : "obj");
      }
    }
  }
}

TEST(InnovationJacobian, SimplifiedNormalizerDiffers) {
  const Config c = random_config(ProjectionMode::MovingCamera);
  const CameraCalib calib = default_calib();
  const SparseRow full = innovation_jacobian(c.e, c.seg, c.pose, ProjectionMode::MovingCamera,
                                             calib, MotionModel::CV, true);
  const SparseRow simple = innovation_jacobian(c.e, c.seg, c.pose, ProjectionMode::MovingCamera,
                                               calib, MotionModel::CV, false);
  EXPECT_GT((full.pose_part - simple.pose_part).norm(), 0.0);
}

TEST(InnovationJacobian, EndpointJacobianMatchesFiniteDifferences) {
  const Mat3 K = default_calib().K();
  constexpr double h = 1e-6;
  for (ProjectionMode mode : kModes) {
    for (int i = 0; i < 200; ++i) {
      const Config c = random_config(mode);
      const auto J = endpoint_jacobian(c.seg.p1, c.pose, mode, K);
      for (int k = 0; k < 6; ++k) {
        Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
        d[k] = h;
        const Vec3 col = (project_endpoint(c.seg.p1, perturb(c.pose, d), mode, K) -
                          project_endpoint(c.seg.p1, perturb(c.pose, -d), mode, K)) / (2 * h);
        EXPECT_LT((col - J.col(k)).norm() / std::max(1.0, J.col(k).norm()), 1e-6);
      }
    }
  }
}

TEST(FrameDuality, InnovationIdentical) {
  const CameraCalib calib = default_calib();
  for (int i = 0; i < 500; ++i) {
    const Config c = random_config(ProjectionMode::MovingCamera);
    const ProjectedLine a = project_segment(c.seg, c.pose, ProjectionMode::MovingCamera, calib);
    const ProjectedLine b = project_segment(c.seg, inverse(c.pose), ProjectionMode::MovingObject, calib);
    EXPECT_NEAR(point_line_distance(c.e, a), point_line_distance(c.e, b), 1e-9);
  }
}

}  // namespace
}  // namespace evtrack
