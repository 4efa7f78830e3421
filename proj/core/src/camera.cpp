#include "evtrack/camera.hpp"

#include <algorithm>
#include <cmath>

namespace evtrack {

Mat3 CameraCalib::K() const {
  Mat3 K;
  K << fx, 0.0, cx,
       0.0, fy, cy,
       0.0, 0.0, 1.0;
  return K;
}

void CameraCalib::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("calib: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("calib: resolution must be positive");
  // The radial map r -> r (1 + k1 r^2 + k2 r^4) must be increasing up to the
  // corner radius, otherwise it has no unique inverse.
  const double xs = std::max(cx, width - cx) / fx;
  const double ys = std::max(cy, height - cy) / fy;
  const double rmax = 1.5 * std::hypot(xs, ys);
  for (int i = 0; i <= 200; ++i) {
    const double r = rmax * i / 200.0;
    const double r2 = r * r;
    if (1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2 <= 0.0) {
      throw std::invalid_argument("calib: radial distortion is not monotonic over the sensor");
    }
  }
}

CameraCalib default_calib() {
  CameraCalib c;
  c.fx = 198.0;
  c.fy = 198.0;
  c.cx = 119.5;
  c.cy = 89.5;
  c.k1 = -0.25;
  c.k2 = 0.06;
  c.width = 240;
  c.height = 180;
  return c;
}

Pose inverse(const Pose& T) {
  return Pose{-T.rotation.transpose() * T.position, T.rotation.transpose()};
}

// ---------------------------------------------------------------------------

Vec2 distort_pixel(const Vec2& p, const CameraCalib& c) {
  const double x = (p.x() - c.cx) / c.fx;
  const double y = (p.y() - c.cy) / c.fy;
  const double r2 = x * x + y * y;
  const double s = 1.0 + c.k1 * r2 + c.k2 * r2 * r2;
  return Vec2(c.fx * x * s + c.cx, c.fy * y * s + c.cy);
}

Vec2 undistort_event(const Vec2& raw, const CameraCalib& c) {
  const double xd = (raw.x() - c.cx) / c.fx;
  const double yd = (raw.y() - c.cy) / c.fy;
  const double rd = std::hypot(xd, yd);
  if (rd == 0.0 || (c.k1 == 0.0 && c.k2 == 0.0)) return raw;

  // Solve g(r) = r (1 + k1 r^2 + k2 r^4) = rd. Tolerance is expressed in pixels.
  const double tol = 1e-8 / std::max(c.fx, c.fy);
  double r = rd;
  for (int it = 0; it < 10; ++it) {
    const double r2 = r * r;
    const double g = r * (1.0 + c.k1 * r2 + c.k2 * r2 * r2) - rd;
    if (std::abs(g) < tol) break;
    const double dg = 1.0 + 3.0 * c.k1 * r2 + 5.0 * c.k2 * r2 * r2;
    r -= g / dg;
  }
  const double s = r / rd;
  return Vec2(c.fx * xd * s + c.cx, c.fy * yd * s + c.cy);
}

UndistortLut::UndistortLut(const CameraCalib& calib)
    : width_(calib.width), height_(calib.height),
      table_(static_cast<std::size_t>(calib.width) * calib.height) {
  for (int v = 0; v < height_; ++v) {
    for (int u = 0; u < width_; ++u) {
      const Vec2 p = undistort_event(Vec2(u, v), calib);
      const bool inside = p.x() >= 0.0 && p.y() >= 0.0 && p.x() < width_ && p.y() < height_;
      table_[static_cast<std::size_t>(v) * width_ + u] = Entry{p.x(), p.y(), inside};
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

inline Vec3 camera_point(const Vec3& p, const Pose& pose, ProjectionMode mode) {
  if (mode == ProjectionMode::MovingCamera) {
    return pose.rotation.transpose() * (p - pose.position);
  }
  return pose.position + pose.rotation * p;
}

inline Vec3 apply_K(const Mat3& K, const Vec3& q) {
  return Vec3(K(0, 0) * q.x() + K(0, 1) * q.y() + K(0, 2) * q.z(),
              K(1, 1) * q.y() + K(1, 2) * q.z(),
              q.z());
}

}  // namespace

Vec3 project_endpoint(const Vec3& p, const Pose& pose, ProjectionMode mode, const Mat3& K) {
  const Vec3 q = camera_point(p, pose, mode);
  if (!(q.z() > kMinDepth)) {
    throw GeometryError(GeometryErrorCode::NonPositiveDepth, "endpoint has non-positive depth");
  }
  return apply_K(K, q);
}

std::optional<ProjectedLine> try_project_segment(const Segment3D& seg, const Pose& pose,
                                                 ProjectionMode mode, const Mat3& K) {
  const Vec3 q1 = camera_point(seg.p1, pose, mode);
  const Vec3 q2 = camera_point(seg.p2, pose, mode);
  if (!(q1.z() > kMinDepth) || !(q2.z() > kMinDepth)) return std::nullopt;
  ProjectedLine out;
  out.u1 = apply_K(K, q1);
  out.u2 = apply_K(K, q2);
  out.line = out.u1.cross(out.u2);
  const double n2 = out.line.x() * out.line.x() + out.line.y() * out.line.y();
  if (!(n2 > kDegenerateLineEps)) return std::nullopt;
  out.px1 = out.u1.head<2>() / out.u1.z();
  out.px2 = out.u2.head<2>() / out.u2.z();
  out.clip1 = out.px1;
  out.clip2 = out.px2;
  out.seg_id = seg.id;
  return out;
}

ProjectedLine project_segment(const Segment3D& seg, const Pose& pose, ProjectionMode mode,
                              const CameraCalib& calib) {
  const Mat3 K = calib.K();
  // Throws on depth.
  project_endpoint(seg.p1, pose, mode, K);
  project_endpoint(seg.p2, pose, mode, K);
  auto line = try_project_segment(seg, pose, mode, K);
  if (!line) throw GeometryError(GeometryErrorCode::DegenerateLine, "projected segment is degenerate");
  clip_segment(line->clip1, line->clip2, 0.0, 0.0, calib.width, calib.height);
  return *line;
}

double point_line_distance(const Vec2& e, const Vec3& l) {
  const double n2 = l.x() * l.x() + l.y() * l.y();
  if (!(n2 > kDegenerateLineEps)) {
    throw GeometryError(GeometryErrorCode::DegenerateLine, "degenerate line");
  }
  return (e.x() * l.x() + e.y() * l.y() + l.z()) / std::sqrt(n2);
}

bool clip_segment(Vec2& a, Vec2& b, double xmin, double ymin, double xmax, double ymax) {
  const Vec2 d = b - a;
  double t0 = 0.0;
  double t1 = 1.0;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {a.x() - xmin, xmax - a.x(), a.y() - ymin, ymax - a.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      if (t > t1) return false;
      t0 = std::max(t0, t);
    } else {
      if (t < t0) return false;
      t1 = std::min(t1, t);
    }
  }
  const Vec2 a0 = a;
  a = a0 + t0 * d;
  b = a0 + t1 * d;
  return true;
}

std::vector<ProjectedLine> visible_segments(std::span<const Segment3D> map, const Pose& pose,
                                            ProjectionMode mode, const CameraCalib& calib) {
  std::vector<ProjectedLine> out;
  out.reserve(map.size());
  const Mat3 K = calib.K();
  for (const auto& seg : map) {
    auto line = try_project_segment(seg, pose, mode, K);
    if (!line) continue;
    if (!clip_segment(line->clip1, line->clip2, 0.0, 0.0, calib.width, calib.height)) continue;
    out.push_back(*line);
  }
  return out;
}

// ---------------------------------------------------------------------------

Eigen::Matrix<double, 3, 6> endpoint_jacobian(const Vec3& p, const Pose& pose, ProjectionMode mode,
                                              const Mat3& K) {
  Eigen::Matrix<double, 3, 6> J;
  if (mode == ProjectionMode::MovingCamera) {
    const Mat3 KRt = K * pose.rotation.transpose();
    J.leftCols<3>() = -KRt;
    J.rightCols<3>() = K * hat(pose.rotation.transpose() * (p - pose.position));
  } else {
    J.leftCols<3>() = K;
    J.rightCols<3>() = -K * pose.rotation * hat(p);
  }
  return J;
}

LineJacobian line_jacobian(const Segment3D& seg, const Pose& pose, ProjectionMode mode,
                           const Mat3& K) {
  const Vec3 u1 = apply_K(K, camera_point(seg.p1, pose, mode));
  const Vec3 u2 = apply_K(K, camera_point(seg.p2, pose, mode));
  return -hat(u2) * endpoint_jacobian(seg.p1, pose, mode, K) +
         hat(u1) * endpoint_jacobian(seg.p2, pose, mode, K);
}

Eigen::RowVector3d distance_line_gradient(const Vec2& e, const Vec3& l, bool full_normalizer) {
  const double n2 = l.x() * l.x() + l.y() * l.y();
  const double inv_n = 1.0 / std::sqrt(n2);
  Eigen::RowVector3d g(e.x() * inv_n, e.y() * inv_n, inv_n);
  if (full_normalizer) {
    const double z = (e.x() * l.x() + e.y() * l.y() + l.z()) * inv_n;
    const double s = z / n2;
    g.x() -= s * l.x();
    g.y() -= s * l.y();
  }
  return g;
}

Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor, 1, kMaxDim> SparseRow::dense() const {
  Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor, 1, kMaxDim> row =
      Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor, 1, kMaxDim>::Zero(dim);
  row.head<6>() = pose_part;
  return row;
}

SparseRow innovation_jacobian(const Event& e, const Segment3D& seg, const Pose& pose,
                              ProjectionMode mode, const CameraCalib& calib, MotionModel model,
                              bool full_normalizer) {
  const Mat3 K = calib.K();
  const ProjectedLine pl = project_segment(seg, pose, mode, calib);
  SparseRow row;
  row.dim = error_dim(model);
  row.pose_part = distance_line_gradient(Vec2(e.u, e.v), pl.line, full_normalizer) *
                  line_jacobian(seg, pose, mode, K);
  return row;
}

}  // namespace evtrack
