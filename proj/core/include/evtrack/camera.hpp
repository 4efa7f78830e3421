#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "evtrack/lie.hpp"
#include "evtrack/motion.hpp"

namespace evtrack {

using Vec2 = Eigen::Vector2d;

/// Pinhole intrinsics with a two-coefficient radial distortion model.
struct CameraCalib {
  double fx = 200.0;
  double fy = 200.0;
  double cx = 120.0;
  double cy = 90.0;
  double k1 = 0.0;
  double k2 = 0.0;
  int width = 240;
  int height = 180;

  Mat3 K() const;
  /// Throws std::invalid_argument if the intrinsics are unusable or the
  /// distortion is not monotonic over the sensor.
  void validate() const;
};

/// Default sensor model for a 240x180 event camera.
CameraCalib default_calib();

enum class ProjectionMode { MovingCamera, MovingObject };

/// Pose consumed by the projection equations.
struct Pose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
};

template <class Orientation>
Pose pose_of(const BasicState<Orientation>& x) {
  return Pose{x.position, rotation_matrix(x.rotation)};
}

/// Inverse rigid transform; MovingCamera at T equals MovingObject at inverse(T).
Pose inverse(const Pose& T);

struct Segment3D {
  Vec3 p1;
  Vec3 p2;
  int id = 0;
};

/**
 * @brief A map segment projected on the image plane.
 *
 * u1, u2 are raw homogeneous projections (not normalized); line is their
 * cross product. px1, px2 are the dehomogenized endpoints and clip1, clip2
 * the part of the segment inside the image rectangle.
 */
struct ProjectedLine {
  Vec3 u1;
  Vec3 u2;
  Vec3 line;
  Vec2 px1;
  Vec2 px2;
  Vec2 clip1;
  Vec2 clip2;
  int seg_id = 0;
};

/// An undistorted event.
struct Event {
  std::int64_t t_us = 0;
  double u = 0.0;
  double v = 0.0;
  std::int8_t polarity = 1;
};

enum class GeometryErrorCode { NonPositiveDepth, DegenerateLine };

class GeometryError : public std::runtime_error {
 public:
  GeometryError(GeometryErrorCode code, const char* what) : std::runtime_error(what), code_(code) {}
  GeometryErrorCode code() const { return code_; }

 private:
  GeometryErrorCode code_;
};

inline constexpr double kMinDepth = 1e-6;
inline constexpr double kDegenerateLineEps = 1e-12;

// ---------------------------------------------------------------------------
// Distortion

/// Forward radial model applied to an undistorted pixel.
Vec2 distort_pixel(const Vec2& undistorted, const CameraCalib& calib);

/// Inverse of distort_pixel by Newton iteration on the radius
/// (tolerance 1e-8 px, at most 10 iterations).
Vec2 undistort_event(const Vec2& raw, const CameraCalib& calib);

/// Per-pixel undistortion table for integer raw coordinates.
class UndistortLut {
 public:
  explicit UndistortLut(const CameraCalib& calib);

  /// Undistorted position, or nullopt if it leaves the sensor rectangle.
  std::optional<Vec2> lookup(int u, int v) const {
    if (u < 0 || v < 0 || u >= width_ || v >= height_) return std::nullopt;
    const Entry& e = table_[static_cast<std::size_t>(v) * width_ + u];
    if (!e.inside) return std::nullopt;
    return Vec2(e.u, e.v);
  }

 private:
  struct Entry {
    double u;
    double v;
    bool inside;
  };
  int width_;
  int height_;
  std::vector<Entry> table_;
};

// ---------------------------------------------------------------------------
// Projection

/// Homogeneous projection of a 3D point. Moving camera: K R^T (p - r);
/// moving object: K (r + R p). Throws GeometryError(NonPositiveDepth).
Vec3 project_endpoint(const Vec3& p, const Pose& pose, ProjectionMode mode, const Mat3& K);

/// Throws GeometryError if either endpoint is behind the camera.
ProjectedLine project_segment(const Segment3D& seg, const Pose& pose, ProjectionMode mode,
                              const CameraCalib& calib);

/// Non-throwing variant; nullopt when an endpoint has non-positive depth
/// or the projected line is degenerate. Does not clip.
std::optional<ProjectedLine> try_project_segment(const Segment3D& seg, const Pose& pose,
                                                 ProjectionMode mode, const Mat3& K);

/// Signed point-to-line distance in pixels, e^T l / sqrt(a^2 + b^2).
/// Throws GeometryError(DegenerateLine) when a^2 + b^2 <= 1e-12.
double point_line_distance(const Vec2& e, const Vec3& line);
inline double point_line_distance(const Event& e, const ProjectedLine& l) {
  return point_line_distance(Vec2(e.u, e.v), l.line);
}

/// Clips a pixel segment to [xmin,xmax]x[ymin,ymax] (Liang-Barsky).
/// Returns false if nothing remains.
bool clip_segment(Vec2& a, Vec2& b, double xmin, double ymin, double xmax, double ymax);

/// Segments with positive depth at both ends whose projection crosses the
/// image rectangle. Occlusion is not modelled.
std::vector<ProjectedLine> visible_segments(std::span<const Segment3D> map, const Pose& pose,
                                            ProjectionMode mode, const CameraCalib& calib);

// ---------------------------------------------------------------------------
// Measurement Jacobians

using PoseRow = Eigen::Matrix<double, 1, 6>;
using LineJacobian = Eigen::Matrix<double, 3, 6>;  // d line / d (r, theta)

/// Jacobian of a projected endpoint w.r.t. (r, theta), theta a right
/// perturbation of the rotation.
Eigen::Matrix<double, 3, 6> endpoint_jacobian(const Vec3& p, const Pose& pose, ProjectionMode mode,
                                              const Mat3& K);

/// d line / d (r, theta) = -[u2]x J_u1 + [u1]x J_u2.
LineJacobian line_jacobian(const Segment3D& seg, const Pose& pose, ProjectionMode mode,
                           const Mat3& K);

/// Gradient of the signed distance w.r.t. the line coefficients. With
/// full_normalizer the derivative of 1/sqrt(a^2+b^2) is included;
/// otherwise the normalizer is treated as constant.
Eigen::RowVector3d distance_line_gradient(const Vec2& e, const Vec3& line, bool full_normalizer);

/// Innovation Jacobian row, nonzero only in the position and orientation blocks.
struct SparseRow {
  PoseRow pose_part = PoseRow::Zero();
  int dim = 6;

  Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor, 1, kMaxDim> dense() const;
};

SparseRow innovation_jacobian(const Event& e, const Segment3D& seg, const Pose& pose,
                              ProjectionMode mode, const CameraCalib& calib, MotionModel model,
                              bool full_normalizer = true);

}  // namespace evtrack
