#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "evtrack/camera.hpp"
#include "evtrack/filter.hpp"
#include "evtrack/lie.hpp"

namespace evtrack {

// ---------------------------------------------------------------------------
// Four-bar linkage

/**
 * Crank-rocker four-bar: crank (O2-A) driven about the origin, coupler
 * (A-B), rocker (O4-B) with O4 = (ground, 0). The tracked point is fixed on
 * the coupler at (along, across) in a frame with x from A to B.
 */
struct FourBarDims {
  double crank = 0.025;    // m
  double coupler = 0.12;   // m
  double rocker = 0.09;    // m
  double ground = 0.12;    // m
  double point_along = 0.02;   // m
  double point_across = 0.01;  // m

  bool is_grashof_crank_rocker() const;
};

struct FourBarPose {
  Vec2 crank_pin;       // A
  Vec2 rocker_pin;      // B
  Vec2 point;           // coupler point
  double coupler_angle = 0.0;  // rad, direction of A->B
  double rocker_angle = 0.0;   // rad, direction of O4->B
};

class NoAssemblyConfiguration : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Position analysis (open branch). Throws NoAssemblyConfiguration when the
/// coupler and rocker cannot close the loop at this crank angle.
FourBarPose fourbar_pose(double crank_angle, const FourBarDims& dims);

/// Norm of crank + coupler - rocker - ground (m).
double loop_closure_residual(double crank_angle, const FourBarPose& p, const FourBarDims& dims);

struct FourBarEnvelope {
  double peak_to_peak = 0.0;  // m, largest in-plane axis range of the point
  double peak_speed = 0.0;    // m/s
  double peak_accel = 0.0;    // m/s^2
  double max_residual = 0.0;  // m
};

/// Dense sweep over one crank revolution at constant crank speed.
FourBarEnvelope fourbar_envelope(const FourBarDims& dims, double rpm, int samples);

// ---------------------------------------------------------------------------
// Trajectories

struct TrajectorySample {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 velocity = Vec3::Zero();              // m/s, same frame as position
  Vec3 angular_velocity = Vec3::Zero();      // rad/s, body frame (right)
  Vec3 acceleration = Vec3::Zero();          // m/s^2
  Vec3 angular_acceleration = Vec3::Zero();  // rad/s^2, body frame
};

struct StaticTrajectory {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
};

/**
 * Hand-shake: per-axis sinusoids whose common frequency sweeps linearly
 * from f_start to f_end over `sweep_s`, with a smoothstep amplitude ramp
 * over the first `ramp_s` seconds so the motion starts at rest.
 *   position = center + A_i e(t) sin(k_i phi(t) + p_i)
 *   rotation = base * Exp(theta(t)), theta_i = B_i e(t) sin(k'_i phi(t) + q_i)
 */
struct HandshakeTrajectory {
  Vec3 center = Vec3::Zero();
  Mat3 base_rotation = Mat3::Identity();
  Vec3 pos_amplitude = Vec3::Zero();
  Vec3 rot_amplitude = Vec3::Zero();
  Vec3 pos_freq_scale = Vec3::Ones();
  Vec3 rot_freq_scale = Vec3::Ones();
  Vec3 pos_phase = Vec3::Zero();
  Vec3 rot_phase = Vec3::Zero();
  double f_start = 1.0;  // Hz
  double f_end = 6.0;    // Hz
  double sweep_s = 10.0;
  double ramp_s = 0.0;
};

/**
 * Object carried by the coupler point of a four-bar, seen by a static
 * camera. The mechanism plane is mapped into the camera frame by
 * `plane_rotation`, centred at `standoff`. Crank speed ramps smoothly from
 * zero to `rpm` over `ramp_s`, then stays constant.
 */
struct FourBarTrajectory {
  FourBarDims dims;
  double rpm = 950.0;
  double ramp_s = 2.0;
  Vec3 standoff = Vec3(0.0, 0.0, 0.20);
  Mat3 plane_rotation = Mat3::Identity();
  Vec2 point_center = Vec2::Zero();  // subtracted from the coupler point
  double angle_center = 0.0;         // subtracted from the coupler angle
};

/// Piecewise-linear position and geodesic rotation between waypoints.
struct WaypointTrajectory {
  std::vector<double> times_s;
  std::vector<Vec3> positions;
  std::vector<Mat3> rotations;
};

using Trajectory =
    std::variant<StaticTrajectory, HandshakeTrajectory, FourBarTrajectory, WaypointTrajectory>;

/// Pose and derivatives at t (seconds). Analytic for static and handshake
/// (angular acceleration by central differences), chain rule over crank
/// angle derivatives for the four-bar, central differences for waypoints.
TrajectorySample sample_trajectory(const Trajectory& traj, double t_s);

/// Crank angle of a four-bar trajectory at t, and its first two derivatives.
struct CrankMotion {
  double angle = 0.0;
  double rate = 0.0;
  double accel = 0.0;
};
CrankMotion crank_motion(const FourBarTrajectory& fb, double t_s);
TrajectorySample sample_fourbar(const FourBarTrajectory& fb, double t_s);

/// Fills point_center / angle_center with the mid-range values over a revolution.
void center_fourbar(FourBarTrajectory& fb);

/// Initial filter state at t: pose plus the twist/acceleration the model carries.
FilterState state_from_trajectory(const Trajectory& traj, double t_s, MotionModel model);

// ---------------------------------------------------------------------------
// Event generation

struct EventGenConfig {
  double rate = 3e5;             // events/s at peak image-plane motion
  double sigma_px = 0.7;         // transverse noise
  double outlier_fraction = 0.05;
  bool speed_modulation = true;  // density follows image-plane line speed
  double min_rate_fraction = 0.1;
  double slice_us = 10.0;        // generation granularity
  std::uint64_t seed = 1;
  int threads = 0;               // 0: hardware concurrency
  /// Also return each inlier's undistorted position before distortion and
  /// rounding (outliers: their raw pixel).
  bool keep_subpixel = false;

  void validate() const;
};

struct TruthRecord {
  std::int64_t t_us = 0;
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
};

struct GeneratedStream {
  std::vector<RawEvent> events;
  std::vector<TruthRecord> truth;
  std::vector<Event> subpixel;  // parallel to events, if requested
  std::size_t inliers = 0;
  std::size_t outliers = 0;
};

/**
 * Synthetic events for `duration_us`. Per time slice, the count is Poisson
 * with mean rate * slice; each event is an outlier (uniform over the
 * sensor) with the configured probability, otherwise a uniform point on a
 * visible projected segment at the event's own timestamp pose, displaced
 * along the line normal by N(0, sigma^2), distorted and rounded to the pixel
 * grid. Truth is sampled every `truth_period_us` at window centres
 * (offset truth_period_us / 2).
 */
GeneratedStream generate_events(std::span<const Segment3D> map, const Trajectory& traj,
                                const CameraCalib& calib, ProjectionMode mode,
                                const EventGenConfig& gen, std::int64_t duration_us,
                                std::int64_t truth_period_us = 100);

// ---------------------------------------------------------------------------
// Scenes

/// Wire-frame target for the hand-shake scene (world frame, metres).
std::vector<Segment3D> handshake_map();
/// Target carried by the four-bar (object frame, metres).
std::vector<Segment3D> fourbar_map();

/// Camera hand-shake in front of handshake_map(), sweeping 1 -> 6 Hz.
HandshakeTrajectory handshake_preset(double duration_s = 10.0);
/// Reconstructed crank-rocker reaching ~4.7 cm peak-to-peak.
FourBarDims default_fourbar_dims();
FourBarTrajectory fourbar_preset(double rpm);

}  // namespace evtrack
