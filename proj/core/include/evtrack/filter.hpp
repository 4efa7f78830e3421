#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "evtrack/camera.hpp"
#include "evtrack/matcher.hpp"
#include "evtrack/motion.hpp"

namespace evtrack {

enum class Parameterization { Lie, Classic };

/// One of the 12 (model x parameterization x projection mode) filters.
struct FilterVariant {
  MotionModel model = MotionModel::CV;
  Parameterization param = Parameterization::Lie;
  ProjectionMode mode = ProjectionMode::MovingCamera;

  /// "cv+lie+cam" style name.
  std::string name() const;
  static std::optional<FilterVariant> parse(std::string_view s);
  static std::vector<FilterVariant> all();

  friend bool operator==(const FilterVariant&, const FilterVariant&) = default;
};

struct WindowConfig {
  double dt_window_us = 100.0;
  double sigma_d = 3.5;  // px, measurement noise
  double n_sigma = 2.0;  // Mahalanobis gate

  void validate() const;
};

/// How the processing clock used by the skip policy advances.
struct SkipClock {
  enum class Kind { Replay, Wall };
  Kind kind = Kind::Replay;
  /// Replay only: fixed per-event / per-window cost in us. Negative means
  /// "use the measured cost".
  double event_cost_us = -1.0;
  double window_cost_us = -1.0;
};

struct FilterOptions {
  /// Differentiate the 1/sqrt(a^2+b^2) normalizer in the innovation Jacobian.
  bool full_normalizer = true;
  /// Correct each event's distance by J * (x - x0) for updates already
  /// applied in the window, instead of reusing the stale t0 distance.
  bool linearized_innovation = true;
  /// Re-project the map after this many applied updates (0: never).
  int reproject_every = 0;
  /// Divergence bound on the position standard deviation (m).
  double divergence_sigma = 1.0;
  /// Record per-event and per-phase wall times.
  bool instrument = false;
};

struct TrackerConfig {
  FilterVariant variant;
  WindowConfig window;
  MatcherConfig matcher;
  NoiseParams noise;
  InitialSigmas init_sigmas;
  FilterOptions options;
  SkipClock clock;
};

struct PhaseTimes {
  double predict_ns = 0.0;
  double project_ns = 0.0;  // projection, Jacobians and grid build
  double match_ns = 0.0;
  double update_ns = 0.0;

  double total_ns() const { return predict_ns + project_ns + match_ns + update_ns; }
  PhaseTimes& operator+=(const PhaseTimes& o);
};

struct WindowStats {
  std::int64_t t0_us = 0;
  std::size_t received = 0;
  std::size_t skipped = 0;
  std::size_t matched = 0;
  std::size_t gated_out = 0;
  std::size_t updated = 0;
  std::size_t visible_lines = 0;
  bool empty = true;  // no events: sensor dropout, prediction only
  PhaseTimes time;

  WindowStats& operator+=(const WindowStats& o);
};

enum class FilterErrorCode { NonPositiveInnovationVariance, Diverged };

class FilterError : public std::runtime_error {
 public:
  FilterError(FilterErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  FilterErrorCode code() const { return code_; }

 private:
  FilterErrorCode code_;
};

enum class UpdateResult { Applied, Rejected };

/**
 * Scalar EKF correction with an individual-compatibility gate.
 *
 * `z` is the residual (observed minus predicted) and `J` its sensitivity,
 * nonzero only in the pose blocks. Rejects when z^2 / Z >= n_sigma^2 with
 * Z = J P J^T + sigma_d^2; otherwise applies x <- x (+) P J^T z / Z and
 * P <- P - P J^T J P / Z (kept exactly symmetric).
 * Throws FilterError(NonPositiveInnovationVariance) when Z <= 0.
 */
template <class State>
UpdateResult update_event(State& x, BlockCovariance& P, double z, const PoseRow& J, double sigma_d,
                          double n_sigma);

/// Diagonal standard deviations of the position and orientation blocks.
std::array<double, 6> pose_sigmas(const BlockCovariance& P);

/// Per-window filter pipeline for one parameterization.
template <class State>
class TrackerEngine {
 public:
  TrackerEngine(const TrackerConfig& cfg, std::span<const Segment3D> map, const CameraCalib& calib,
                const State& init, const BlockCovariance& P0);

  /**
   * Processes one window [t_begin, t_begin + dt): a single prediction to the
   * window centre, one projection and grid build, then per-event matching,
   * gating and scalar updates, all referred to the centre time.
   * `events` must be time-ordered and undistorted.
   */
  WindowStats process_window(std::span<const Event> events, std::int64_t t_begin_us);

  const State& state() const { return x_; }
  const BlockCovariance& covariance() const { return P_; }
  std::span<const ProjectedLine> lines() const { return lines_; }
  const TessellationGrid& grid() const { return grid_; }

  /// Per-event processing times (ns) of the last window when instrumented.
  std::span<const float> event_times() const { return event_ns_; }

  /// Time origin for the wall-clock skip policy.
  void set_wall_origin(std::int64_t data_us, std::chrono::steady_clock::time_point wall);

 private:
  void predict_to(std::int64_t t0_us);
  void project();
  double processing_clock_now() const;

  TrackerConfig cfg_;
  std::span<const Segment3D> map_;
  CameraCalib calib_;
  Mat3 K_;
  State x_;
  BlockCovariance P_;

  State x_lin_;  // linearization point of the current window
  std::vector<ProjectedLine> lines_;
  std::vector<const Segment3D*> line_seg_;
  std::vector<LineJacobian> line_jac_;  // computed on first use in a window
  std::vector<char> jac_ready_;
  Pose pose_lin_;
  TessellationGrid grid_;
  std::vector<float> event_ns_;

  double clock_us_ = -1e300;
  std::int64_t wall_origin_data_us_ = 0;
  std::chrono::steady_clock::time_point wall_origin_{};
};

extern template class TrackerEngine<FilterState>;
extern template class TrackerEngine<ClassicState>;

/// Either parameterization behind one interface; the state is reported in
/// the Lie form.
class Tracker {
 public:
  Tracker(const TrackerConfig& cfg, std::span<const Segment3D> map, const CameraCalib& calib,
          const FilterState& init);

  WindowStats process_window(std::span<const Event> events, std::int64_t t_begin_us);

  FilterState state() const;
  const BlockCovariance& covariance() const;
  std::span<const float> event_times() const;
  void set_wall_origin(std::int64_t data_us, std::chrono::steady_clock::time_point wall);
  const TrackerConfig& config() const { return cfg_; }

 private:
  TrackerConfig cfg_;
  std::variant<TrackerEngine<FilterState>, TrackerEngine<ClassicState>> engine_;
};

/// Raw sensor event as stored on disk.
struct RawEvent {
  std::uint32_t t_us = 0;
  std::uint16_t u = 0;
  std::uint16_t v = 0;
  std::int8_t polarity = 1;

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

/// One pose per window: centre time, pose, and pose standard deviations.
struct TrajectoryRecord {
  std::int64_t t_us = 0;
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  std::optional<std::array<double, 6>> sigma;  // r_xyz, theta_xyz
};

struct TrackResult {
  enum class Status { Ok, Diverged };
  Status status = Status::Ok;
  std::vector<TrajectoryRecord> records;
  WindowStats totals;
  std::size_t windows = 0;
  std::size_t dropped_outside = 0;  // events undistorted outside the sensor
  double wall_seconds = 0.0;
};

/**
 * Runs the tracker over [t_start, t_start + duration) in windows of
 * dt_window_us, emitting exactly floor(duration / dt) records unless the
 * position uncertainty exceeds the divergence bound.
 */
TrackResult run_tracker(std::span<const RawEvent> stream, std::int64_t t_start_us,
                        std::int64_t duration_us, std::span<const Segment3D> map,
                        const CameraCalib& calib, const TrackerConfig& cfg,
                        const FilterState& init);

}  // namespace evtrack
