#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "evtrack/config.hpp"
#include "evtrack/eval.hpp"
#include "evtrack/filter.hpp"
#include "evtrack/simulator.hpp"

namespace evtrack {

/// Map, motion and sensor of a preset. `native_mode` is the projection
/// model the trajectory is expressed in (camera pose for the hand-shake,
/// object pose for the four-bar).
struct Scene {
  std::vector<Segment3D> map;
  Trajectory trajectory;
  CameraCalib calib;
  ProjectionMode native_mode = ProjectionMode::MovingCamera;
};

Scene make_scene(const SceneConfig& cfg);

/// Process noise suited to a preset: the reference tuning, except for the
/// four-bar whose ~280 m/s^2 and ~4000 rad/s^2 peaks need larger velocity
/// and angular velocity densities.
NoiseParams preset_noise(ScenePreset preset);

/// Pose inverted when the modes differ; velocity blocks are reset.
FilterState convert_mode(const FilterState& x, ProjectionMode from, ProjectionMode to);
/// Records with inverted poses when the modes differ; sigmas are dropped
/// for converted records since they refer to the other frame.
std::vector<TrajectoryRecord> convert_mode(std::span<const TrajectoryRecord> recs,
                                           ProjectionMode from, ProjectionMode to);

struct Simulation {
  Scene scene;
  GeneratedStream stream;
  std::int64_t duration_us = 0;
  InitConfig init;  // true pose and twist at t = 0, native mode
};

/// Generates the configured scene with `seed`.
Simulation simulate(const RunConfig& cfg, std::uint64_t seed);

/// Runs one variant on a stream whose truth/init are in `native` mode.
/// The returned records are in the variant's own frame.
TrackResult track(const RunConfig& cfg, const FilterVariant& variant, std::span<const RawEvent> events,
                  std::int64_t duration_us, std::span<const Segment3D> map, const CameraCalib& calib,
                  const FilterState& init_native, ProjectionMode native);

struct MonteCarloResult {
  FilterVariant variant;
  EvalReport report;
  std::vector<EvalReport> per_run;
  std::size_t diverged = 0;
};

/**
 * `runs` simulations with seeds cfg.seed, cfg.seed + 1, ...; every variant
 * tracks every stream. Truth is evaluated in each variant's frame so the
 * filter sigmas apply. Runs execute on `threads` workers (0: hardware).
 */
std::vector<MonteCarloResult> monte_carlo(const RunConfig& cfg, std::span<const FilterVariant> variants,
                                          int runs, int threads = 0);

struct BenchReport {
  FilterVariant variant;
  std::size_t events = 0;
  std::size_t processed = 0;  // not skipped
  std::size_t windows = 0;
  double events_per_s = 0.0;  // un-instrumented pass
  double mean_event_ns = 0.0; // un-instrumented end-to-end time per event
  double median_ns = 0.0;     // instrumented per-event match+update
  double p99_ns = 0.0;
  PhaseTimes phases;          // instrumented pass
  double instrumented_ns = 0.0;  // end-to-end time of the instrumented pass
  std::vector<std::pair<double, std::size_t>> histogram;  // (bin upper edge ns, count)

  double processed_pct() const {
    return events ? 100.0 * static_cast<double>(processed) / static_cast<double>(events) : 100.0;
  }
};

/**
 * Single-threaded throughput measurement over the first `max_events`
 * events (0: all). Runs a warm-up pass, a timed pass and an instrumented
 * pass; optionally pins the thread to its current CPU.
 */
BenchReport bench(const RunConfig& cfg, const FilterVariant& variant, std::span<const RawEvent> events,
                  std::span<const Segment3D> map, const CameraCalib& calib,
                  const FilterState& init, std::size_t max_events = 0, bool pin = true);

}  // namespace evtrack
