#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evtrack/filter.hpp"

namespace evtrack {

/// Estimate and truth share no timestamps within the alignment tolerance.
class NoOverlap : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Intrinsic Z-Y-X Euler angles (phi about x, theta about y, psi about z)
/// of R = Rz(psi) Ry(theta) Rx(phi).
Vec3 euler_zyx(const Mat3& R);

/// Per-window error of an estimate against the aligned truth sample.
struct AlignedError {
  std::int64_t t_us = 0;
  Vec3 position = Vec3::Zero();  // estimate - truth (m)
  Vec3 euler = Vec3::Zero();     // euler_zyx(R_truth^T R_est) (rad)
  Vec3 theta = Vec3::Zero();     // Log(R_est^T R_truth), the filter's error convention
  std::optional<std::array<double, 6>> sigma;
};

/// Pairs each estimate with the nearest truth sample within `tolerance_us`
/// (inclusive). Unmatched estimates are dropped. Throws NoOverlap if none pair.
std::vector<AlignedError> align(std::span<const TrajectoryRecord> estimate,
                                std::span<const TrajectoryRecord> truth, double tolerance_us);

struct EvalReport {
  std::array<double, 3> rmse_pos{};    // x, y, z (m)
  std::array<double, 3> rmse_rot{};    // phi, theta, psi (rad)
  std::array<double, 6> coverage{};    // % of windows with RMS error under 2 sigma
  bool has_coverage = false;
  std::size_t windows = 0;             // aligned windows (per run)
  std::size_t runs = 0;
  std::optional<double> t_proc_us;     // mean processing time per event
  std::optional<double> processed_pct; // events not skipped

  double rmse_pos_norm() const;
};

/**
 * Aggregates one or more runs. RMSE pools the squared errors of every
 * aligned window of every run. Coverage compares, per window and axis, the
 * RMS error across runs with twice the RMS filter sigma across runs (windows
 * matched by timestamp). The result does not depend on the order of `runs`.
 */
EvalReport evaluate_runs(std::span<const std::vector<AlignedError>> runs);

EvalReport evaluate(std::span<const TrajectoryRecord> estimate,
                    std::span<const TrajectoryRecord> truth, double tolerance_us);

/// Multi-line human readable report.
std::string format_report(const EvalReport& r);

}  // namespace evtrack
