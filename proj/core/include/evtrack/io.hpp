#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "evtrack/camera.hpp"
#include "evtrack/filter.hpp"
#include "evtrack/simulator.hpp"

namespace evtrack {

/// Unreadable/unwritable file or malformed content.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Event file: an ASCII header
 *
 *     evtrack-events 1
 *     width 240
 *     height 180
 *     count N
 *     duration_us T
 *     end_header
 *
 * followed by N packed little-endian 9-byte records
 * (u32 t_us, u16 u, u16 v, i8 polarity).
 */
struct EventFile {
  int width = 240;
  int height = 180;
  std::int64_t duration_us = 0;
  std::vector<RawEvent> events;
};

void write_events(const std::filesystem::path& path, const EventFile& f);
EventFile read_events(const std::filesystem::path& path);

/// Map file: one segment per line, "id x1 y1 z1 x2 y2 z2" (metres); '#' comments.
void write_map(const std::filesystem::path& path, const std::vector<Segment3D>& map);
std::vector<Segment3D> read_map(const std::filesystem::path& path);

/// Calibration file: "key value" lines for fx fy cx cy k1 k2 w h.
void write_calib(const std::filesystem::path& path, const CameraCalib& c);
CameraCalib read_calib(const std::filesystem::path& path);

/// Truth / trajectory file: "t_us rx ry rz qw qx qy qz" with optional six
/// trailing standard deviations (position xyz, orientation xyz).
void write_trajectory(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& recs);
std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path);

std::vector<TrajectoryRecord> to_records(const std::vector<TruthRecord>& truth);

}  // namespace evtrack
