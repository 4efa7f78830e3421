#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "evtrack/filter.hpp"
#include "evtrack/simulator.hpp"

namespace evtrack {

/// Parse or validation failure; line() is 0 when not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

enum class ScenePreset { Handshake, FourBar, Static };

struct SceneConfig {
  ScenePreset preset = ScenePreset::Handshake;
  double duration_s = 10.0;
  double rpm = 950.0;        // four-bar only
  double ramp_s = 2.0;       // four-bar crank speed ramp
  double standoff = 0.20;    // four-bar, m
  double handshake_ramp_s = 0.5;
};

struct InitConfig {
  Vec3 position = Vec3::Zero();
  RotVec rotation = RotVec::Zero();  // axis-angle
  Vec3 velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
  std::int64_t t_us = 0;
};

struct PathConfig {
  std::filesystem::path events = "events.bin";
  std::filesystem::path map = "map.txt";
  std::filesystem::path calib = "calib.txt";
  std::filesystem::path truth = "truth.txt";
  std::filesystem::path output = "trajectory.txt";
};

/**
 * @brief Everything a run needs. Text form (sections and keys):
 *
 *     [run]     seed
 *     [filter]  variant dt_window_us sigma_d n_sigma full_normalizer
 *               linearized_innovation reproject_every divergence_sigma
 *     [matcher] alpha beta grid_cols grid_rows skip_lag_us dilate clock
 *               event_cost_us window_cost_us
 *     [noise]   sigma_pos sigma_rot sigma_vel sigma_angvel sigma_acc sigma_angacc
 *     [init]    position rotation velocity angular_velocity t_us
 *               sigma_pos sigma_rot sigma_vel sigma_angvel sigma_acc sigma_angacc
 *     [scene]   preset duration_s rpm ramp_s standoff handshake_ramp_s
 *     [events]  rate sigma_px outlier_fraction speed_modulation
 *               min_rate_fraction slice_us threads
 *     [paths]   events map calib truth output
 *
 * Vectors are three space-separated numbers. '#' and ';' start comments.
 */
struct RunConfig {
  TrackerConfig tracker;
  SceneConfig scene;
  EventGenConfig events;
  InitConfig init;
  PathConfig paths;
  std::uint64_t seed = 1;

  void validate() const;
  FilterState initial_state() const;
};

/// Parses config text; relative paths are resolved against `base_dir`.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Text form that parse_config() reads back to an equal configuration.
std::string format_config(const RunConfig& cfg);

}  // namespace evtrack
