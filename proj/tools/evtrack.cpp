// evtrack: simulate | track | evaluate | bench

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "evtrack/config.hpp"
#include "evtrack/eval.hpp"
#include "evtrack/harness.hpp"
#include "evtrack/io.hpp"

namespace fs = std::filesystem;
using namespace evtrack;

namespace {

enum Exit { kOk = 0, kConfig = 2, kDiverged = 3, kIo = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string variant;
  bool sweep = false;
};

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.variant.empty()) {
    auto v = FilterVariant::parse(c.variant);
    if (!v) throw ConfigError("unknown variant '" + c.variant + "' (expected e.g. cv+lie+cam)");
    cfg.tracker.variant = *v;
  }
  return cfg;
}

std::vector<FilterVariant> variants_of(const Common& c, const RunConfig& cfg) {
  if (c.sweep) return FilterVariant::all();
  return {cfg.tracker.variant};
}

fs::path variant_path(const fs::path& base, const FilterVariant& v) {
  std::string name = v.name();
  std::replace(name.begin(), name.end(), '+', '_');
  fs::path p = base;
  p.replace_filename(base.stem().string() + "." + name + base.extension().string());
  return p;
}

double peak_speed(const std::vector<TruthRecord>& truth) {
  double best = 0.0;
  for (std::size_t i = 1; i < truth.size(); ++i) {
    const double dt = 1e-6 * static_cast<double>(truth[i].t_us - truth[i - 1].t_us);
    if (dt > 0.0) best = std::max(best, (truth[i].position - truth[i - 1].position).norm() / dt);
  }
  return best;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& c, const std::string& out_dir) {
  RunConfig cfg = load(c);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path d(out_dir);
    cfg.paths.events = d / "events.bin";
    cfg.paths.truth = d / "truth.txt";
    cfg.paths.map = d / "map.txt";
    cfg.paths.calib = d / "calib.txt";
    cfg.paths.output = d / "trajectory.txt";
  }
  const Simulation sim = simulate(cfg, cfg.seed);

  write_events(cfg.paths.events, EventFile{sim.scene.calib.width, sim.scene.calib.height,
                                           sim.duration_us, sim.stream.events});
  write_trajectory(cfg.paths.truth, to_records(sim.stream.truth));
  write_map(cfg.paths.map, sim.scene.map);
  write_calib(cfg.paths.calib, sim.scene.calib);

  RunConfig track_cfg = cfg;
  track_cfg.init = sim.init;
  if (track_cfg.tracker.noise == NoiseParams{}) track_cfg.tracker.noise = preset_noise(cfg.scene.preset);
  if (cfg.scene.preset == ScenePreset::FourBar && c.variant.empty() &&
      track_cfg.tracker.variant.mode == ProjectionMode::MovingCamera) {
    track_cfg.tracker.variant.mode = ProjectionMode::MovingObject;
  }
  const fs::path cfg_dir = cfg.paths.events.parent_path();
  auto rel = [&](const fs::path& p) { return p.parent_path() == cfg_dir ? p.filename() : p; };
  track_cfg.paths.events = rel(cfg.paths.events);
  track_cfg.paths.truth = rel(cfg.paths.truth);
  track_cfg.paths.map = rel(cfg.paths.map);
  track_cfg.paths.calib = rel(cfg.paths.calib);
  track_cfg.paths.output = rel(cfg.paths.output);
  const fs::path track_path = cfg_dir / "track.cfg";
  std::ofstream os(track_path);
  if (!os) throw IoError("cannot write " + track_path.string());
  os << format_config(track_cfg);

  std::printf("events %zu (inliers %zu, outliers %zu)\n", sim.stream.events.size(),
              sim.stream.inliers, sim.stream.outliers);
  std::printf("duration_us %lld\n", static_cast<long long>(sim.duration_us));
  std::printf("truth_records %zu\n", sim.stream.truth.size());
  std::printf("peak_speed_mps %.4f\n", peak_speed(sim.stream.truth));
  std::printf("config %s\n", track_path.string().c_str());
  return kOk;
}

int cmd_track(const Common& c) {
  const RunConfig cfg = load(c);
  const EventFile ev = read_events(cfg.paths.events);
  const auto map = read_map(cfg.paths.map);
  const CameraCalib calib = read_calib(cfg.paths.calib);
  const ProjectionMode native = make_scene(cfg.scene).native_mode;
  const FilterState init = cfg.initial_state();
  const std::int64_t duration =
      ev.duration_us > 0 ? ev.duration_us - init.stamp_us : std::llround(cfg.scene.duration_s * 1e6);

  int rc = kOk;
  for (const FilterVariant& v : variants_of(c, cfg)) {
    const TrackResult res = track(cfg, v, ev.events, duration, map, calib, init, native);
    const fs::path out = c.sweep ? variant_path(cfg.paths.output, v) : cfg.paths.output;
    write_trajectory(out, convert_mode(res.records, v.mode, native));
    const WindowStats& t = res.totals;
    const double pct = t.received ? 100.0 * static_cast<double>(t.received - t.skipped) / static_cast<double>(t.received) : 100.0;
    const double tproc = t.received ? 1e6 * res.wall_seconds / static_cast<double>(t.received) : 0.0;
    std::printf("%-16s windows %zu events %zu matched %zu updated %zu gated %zu skipped %zu "
                "n_events_pct %.2f t_proc_us %.4f status %s -> %s\n",
                v.name().c_str(), res.windows, t.received, t.matched, t.updated, t.gated_out,
                t.skipped, pct, tproc,
                res.status == TrackResult::Status::Ok ? "ok" : "diverged", out.string().c_str());
    if (res.status == TrackResult::Status::Diverged) rc = kDiverged;
  }
  return rc;
}

int cmd_evaluate(const Common& c, std::vector<std::string> truths, std::vector<std::string> estimates,
                 double tolerance_us) {
  if (!c.config.empty()) {
    const RunConfig cfg = load(c);
    if (truths.empty()) truths.push_back(cfg.paths.truth.string());
    if (estimates.empty()) estimates.push_back(cfg.paths.output.string());
    if (tolerance_us <= 0.0) tolerance_us = 0.5 * cfg.tracker.window.dt_window_us;
  }
  if (tolerance_us <= 0.0) tolerance_us = 50.0;
  if (truths.empty() || estimates.empty()) throw ConfigError("evaluate needs --truth and --estimate");
  if (truths.size() != 1 && truths.size() != estimates.size()) {
    throw ConfigError("give one --truth, or one per --estimate");
  }
  std::vector<std::vector<AlignedError>> runs;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto est = read_trajectory(estimates[i]);
    const auto tru = read_trajectory(truths[truths.size() == 1 ? 0 : i]);
    runs.push_back(align(est, tru, tolerance_us));
  }
  std::fputs(format_report(evaluate_runs(runs)).c_str(), stdout);
  return kOk;
}

int cmd_bench(const Common& c, std::size_t max_events, const std::string& histogram, bool no_pin) {
  const RunConfig cfg = load(c);
  const EventFile ev = read_events(cfg.paths.events);
  const auto map = read_map(cfg.paths.map);
  const CameraCalib calib = read_calib(cfg.paths.calib);
  const ProjectionMode native = make_scene(cfg.scene).native_mode;
  std::ofstream hist;
  if (!histogram.empty()) {
    hist.open(histogram);
    if (!hist) throw IoError("cannot write " + histogram);
    hist << "variant,bin_upper_ns,count\n";
  }
  for (const FilterVariant& v : variants_of(c, cfg)) {
    const FilterState init = convert_mode(with_model(cfg.initial_state(), v.model), native, v.mode);
    const BenchReport r = bench(cfg, v, ev.events, map, calib, init, max_events, !no_pin);
    const double phase_sum = r.phases.total_ns();
    std::printf("%-16s events %zu windows %zu events_per_s %.0f mean_ns %.1f median_ns %.1f "
                "p99_ns %.1f n_events_pct %.2f\n",
                v.name().c_str(), r.events, r.windows, r.events_per_s, r.mean_event_ns,
                r.median_ns, r.p99_ns, r.processed_pct());
    std::printf("%-16s phases_ns predict %.3g project_grid %.3g match %.3g update %.3g "
                "sum %.3g end_to_end %.3g\n",
                "", r.phases.predict_ns, r.phases.project_ns, r.phases.match_ns, r.phases.update_ns,
                phase_sum, r.instrumented_ns);
    for (const auto& [edge, n] : r.histogram) {
      if (hist) hist << v.name() << ',' << edge << ',' << n << '\n';
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera pose tracking against a line-segment map"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run configuration file");
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--variant", common.variant, "Filter variant, e.g. cv+lie+cam");
    sub->add_flag("--sweep", common.sweep, "Run all 12 variants");
  };

  auto* sim = app.add_subcommand("simulate", "Generate events, truth, map and calibration");
  add_common(sim);
  std::string out_dir;
  sim->add_option("--out", out_dir, "Output directory (overrides [paths])");

  auto* trk = app.add_subcommand("track", "Track a recorded event stream");
  add_common(trk);

  auto* evl = app.add_subcommand("evaluate", "Compare trajectories with ground truth");
  add_common(evl);
  std::vector<std::string> truths, estimates;
  double tolerance = 0.0;
  evl->add_option("--truth", truths, "Ground-truth file (repeatable)");
  evl->add_option("--estimate", estimates, "Estimated trajectory (repeatable, Monte Carlo)");
  evl->add_option("--tolerance-us", tolerance, "Alignment tolerance (default: half a window)");

  auto* bch = app.add_subcommand("bench", "Single-threaded throughput measurement");
  add_common(bch);
  std::size_t max_events = 0;
  std::string histogram;
  bool no_pin = false;
  bch->add_option("--max-events", max_events, "Use only the first N events");
  bch->add_option("--histogram", histogram, "Write per-event timing histogram (CSV)");
  bch->add_flag("--no-pin", no_pin, "Do not pin the thread to a CPU");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) return cmd_simulate(common, out_dir);
    if (*trk) return cmd_track(common);
    if (*evl) return cmd_evaluate(common, truths, estimates, tolerance);
    if (*bch) return cmd_bench(common, max_events, histogram, no_pin);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const NoOverlap& e) {
    std::fprintf(stderr, "evaluate: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const FilterError& e) {
    std::fprintf(stderr, "filter error: %s\n", e.what());
    return kDiverged;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kOk;
}
