#include "evtrack/harness.hpp"

#include "evtrack/io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif

namespace evtrack {

Scene make_scene(const SceneConfig& cfg) {
  Scene s;
  s.calib = default_calib();
  switch (cfg.preset) {
    case ScenePreset::Handshake: {
      HandshakeTrajectory h = handshake_preset(cfg.duration_s > 0.0 ? cfg.duration_s : 10.0);
      h.ramp_s = cfg.handshake_ramp_s;
      s.map = handshake_map();
      s.trajectory = h;
      s.native_mode = ProjectionMode::MovingCamera;
      break;
    }
    case ScenePreset::FourBar: {
      FourBarTrajectory fb = fourbar_preset(cfg.rpm);
      fb.ramp_s = cfg.ramp_s;
      fb.standoff = Vec3(0.0, 0.0, cfg.standoff);
      s.map = fourbar_map();
      s.trajectory = fb;
      s.native_mode = ProjectionMode::MovingObject;
      break;
    }
    case ScenePreset::Static: {
      s.map = handshake_map();
      s.trajectory = StaticTrajectory{Vec3(0.0, 0.0, -0.45), Mat3::Identity()};
      s.native_mode = ProjectionMode::MovingCamera;
      break;
    }
  }
  return s;
}

NoiseParams preset_noise(ScenePreset preset) {
  NoiseParams n;
  if (preset == ScenePreset::FourBar) {
    n.sigma_vel = 10.0;
    n.sigma_angvel = 40.0;
  }
  return n;
}

FilterState convert_mode(const FilterState& x, ProjectionMode from, ProjectionMode to) {
  if (from == to) return x;
  const Pose inv = inverse(pose_of(x));
  FilterState y = make_state(x.model(), inv.position, Rotation::unchecked(inv.rotation), x.stamp_us);
  return y;
}

std::vector<TrajectoryRecord> convert_mode(std::span<const TrajectoryRecord> recs,
                                           ProjectionMode from, ProjectionMode to) {
  std::vector<TrajectoryRecord> out(recs.begin(), recs.end());
  if (from == to) return out;
  for (TrajectoryRecord& r : out) {
    const Eigen::Quaterniond qi = r.rotation.conjugate();
    r.position = -(qi * r.position);
    r.rotation = qi.w() < 0.0 ? Eigen::Quaterniond(-qi.coeffs()) : qi;
    r.sigma.reset();
  }
  return out;
}

Simulation simulate(const RunConfig& cfg, std::uint64_t seed) {
  Simulation sim;
  sim.scene = make_scene(cfg.scene);
  sim.duration_us = std::llround(cfg.scene.duration_s * 1e6);
  EventGenConfig gen = cfg.events;
  gen.seed = seed;
  sim.stream = generate_events(sim.scene.map, sim.scene.trajectory, sim.scene.calib,
                               sim.scene.native_mode, gen, sim.duration_us);
  const TrajectorySample s0 = sample_trajectory(sim.scene.trajectory, 0.0);
  Rotation R0 = Rotation::unchecked(s0.rotation);
  R0.renormalize();
  sim.init.position = s0.position;
  sim.init.rotation = log_so3(R0);
  sim.init.velocity = s0.velocity;
  sim.init.angular_velocity = s0.angular_velocity;
  sim.init.t_us = 0;
  return sim;
}

TrackResult track(const RunConfig& cfg, const FilterVariant& variant, std::span<const RawEvent> events,
                  std::int64_t duration_us, std::span<const Segment3D> map, const CameraCalib& calib,
                  const FilterState& init_native, ProjectionMode native) {
  TrackerConfig tc = cfg.tracker;
  tc.variant = variant;
  const FilterState init = convert_mode(with_model(init_native, variant.model), native, variant.mode);
  return run_tracker(events, init.stamp_us, duration_us, map, calib, tc, init);
}

std::vector<MonteCarloResult> monte_carlo(const RunConfig& cfg, std::span<const FilterVariant> variants,
                                          int runs, int threads) {
  const std::size_t nv = variants.size();
  const auto nr = static_cast<std::size_t>(std::max(runs, 0));
  std::vector<std::vector<std::vector<AlignedError>>> aligned(nv, std::vector<std::vector<AlignedError>>(nr));
  std::vector<std::vector<bool>> diverged(nv, std::vector<bool>(nr, false));

  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min<int>(threads, std::max<int>(runs, 1));
  RunConfig sim_cfg = cfg;
  if (threads > 1) sim_cfg.events.threads = 1;
  const double tol = 0.5 * cfg.tracker.window.dt_window_us;

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= nr) return;
      try {
        const Simulation sim = simulate(sim_cfg, cfg.seed + r);
        const std::vector<TrajectoryRecord> truth = to_records(sim.stream.truth);
        RunConfig rc = cfg;
        rc.init = sim.init;
        const FilterState init = rc.initial_state();
        for (std::size_t v = 0; v < nv; ++v) {
          const TrackResult res = track(cfg, variants[v], sim.stream.events, sim.duration_us,
                                        sim.scene.map, sim.scene.calib,
                                        with_model(init, variants[v].model), sim.scene.native_mode);
          const auto truth_v = convert_mode(truth, sim.scene.native_mode, variants[v].mode);
          diverged[v][r] = res.status == TrackResult::Status::Diverged;
          aligned[v][r] = align(res.records, truth_v, tol);
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);

  std::vector<MonteCarloResult> out(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    out[v].variant = variants[v];
    out[v].report = evaluate_runs(aligned[v]);
    for (std::size_t r = 0; r < nr; ++r) {
      out[v].per_run.push_back(evaluate_runs(std::span(&aligned[v][r], 1)));
      out[v].diverged += diverged[v][r] ? 1 : 0;
    }
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

void pin_current_thread() {
#ifdef __linux__
  const int cpu = sched_getcpu();
  if (cpu < 0) return;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  pthread_setaffinity_np(pthread_self(), sizeof(set), &set);
#endif
}

struct Windowed {
  std::vector<Event> events;
  std::vector<std::size_t> offsets;  // window k spans [offsets[k], offsets[k+1])
  std::int64_t t_start = 0;
  std::int64_t dt = 100;
};

Windowed make_windows(std::span<const RawEvent> raw, const CameraCalib& calib, std::int64_t t_start,
                      std::int64_t dt) {
  const UndistortLut lut(calib);
  Windowed w;
  w.t_start = t_start;
  w.dt = dt;
  w.events.reserve(raw.size());
  w.offsets.push_back(0);
  std::int64_t k = 0;
  for (const RawEvent& r : raw) {
    const auto t = static_cast<std::int64_t>(r.t_us);
    if (t < t_start) continue;
    while (t >= t_start + (k + 1) * dt) {
      w.offsets.push_back(w.events.size());
      ++k;
    }
    if (const auto p = lut.lookup(r.u, r.v)) w.events.push_back(Event{t, p->x(), p->y(), r.polarity});
  }
  w.offsets.push_back(w.events.size());
  return w;
}

}  // namespace

BenchReport bench(const RunConfig& cfg, const FilterVariant& variant, std::span<const RawEvent> events,
                  std::span<const Segment3D> map, const CameraCalib& calib,
                  const FilterState& init, std::size_t max_events, bool pin) {
  if (pin) pin_current_thread();
  if (max_events > 0 && events.size() > max_events) events = events.first(max_events);
  TrackerConfig tc = cfg.tracker;
  tc.variant = variant;
  const auto dt = static_cast<std::int64_t>(std::llround(tc.window.dt_window_us));
  const Windowed w = make_windows(events, calib, init.stamp_us, dt);
  const std::size_t n_windows = w.offsets.size() - 1;

  BenchReport rep;
  rep.variant = variant;
  rep.events = w.events.size();
  rep.windows = n_windows;

  auto window_span = [&](std::size_t k) {
    return std::span<const Event>(w.events.data() + w.offsets[k], w.offsets[k + 1] - w.offsets[k]);
  };

  // Warm-up: caches, branch predictors, allocations.
  {
    Tracker t(tc, map, calib, init);
    const std::size_t n = std::min<std::size_t>(n_windows, 2000);
    for (std::size_t k = 0; k < n; ++k) t.process_window(window_span(k), w.t_start + static_cast<std::int64_t>(k) * dt);
  }

  // Timed pass without instrumentation.
  {
    TrackerConfig plain = tc;
    plain.options.instrument = false;
    Tracker t(plain, map, calib, init);
    if (plain.clock.kind == SkipClock::Kind::Wall) t.set_wall_origin(w.t_start, Clock::now());
    std::size_t skipped = 0;
    const auto a = Clock::now();
    for (std::size_t k = 0; k < n_windows; ++k) {
      skipped += t.process_window(window_span(k), w.t_start + static_cast<std::int64_t>(k) * dt).skipped;
    }
    const double ns = static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - a).count());
    rep.processed = rep.events - skipped;
    rep.events_per_s = ns > 0.0 ? 1e9 * static_cast<double>(rep.events) / ns : 0.0;
    rep.mean_event_ns = rep.events ? ns / static_cast<double>(rep.events) : 0.0;
  }

  // Instrumented pass: phase split and per-event distribution.
  {
    TrackerConfig inst = tc;
    inst.options.instrument = true;
    Tracker t(inst, map, calib, init);
    if (inst.clock.kind == SkipClock::Kind::Wall) t.set_wall_origin(w.t_start, Clock::now());
    std::vector<float> per_event;
    per_event.reserve(rep.events);
    double total = 0.0;
    for (std::size_t k = 0; k < n_windows; ++k) {
      const auto a = Clock::now();
      const WindowStats ws = t.process_window(window_span(k), w.t_start + static_cast<std::int64_t>(k) * dt);
      total += static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - a).count());
      rep.phases += ws.time;
      const auto times = t.event_times();
      per_event.insert(per_event.end(), times.begin(), times.end());
    }
    rep.instrumented_ns = total;
    if (!per_event.empty()) {
      auto pct = [&](double q) {
        const auto i = static_cast<std::size_t>(q * static_cast<double>(per_event.size() - 1));
        std::nth_element(per_event.begin(), per_event.begin() + static_cast<std::ptrdiff_t>(i), per_event.end());
        return static_cast<double>(per_event[i]);
      };
      rep.median_ns = pct(0.5);
      rep.p99_ns = pct(0.99);
      constexpr double kBin = 50.0;
      constexpr std::size_t kBins = 80;
      std::vector<std::size_t> counts(kBins + 1, 0);
      for (float v : per_event) {
        counts[std::min(kBins, static_cast<std::size_t>(static_cast<double>(v) / kBin))]++;
      }
      for (std::size_t b = 0; b <= kBins; ++b) {
        const double edge = b == kBins ? std::numeric_limits<double>::infinity() : kBin * static_cast<double>(b + 1);
        rep.histogram.emplace_back(edge, counts[b]);
      }
    }
  }
  return rep;
}

}  // namespace evtrack
