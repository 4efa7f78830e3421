#include "evtrack/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "evtrack/rng.hpp"

namespace evtrack {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---------------------------------------------------------------------------
// Hand-shake

struct Scalar3 {
  double f = 0.0;
  double df = 0.0;
  double ddf = 0.0;
};

Scalar3 envelope(const HandshakeTrajectory& h, double t) {
  if (h.ramp_s > 0.0 && t < h.ramp_s) {
    const double tau = std::max(t, 0.0) / h.ramp_s;
    return {tau * tau * (3.0 - 2.0 * tau), 6.0 * tau * (1.0 - tau) / h.ramp_s,
            (6.0 - 12.0 * tau) / (h.ramp_s * h.ramp_s)};
  }
  return {1.0, 0.0, 0.0};
}

// Phase of the linear chirp, continuing at f_end after the sweep.
Scalar3 chirp_phase(const HandshakeTrajectory& h, double t) {
  const double T = h.sweep_s;
  if (T > 0.0 && t <= T) {
    const double k = (h.f_end - h.f_start) / T;
    return {kTwoPi * (h.f_start * t + 0.5 * k * t * t), kTwoPi * (h.f_start + k * t), kTwoPi * k};
  }
  const double T0 = std::max(T, 0.0);
  const double phi0 = kTwoPi * 0.5 * (h.f_start + h.f_end) * T0;
  return {phi0 + kTwoPi * h.f_end * (t - T0), kTwoPi * h.f_end, 0.0};
}

// g = A e(t) sin(k phi(t) + p) and its first two time derivatives.
Scalar3 wave(double A, double k, double p, const Scalar3& e, const Scalar3& phi) {
  const double arg = k * phi.f + p;
  const double S = std::sin(arg);
  const double C = std::cos(arg);
  const double w = k * phi.df;
  const double dw = k * phi.ddf;
  return {A * e.f * S, A * (e.df * S + e.f * w * C),
          A * (e.ddf * S + 2.0 * e.df * w * C + e.f * (dw * C - w * w * S))};
}

struct HandshakeKinematics {
  Vec3 pos, vel, acc;
  Vec3 theta, dtheta;
};

HandshakeKinematics handshake_kinematics(const HandshakeTrajectory& h, double t) {
  const Scalar3 e = envelope(h, t);
  const Scalar3 phi = chirp_phase(h, t);
  HandshakeKinematics k;
  for (int i = 0; i < 3; ++i) {
    const Scalar3 g = wave(h.pos_amplitude[i], h.pos_freq_scale[i], h.pos_phase[i], e, phi);
    k.pos[i] = g.f;
    k.vel[i] = g.df;
    k.acc[i] = g.ddf;
    const Scalar3 r = wave(h.rot_amplitude[i], h.rot_freq_scale[i], h.rot_phase[i], e, phi);
    k.theta[i] = r.f;
    k.dtheta[i] = r.df;
  }
  return k;
}

TrajectorySample sample_handshake(const HandshakeTrajectory& h, double t) {
  const HandshakeKinematics k = handshake_kinematics(h, t);
  TrajectorySample s;
  s.position = h.center + k.pos;
  s.velocity = k.vel;
  s.acceleration = k.acc;
  s.rotation = h.base_rotation * exp_so3(k.theta).matrix();
  // R = B Exp(theta): R^T dR/dt = [Jr(theta) dtheta/dt]x.
  s.angular_velocity = right_jacobian(k.theta) * k.dtheta;
  constexpr double dt = 1e-5;
  const HandshakeKinematics a = handshake_kinematics(h, t - dt);
  const HandshakeKinematics b = handshake_kinematics(h, t + dt);
  s.angular_acceleration =
      (right_jacobian(b.theta) * b.dtheta - right_jacobian(a.theta) * a.dtheta) / (2.0 * dt);
  return s;
}

// ---------------------------------------------------------------------------
// Waypoints

struct PoseOnly {
  Vec3 p;
  Mat3 R;
};

PoseOnly waypoint_pose(const WaypointTrajectory& w, double t) {
  const auto& ts = w.times_s;
  if (ts.empty()) return {Vec3::Zero(), Mat3::Identity()};
  if (ts.size() == 1 || t <= ts.front()) return {w.positions.front(), w.rotations.front()};
  if (t >= ts.back()) return {w.positions.back(), w.rotations.back()};
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - ts.begin()) - 1;
  const double s = (t - ts[i]) / (ts[i + 1] - ts[i]);
  const Vec3 p = (1.0 - s) * w.positions[i] + s * w.positions[i + 1];
  const RotVec d = detail::log_unchecked(w.rotations[i].transpose() * w.rotations[i + 1]);
  return {p, w.rotations[i] * exp_so3(s * d).matrix()};
}

TrajectorySample sample_waypoints(const WaypointTrajectory& w, double t) {
  constexpr double h = 1e-6;
  const PoseOnly c = waypoint_pose(w, t);
  const PoseOnly a = waypoint_pose(w, t - h);
  const PoseOnly b = waypoint_pose(w, t + h);
  TrajectorySample s;
  s.position = c.p;
  s.rotation = c.R;
  s.velocity = (b.p - a.p) / (2.0 * h);
  s.acceleration = (b.p - 2.0 * c.p + a.p) / (h * h);
  s.angular_velocity = (detail::log_unchecked(c.R.transpose() * b.R) -
                        detail::log_unchecked(c.R.transpose() * a.R)) /
                       (2.0 * h);
  return s;
}

// Pose only, without derivatives; used per generated event.
Pose pose_at(const Trajectory& traj, double t) {
  if (const auto* h = std::get_if<HandshakeTrajectory>(&traj)) {
    const Scalar3 e = envelope(*h, t);
    const Scalar3 phi = chirp_phase(*h, t);
    Vec3 p, th;
    for (int i = 0; i < 3; ++i) {
      p[i] = h->pos_amplitude[i] * e.f * std::sin(h->pos_freq_scale[i] * phi.f + h->pos_phase[i]);
      th[i] = h->rot_amplitude[i] * e.f * std::sin(h->rot_freq_scale[i] * phi.f + h->rot_phase[i]);
    }
    return Pose{h->center + p, h->base_rotation * exp_so3(th).matrix()};
  }
  if (const auto* fb = std::get_if<FourBarTrajectory>(&traj)) {
    const FourBarPose fp = fourbar_pose(crank_motion(*fb, t).angle, fb->dims);
    const Vec2 q = fp.point - fb->point_center;
    const double psi = std::remainder(fp.coupler_angle - fb->angle_center, kTwoPi);
    return Pose{fb->standoff + fb->plane_rotation * Vec3(q.x(), q.y(), 0.0),
                fb->plane_rotation * Eigen::AngleAxisd(psi, Vec3::UnitZ()).toRotationMatrix()};
  }
  const TrajectorySample s = sample_trajectory(traj, t);
  return Pose{s.position, s.rotation};
}

}  // namespace

TrajectorySample sample_trajectory(const Trajectory& traj, double t) {
  return std::visit(
      [t](const auto& tr) -> TrajectorySample {
        using T = std::decay_t<decltype(tr)>;
        if constexpr (std::is_same_v<T, StaticTrajectory>) {
          TrajectorySample s;
          s.position = tr.position;
          s.rotation = tr.rotation;
          return s;
        } else if constexpr (std::is_same_v<T, HandshakeTrajectory>) {
          return sample_handshake(tr, t);
        } else if constexpr (std::is_same_v<T, FourBarTrajectory>) {
          return sample_fourbar(tr, t);
        } else {
          return sample_waypoints(tr, t);
        }
      },
      traj);
}

FilterState state_from_trajectory(const Trajectory& traj, double t, MotionModel model) {
  const TrajectorySample s = sample_trajectory(traj, t);
  Rotation R = Rotation::unchecked(s.rotation);
  R.renormalize();
  FilterState x = make_state(model, s.position, R, std::llround(t * 1e6));
  if (x.twist) *x.twist = Twist{s.velocity, s.angular_velocity};
  if (x.accel) *x.accel = AccelBlock{s.acceleration, s.angular_acceleration};
  return x;
}

// ---------------------------------------------------------------------------
// Event generation

void EventGenConfig::validate() const {
  if (!(rate > 0.0)) throw std::invalid_argument("simulator: rate must be positive");
  if (!(sigma_px >= 0.0)) throw std::invalid_argument("simulator: sigma_px must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
    throw std::invalid_argument("simulator: outlier_fraction must be in [0, 1]");
  }
  if (!(min_rate_fraction >= 0.0 && min_rate_fraction <= 1.0)) {
    throw std::invalid_argument("simulator: min_rate_fraction must be in [0, 1]");
  }
  if (!(slice_us >= 1.0)) throw std::invalid_argument("simulator: slice_us must be >= 1");
}

namespace {

struct VisibleLine {
  const Segment3D* seg;
  double weight;
};

struct SliceScene {
  std::vector<VisibleLine> lines;
  double motion = 0.0;  // sum of clipped length x normal speed (px^2/s)
};

SliceScene slice_scene(std::span<const Segment3D> map, const Trajectory& traj,
                       const CameraCalib& calib, ProjectionMode mode, double t_s,
                       bool modulate) {
  constexpr double dt = 1e-4;
  const Mat3 K = calib.K();
  const Pose p0 = pose_at(traj, t_s);
  const Pose p1 = modulate ? pose_at(traj, t_s + dt) : p0;
  SliceScene sc;
  std::vector<double> speed;
  for (const Segment3D& seg : map) {
    auto a = try_project_segment(seg, p0, mode, K);
    if (!a) continue;
    Vec2 c1 = a->px1;
    Vec2 c2 = a->px2;
    if (!clip_segment(c1, c2, 0.0, 0.0, calib.width, calib.height)) continue;
    const double len = (c2 - c1).norm();
    if (len <= 0.0) continue;
    double v = 0.0;
    if (modulate) {
      if (auto b = try_project_segment(seg, p1, mode, K)) {
        const Vec2 n = Vec2(a->line.x(), a->line.y()).normalized();
        v = 0.5 * (std::abs(n.dot(b->px1 - a->px1)) + std::abs(n.dot(b->px2 - a->px2))) / dt;
      }
    }
    sc.lines.push_back({&seg, len});
    speed.push_back(v);
    sc.motion += len * v;
  }
  if (modulate && !sc.lines.empty()) {
    double total_len = 0.0;
    for (const auto& l : sc.lines) total_len += l.weight;
    const double floor_speed = 0.05 * sc.motion / total_len + 1e-6;
    for (std::size_t i = 0; i < sc.lines.size(); ++i) sc.lines[i].weight *= speed[i] + floor_speed;
  }
  double acc = 0.0;
  for (auto& l : sc.lines) {
    acc += l.weight;
    l.weight = acc;  // cumulative
  }
  return sc;
}

struct TimedEvent {
  double t;
  RawEvent ev;
  bool inlier;
  Vec2 sub;
};

}  // namespace

GeneratedStream generate_events(std::span<const Segment3D> map, const Trajectory& traj,
                                const CameraCalib& calib, ProjectionMode mode,
                                const EventGenConfig& gen, std::int64_t duration_us,
                                std::int64_t truth_period_us) {
  gen.validate();
  calib.validate();
  GeneratedStream out;
  if (duration_us <= 0) return out;
  if (truth_period_us <= 0) throw std::invalid_argument("simulator: truth period must be positive");
  if (duration_us > static_cast<std::int64_t>(UINT32_MAX)) {
    throw std::invalid_argument("simulator: duration exceeds the 32-bit timestamp range");
  }

  const double T = static_cast<double>(duration_us);
  const auto n_slices = static_cast<std::int64_t>(std::ceil(T / gen.slice_us));

  double motion_max = 0.0;
  if (gen.speed_modulation) {
    const double step = 1000.0;
    for (double t = 0.0; t < T; t += step) {
      motion_max = std::max(motion_max, slice_scene(map, traj, calib, mode, 1e-6 * t, true).motion);
    }
  }

  const Mat3 K = calib.K();
  auto run_slice = [&](std::int64_t s, std::vector<TimedEvent>& buf) {
    CounterRng rng(gen.seed, static_cast<std::uint64_t>(s));
    const double t_a = static_cast<double>(s) * gen.slice_us;
    const double t_b = std::min(t_a + gen.slice_us, T);
    const std::int64_t i_a = static_cast<std::int64_t>(std::ceil(t_a));
    const std::int64_t i_b = static_cast<std::int64_t>(std::ceil(t_b));
    if (i_b <= i_a) return;
    const SliceScene sc =
        slice_scene(map, traj, calib, mode, 1e-6 * 0.5 * (t_a + t_b), gen.speed_modulation);
    double scale = 1.0;
    if (gen.speed_modulation) {
      const double f = motion_max > 0.0 ? std::min(sc.motion / motion_max, 1.0) : 0.0;
      scale = gen.min_rate_fraction + (1.0 - gen.min_rate_fraction) * f;
    }
    const std::uint64_t n = rng.poisson(gen.rate * scale * (t_b - t_a) * 1e-6);
    const std::size_t first = buf.size();
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto t_us = i_a + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(i_b - i_a)));
      const std::int8_t pol = rng.uniform() < 0.5 ? std::int8_t{1} : std::int8_t{-1};
      if (rng.uniform() < gen.outlier_fraction) {
        RawEvent ev{static_cast<std::uint32_t>(t_us),
                    static_cast<std::uint16_t>(rng.below(static_cast<std::uint64_t>(calib.width))),
                    static_cast<std::uint16_t>(rng.below(static_cast<std::uint64_t>(calib.height))),
                    pol};
        buf.push_back({static_cast<double>(t_us), ev, false, Vec2(ev.u, ev.v)});
        continue;
      }
      if (sc.lines.empty()) continue;
      const Pose pose = pose_at(traj, 1e-6 * static_cast<double>(t_us));
      for (int attempt = 0; attempt < 8; ++attempt) {
        const double pick = rng.uniform() * sc.lines.back().weight;
        const auto it = std::upper_bound(sc.lines.begin(), sc.lines.end(), pick,
                                         [](double x, const VisibleLine& l) { return x < l.weight; });
        const VisibleLine& vl = it == sc.lines.end() ? sc.lines.back() : *it;
        const double along = rng.uniform();
        const double noise = gen.sigma_px * rng.normal();
        auto pl = try_project_segment(*vl.seg, pose, mode, K);
        if (!pl) continue;
        Vec2 c1 = pl->px1;
        Vec2 c2 = pl->px2;
        if (!clip_segment(c1, c2, 0.0, 0.0, calib.width, calib.height)) continue;
        const Vec2 nrm = Vec2(pl->line.x(), pl->line.y()).normalized();
        const Vec2 p = c1 + along * (c2 - c1) + noise * nrm;
        const Vec2 raw = distort_pixel(p, calib);
        const double ru = std::round(raw.x());
        const double rv = std::round(raw.y());
        if (!(ru >= 0.0 && rv >= 0.0 && ru < calib.width && rv < calib.height)) continue;
        RawEvent ev{static_cast<std::uint32_t>(t_us), static_cast<std::uint16_t>(ru),
                    static_cast<std::uint16_t>(rv), pol};
        buf.push_back({static_cast<double>(t_us), ev, true, p});
        break;
      }
    }
    std::stable_sort(buf.begin() + static_cast<std::ptrdiff_t>(first), buf.end(),
                     [](const TimedEvent& a, const TimedEvent& b) { return a.t < b.t; });
  };

  int threads = gen.threads > 0 ? gen.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp<int>(threads, 1, 64);
  const std::int64_t per = (n_slices + threads - 1) / threads;
  std::vector<std::vector<TimedEvent>> parts(static_cast<std::size_t>(threads));
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        const std::int64_t lo = w * per;
        const std::int64_t hi = std::min(n_slices, lo + per);
        for (std::int64_t s = lo; s < hi; ++s) run_slice(s, parts[static_cast<std::size_t>(w)]);
      });
    }
  }
  // Slices are contiguous and individually sorted, so concatenation in slice
  // order is already time-ordered; the result does not depend on `threads`.
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  out.events.reserve(total);
  if (gen.keep_subpixel) out.subpixel.reserve(total);
  for (const auto& p : parts) {
    for (const TimedEvent& te : p) {
      out.events.push_back(te.ev);
      if (gen.keep_subpixel) out.subpixel.push_back(Event{te.ev.t_us, te.sub.x(), te.sub.y(), te.ev.polarity});
      (te.inlier ? out.inliers : out.outliers) += 1;
    }
  }

  for (std::int64_t t = truth_period_us / 2; t < duration_us; t += truth_period_us) {
    const TrajectorySample s = sample_trajectory(traj, 1e-6 * static_cast<double>(t));
    Rotation R = Rotation::unchecked(s.rotation);
    R.renormalize();
    out.truth.push_back({t, s.position, to_quaternion(R)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenes

namespace {

void add_polygon(std::vector<Segment3D>& out, const Vec2& c, double radius, int sides,
                 double rot, double z) {
  for (int i = 0; i < sides; ++i) {
    const double a0 = rot + kTwoPi * i / sides;
    const double a1 = rot + kTwoPi * (i + 1) / sides;
    const Vec3 p1(c.x() + radius * std::cos(a0), c.y() + radius * std::sin(a0), z);
    const Vec3 p2(c.x() + radius * std::cos(a1), c.y() + radius * std::sin(a1), z);
    out.push_back({p1, p2, static_cast<int>(out.size())});
  }
}

// Square-based pyramid with its apex raised towards the camera (-z).
void add_pyramid(std::vector<Segment3D>& out, const Vec2& c, double half, double height) {
  const Vec3 base[4] = {Vec3(c.x() - half, c.y() - half, 0.0), Vec3(c.x() + half, c.y() - half, 0.0),
                        Vec3(c.x() + half, c.y() + half, 0.0), Vec3(c.x() - half, c.y() + half, 0.0)};
  const Vec3 apex(c.x(), c.y(), -height);
  for (int i = 0; i < 4; ++i) out.push_back({base[i], base[(i + 1) % 4], static_cast<int>(out.size())});
  for (int i = 0; i < 4; ++i) out.push_back({base[i], apex, static_cast<int>(out.size())});
}

std::vector<Segment3D> shapes(double s) {
  std::vector<Segment3D> m;
  const double q = std::numbers::pi / 4.0;
  add_polygon(m, Vec2(-0.09, -0.06) * s, 0.0566 * s, 4, q, 0.0);
  add_polygon(m, Vec2(0.09, -0.06) * s, 0.05 * s, 3, -std::numbers::pi / 2.0, 0.0);
  add_polygon(m, Vec2(-0.09, 0.07) * s, 0.045 * s, 5, 0.3, 0.0);
  add_polygon(m, Vec2(0.09, 0.07) * s, 0.045 * s, 6, 0.0, 0.0);
  add_pyramid(m, Vec2::Zero(), 0.03 * s, 0.05 * s);
  return m;
}

}  // namespace

std::vector<Segment3D> handshake_map() { return shapes(1.0); }

std::vector<Segment3D> fourbar_map() { return shapes(1.0 / 3.0); }

HandshakeTrajectory handshake_preset(double duration_s) {
  HandshakeTrajectory h;
  h.center = Vec3(0.0, 0.0, -0.45);
  h.pos_amplitude = Vec3(0.03, 0.025, 0.02);
  h.rot_amplitude = Vec3(0.04, 0.04, 0.06);
  h.pos_freq_scale = Vec3(1.0, 0.83, 1.21);
  h.rot_freq_scale = Vec3(0.91, 1.09, 0.77);
  h.pos_phase = Vec3(0.0, 1.1, 2.3);
  h.rot_phase = Vec3(0.5, 1.7, 2.9);
  h.f_start = 1.0;
  h.f_end = 6.0;
  h.sweep_s = duration_s;
  h.ramp_s = 0.5;
  return h;
}

}  // namespace evtrack
