#include "evtrack/filter.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace evtrack {

namespace {

using Clock = std::chrono::steady_clock;

inline double elapsed_ns(Clock::time_point a, Clock::time_point b) {
  return static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count());
}

}  // namespace

// ---------------------------------------------------------------------------
// FilterVariant

std::string FilterVariant::name() const {
  std::string s(to_string(model));
  s += param == Parameterization::Lie ? "+lie" : "+classic";
  s += mode == ProjectionMode::MovingCamera ? "+cam" : "+obj";
  return s;
}

std::optional<FilterVariant> FilterVariant::parse(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t next = s.find('+', pos);
    parts.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  if (parts.size() != 3) return std::nullopt;
  FilterVariant v;
  auto model = parse_motion_model(parts[0]);
  if (!model) return std::nullopt;
  v.model = *model;
  if (parts[1] == "lie") v.param = Parameterization::Lie;
  else if (parts[1] == "classic") v.param = Parameterization::Classic;
  else return std::nullopt;
  if (parts[2] == "cam") v.mode = ProjectionMode::MovingCamera;
  else if (parts[2] == "obj") v.mode = ProjectionMode::MovingObject;
  else return std::nullopt;
  return v;
}

std::vector<FilterVariant> FilterVariant::all() {
  std::vector<FilterVariant> out;
  for (auto mode : {ProjectionMode::MovingCamera, ProjectionMode::MovingObject}) {
    for (auto param : {Parameterization::Lie, Parameterization::Classic}) {
      for (auto model : {MotionModel::CP, MotionModel::CV, MotionModel::CA}) {
        out.push_back(FilterVariant{model, param, mode});
      }
    }
  }
  return out;
}

void WindowConfig::validate() const {
  if (!(dt_window_us > 0.0)) throw std::invalid_argument("window: dt must be positive");
  if (!(sigma_d > 0.0)) throw std::invalid_argument("window: sigma_d must be positive");
  if (!(n_sigma > 0.0)) throw std::invalid_argument("window: n_sigma must be positive");
}

PhaseTimes& PhaseTimes::operator+=(const PhaseTimes& o) {
  predict_ns += o.predict_ns;
  project_ns += o.project_ns;
  match_ns += o.match_ns;
  update_ns += o.update_ns;
  return *this;
}

WindowStats& WindowStats::operator+=(const WindowStats& o) {
  received += o.received;
  skipped += o.skipped;
  matched += o.matched;
  gated_out += o.gated_out;
  updated += o.updated;
  visible_lines += o.visible_lines;
  empty = empty && o.empty;
  time += o.time;
  return *this;
}

// ---------------------------------------------------------------------------
// Scalar update

template <class State>
UpdateResult update_event(State& x, BlockCovariance& P, double z, const PoseRow& J, double sigma_d,
                          double n_sigma) {
  CovStorage& M = P.dense();
  const int n = P.dim();
  const ErrorVector PJ = M.leftCols<6>() * J.transpose();
  const double Z = J.dot(PJ.head<6>()) + sigma_d * sigma_d;
  if (!(Z > 0.0)) {
    throw FilterError(FilterErrorCode::NonPositiveInnovationVariance,
                      "innovation variance is not positive; covariance is corrupted");
  }
  if (z * z / Z >= n_sigma * n_sigma) return UpdateResult::Rejected;

  const double inv_Z = 1.0 / Z;
  const ErrorVector dx = PJ * (z * inv_Z);
  apply_correction(x, std::span<const double>(dx.data(), static_cast<std::size_t>(n)));

  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i) {
      const double v = M(i, j) - (PJ[i] * PJ[j]) * inv_Z;
      M(i, j) = v;
      M(j, i) = v;
    }
  }
  return UpdateResult::Applied;
}

template UpdateResult update_event(FilterState&, BlockCovariance&, double, const PoseRow&, double, double);
template UpdateResult update_event(ClassicState&, BlockCovariance&, double, const PoseRow&, double, double);

std::array<double, 6> pose_sigmas(const BlockCovariance& P) {
  std::array<double, 6> s{};
  for (int i = 0; i < 6; ++i) s[i] = std::sqrt(std::max(P.dense()(i, i), 0.0));
  return s;
}

// ---------------------------------------------------------------------------
// Engine

namespace {

inline FilterState predict(const FilterState& x, double dt) { return predict_state(x, dt); }
inline ClassicState predict(const ClassicState& x, double dt) { return classic_predict(x, dt); }
inline Transition transition(const FilterState& x, double dt) { return transition_jacobian(x, dt); }
inline Transition transition(const ClassicState& x, double dt) {
  return classic_transition_jacobian(x, dt);
}

// Pose part of x (-) x0: position difference and right rotation difference.
template <class State>
Eigen::Matrix<double, 6, 1> pose_delta(const State& x, const State& x0) {
  Eigen::Matrix<double, 6, 1> d;
  d.head<3>() = x.position - x0.position;
  d.tail<3>() = detail::log_unchecked(rotation_matrix(x0.rotation).transpose() *
                                      rotation_matrix(x.rotation));
  return d;
}

}  // namespace

template <class State>
TrackerEngine<State>::TrackerEngine(const TrackerConfig& cfg, std::span<const Segment3D> map,
                                    const CameraCalib& calib, const State& init,
                                    const BlockCovariance& P0)
    : cfg_(cfg), map_(map), calib_(calib), K_(calib.K()), x_(with_model(init, cfg.variant.model)),
      P_(P0), x_lin_(x_),
      grid_(cfg.matcher.grid_cols, cfg.matcher.grid_rows, calib.width, calib.height) {
  cfg_.window.validate();
  cfg_.matcher.validate();
  if (P_.model() != cfg.variant.model) {
    throw std::invalid_argument("TrackerEngine: initial covariance does not match motion model");
  }
  lines_.reserve(map.size());
  line_jac_.reserve(map.size());
  line_seg_.reserve(map.size());
  jac_ready_.reserve(map.size());
}

template <class State>
void TrackerEngine<State>::set_wall_origin(std::int64_t data_us, Clock::time_point wall) {
  wall_origin_data_us_ = data_us;
  wall_origin_ = wall;
}

template <class State>
double TrackerEngine<State>::processing_clock_now() const {
  if (cfg_.clock.kind == SkipClock::Kind::Wall) {
    return static_cast<double>(wall_origin_data_us_) + 1e-3 * elapsed_ns(wall_origin_, Clock::now());
  }
  return clock_us_;
}

template <class State>
void TrackerEngine<State>::predict_to(std::int64_t t0_us) {
  const double dt = 1e-6 * static_cast<double>(t0_us - x_.stamp_us);
  if (dt > 0.0) {
    const Transition F = transition(x_, dt);
    const ProcessNoise Q = build_process_noise(cfg_.noise, dt, x_.model());
    P_ = propagate_covariance(P_, F, Q);
    x_ = predict(x_, dt);
  }
  x_.stamp_us = t0_us;
}

template <class State>
void TrackerEngine<State>::project() {
  const Pose pose = pose_of(x_);
  lines_.clear();
  line_seg_.clear();
  for (const Segment3D& seg : map_) {
    auto pl = try_project_segment(seg, pose, cfg_.variant.mode, K_);
    if (!pl) continue;
    if (!clip_segment(pl->clip1, pl->clip2, 0.0, 0.0, calib_.width, calib_.height)) continue;
    lines_.push_back(*pl);
    line_seg_.push_back(&seg);
  }
  line_jac_.resize(lines_.size());
  jac_ready_.assign(lines_.size(), 0);
  x_lin_ = x_;
  pose_lin_ = pose;
}

template <class State>
WindowStats TrackerEngine<State>::process_window(std::span<const Event> events,
                                                 std::int64_t t_begin_us) {
  WindowStats st;
  const bool timed = cfg_.options.instrument;
  const bool replay_measured =
      cfg_.clock.kind == SkipClock::Kind::Replay && std::isfinite(cfg_.matcher.skip_lag_us) &&
      (cfg_.clock.event_cost_us < 0.0 || cfg_.clock.window_cost_us < 0.0);
  const bool measure = timed || replay_measured;
  const double dt_us = cfg_.window.dt_window_us;
  const std::int64_t t0 = t_begin_us + static_cast<std::int64_t>(std::llround(0.5 * dt_us));
  st.t0_us = t0;
  st.received = events.size();
  st.empty = events.empty();
  if (timed) event_ns_.clear();

  Clock::time_point t_a;
  if (measure) t_a = Clock::now();
  predict_to(t0);
  Clock::time_point t_b;
  if (measure) {
    t_b = Clock::now();
    st.time.predict_ns = elapsed_ns(t_a, t_b);
  }
  project();
  grid_.rebuild(lines_, cfg_.matcher);
  st.visible_lines = lines_.size();
  Clock::time_point t_c;
  if (measure) {
    t_c = Clock::now();
    st.time.project_ns = elapsed_ns(t_b, t_c);
  }

  if (cfg_.clock.kind == SkipClock::Kind::Replay) {
    double wcost = 0.0;
    if (cfg_.clock.window_cost_us >= 0.0) wcost = cfg_.clock.window_cost_us;
    else if (measure) wcost = 1e-3 * elapsed_ns(t_a, t_c);
    clock_us_ = std::max(clock_us_, static_cast<double>(t_begin_us)) + wcost;
  }

  const double sigma_d = cfg_.window.sigma_d;
  const double n_sigma = cfg_.window.n_sigma;
  const bool lin = cfg_.options.linearized_innovation;
  Eigen::Matrix<double, 6, 1> delta = Eigen::Matrix<double, 6, 1>::Zero();
  int since_reproject = 0;

  Clock::time_point t_prev = t_c;
  for (const Event& e : events) {
    if (std::isfinite(cfg_.matcher.skip_lag_us) && should_skip(e.t_us, processing_clock_now(), cfg_.matcher)) {
      ++st.skipped;
      continue;
    }

    const auto m = match_event(e, grid_, lines_, cfg_.matcher);
    Clock::time_point t_m;
    if (measure) t_m = Clock::now();

    if (m) {
      ++st.matched;
      const Vec2 ep(e.u, e.v);
      const ProjectedLine& pl = lines_[m->line_index];
      const auto li = static_cast<std::size_t>(m->line_index);
      if (!jac_ready_[li]) {
        line_jac_[li] = line_jacobian(*line_seg_[li], pose_lin_, cfg_.variant.mode, K_);
        jac_ready_[li] = 1;
      }
      const PoseRow J = distance_line_gradient(ep, pl.line, cfg_.options.full_normalizer) * line_jac_[li];
      double d = m->distance;
      if (lin) d += J.dot(delta.transpose());
      const auto res = update_event(x_, P_, -d, J, sigma_d, n_sigma);
      if (res == UpdateResult::Applied) {
        ++st.updated;
        if (lin) delta = pose_delta(x_, x_lin_);
        if (cfg_.options.reproject_every > 0 && ++since_reproject >= cfg_.options.reproject_every) {
          since_reproject = 0;
          project();
          delta.setZero();
        }
      } else {
        ++st.gated_out;
      }
    }

    if (measure) {
      const Clock::time_point t_u = Clock::now();
      st.time.match_ns += elapsed_ns(t_prev, t_m);
      st.time.update_ns += elapsed_ns(t_m, t_u);
      const double cost_ns = elapsed_ns(t_prev, t_u);
      if (timed) event_ns_.push_back(static_cast<float>(cost_ns));
      if (cfg_.clock.kind == SkipClock::Kind::Replay) {
        const double ecost = cfg_.clock.event_cost_us >= 0.0 ? cfg_.clock.event_cost_us : 1e-3 * cost_ns;
        clock_us_ = std::max(clock_us_, static_cast<double>(e.t_us)) + ecost;
      }
      t_prev = t_u;
    } else if (cfg_.clock.kind == SkipClock::Kind::Replay && cfg_.clock.event_cost_us >= 0.0) {
      clock_us_ = std::max(clock_us_, static_cast<double>(e.t_us)) + cfg_.clock.event_cost_us;
    }
  }
  return st;
}

template class TrackerEngine<FilterState>;
template class TrackerEngine<ClassicState>;

// ---------------------------------------------------------------------------
// Tracker facade

namespace {

std::variant<TrackerEngine<FilterState>, TrackerEngine<ClassicState>> make_engine(
    const TrackerConfig& cfg, std::span<const Segment3D> map, const CameraCalib& calib,
    const FilterState& init) {
  const BlockCovariance P0 = BlockCovariance::initial(cfg.variant.model, cfg.init_sigmas);
  if (cfg.variant.param == Parameterization::Lie) {
    return TrackerEngine<FilterState>(cfg, map, calib, init, P0);
  }
  return TrackerEngine<ClassicState>(cfg, map, calib, to_classic(init), P0);
}

}  // namespace

Tracker::Tracker(const TrackerConfig& cfg, std::span<const Segment3D> map,
                 const CameraCalib& calib, const FilterState& init)
    : cfg_(cfg), engine_(make_engine(cfg, map, calib, init)) {}

WindowStats Tracker::process_window(std::span<const Event> events, std::int64_t t_begin_us) {
  return std::visit([&](auto& e) { return e.process_window(events, t_begin_us); }, engine_);
}

FilterState Tracker::state() const {
  return std::visit(
      [](const auto& e) -> FilterState {
        using S = std::decay_t<decltype(e.state())>;
        if constexpr (std::is_same_v<S, FilterState>) {
          return e.state();
        } else {
          return to_lie(e.state());
        }
      },
      engine_);
}

const BlockCovariance& Tracker::covariance() const {
  return std::visit([](const auto& e) -> const BlockCovariance& { return e.covariance(); }, engine_);
}

void Tracker::set_wall_origin(std::int64_t data_us, std::chrono::steady_clock::time_point wall) {
  std::visit([&](auto& e) { e.set_wall_origin(data_us, wall); }, engine_);
}

std::span<const float> Tracker::event_times() const {
  return std::visit([](const auto& e) { return e.event_times(); }, engine_);
}

// ---------------------------------------------------------------------------

TrackResult run_tracker(std::span<const RawEvent> stream, std::int64_t t_start_us,
                        std::int64_t duration_us, std::span<const Segment3D> map,
                        const CameraCalib& calib, const TrackerConfig& cfg,
                        const FilterState& init) {
  const auto wall_start = Clock::now();
  Tracker tracker(cfg, map, calib, init);
  const UndistortLut lut(calib);

  const auto dt = static_cast<std::int64_t>(std::llround(cfg.window.dt_window_us));
  if (dt <= 0) throw std::invalid_argument("run_tracker: window must be at least 1 us");
  const std::int64_t n_windows = std::max<std::int64_t>(0, duration_us / dt);
  const double max_var = cfg.options.divergence_sigma * cfg.options.divergence_sigma;

  TrackResult out;
  out.records.reserve(static_cast<std::size_t>(n_windows));
  std::vector<Event> window;
  window.reserve(1024);

  if (cfg.clock.kind == SkipClock::Kind::Wall) tracker.set_wall_origin(t_start_us, Clock::now());

  std::size_t cursor = 0;
  while (cursor < stream.size() && static_cast<std::int64_t>(stream[cursor].t_us) < t_start_us) ++cursor;

  for (std::int64_t k = 0; k < n_windows; ++k) {
    const std::int64_t t_begin = t_start_us + k * dt;
    const std::int64_t t_end = t_begin + dt;
    window.clear();
    while (cursor < stream.size() && static_cast<std::int64_t>(stream[cursor].t_us) < t_end) {
      const RawEvent& r = stream[cursor++];
      const auto p = lut.lookup(r.u, r.v);
      if (!p) {
        ++out.dropped_outside;
        continue;
      }
      window.push_back(Event{static_cast<std::int64_t>(r.t_us), p->x(), p->y(), r.polarity});
    }

    const WindowStats ws = tracker.process_window(window, t_begin);
    out.totals += ws;
    ++out.windows;

    const BlockCovariance& P = tracker.covariance();
    const FilterState x = tracker.state();
    TrajectoryRecord rec;
    rec.t_us = ws.t0_us;
    rec.position = x.position;
    rec.rotation = to_quaternion(x.rotation);
    rec.sigma = pose_sigmas(P);
    out.records.push_back(rec);

    const double pos_var = P.dense().topLeftCorner<3, 3>().diagonal().maxCoeff();
    if (!(pos_var <= max_var)) {
      out.status = TrackResult::Status::Diverged;
      break;
    }
  }
  out.wall_seconds = 1e-9 * elapsed_ns(wall_start, Clock::now());
  return out;
}

}  // namespace evtrack
