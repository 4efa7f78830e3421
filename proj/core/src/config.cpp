#include "evtrack/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace evtrack {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, int line) {
  if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
  std::istringstream is(v);
  double d = 0.0;
  if (!(is >> d) || !(is >> std::ws).eof()) throw ConfigError("expected a number, got '" + v + "'", line);
  return d;
}

std::int64_t to_int(const std::string& v, int line) {
  std::istringstream is(v);
  std::int64_t d = 0;
  if (!(is >> d) || !(is >> std::ws).eof()) throw ConfigError("expected an integer, got '" + v + "'", line);
  return d;
}

bool to_bool(const std::string& v, int line) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("expected a boolean, got '" + v + "'", line);
}

Vec3 to_vec3(const std::string& v, int line) {
  std::istringstream is(v);
  Vec3 out;
  if (!(is >> out.x() >> out.y() >> out.z()) || !(is >> std::ws).eof()) {
    throw ConfigError("expected three numbers, got '" + v + "'", line);
  }
  return out;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + " " + fmt(v.y()) + " " + fmt(v.z()); }
const char* fmt(bool b) { return b ? "true" : "false"; }

using Setter = std::function<void(RunConfig&, const std::string&, int)>;

std::map<std::string, Setter> make_setters(const std::filesystem::path& base) {
  std::map<std::string, Setter> s;
  auto dbl = [&s](const std::string& key, auto get) {
    s[key] = [get](RunConfig& c, const std::string& v, int l) { get(c) = to_double(v, l); };
  };
  auto path = [&s, base](const std::string& key, auto get) {
    s[key] = [get, base](RunConfig& c, const std::string& v, int) {
      std::filesystem::path p(v);
      get(c) = p.is_relative() && !base.empty() ? base / p : p;
    };
  };

  s["run.seed"] = [](RunConfig& c, const std::string& v, int l) {
    c.seed = static_cast<std::uint64_t>(to_int(v, l));
  };

  s["filter.variant"] = [](RunConfig& c, const std::string& v, int l) {
    auto fv = FilterVariant::parse(v);
    if (!fv) throw ConfigError("unknown variant '" + v + "'", l);
    c.tracker.variant = *fv;
  };
  dbl("filter.dt_window_us", [](RunConfig& c) -> double& { return c.tracker.window.dt_window_us; });
  dbl("filter.sigma_d", [](RunConfig& c) -> double& { return c.tracker.window.sigma_d; });
  dbl("filter.n_sigma", [](RunConfig& c) -> double& { return c.tracker.window.n_sigma; });
  dbl("filter.divergence_sigma", [](RunConfig& c) -> double& { return c.tracker.options.divergence_sigma; });
  s["filter.full_normalizer"] = [](RunConfig& c, const std::string& v, int l) {
    c.tracker.options.full_normalizer = to_bool(v, l);
  };
  s["filter.linearized_innovation"] = [](RunConfig& c, const std::string& v, int l) {
    c.tracker.options.linearized_innovation = to_bool(v, l);
  };
  s["filter.reproject_every"] = [](RunConfig& c, const std::string& v, int l) {
    c.tracker.options.reproject_every = static_cast<int>(to_int(v, l));
  };

  dbl("matcher.alpha", [](RunConfig& c) -> double& { return c.tracker.matcher.alpha; });
  dbl("matcher.beta", [](RunConfig& c) -> double& { return c.tracker.matcher.beta; });
  dbl("matcher.skip_lag_us", [](RunConfig& c) -> double& { return c.tracker.matcher.skip_lag_us; });
  dbl("matcher.event_cost_us", [](RunConfig& c) -> double& { return c.tracker.clock.event_cost_us; });
  dbl("matcher.window_cost_us", [](RunConfig& c) -> double& { return c.tracker.clock.window_cost_us; });
  s["matcher.grid_cols"] = [](RunConfig& c, const std::string& v, int l) {
    c.tracker.matcher.grid_cols = static_cast<int>(to_int(v, l));
  };
  s["matcher.grid_rows"] = [](RunConfig& c, const std::string& v, int l) {
    c.tracker.matcher.grid_rows = static_cast<int>(to_int(v, l));
  };
  s["matcher.dilate"] = [](RunConfig& c, const std::string& v, int l) {
    c.tracker.matcher.dilate = to_bool(v, l);
  };
  s["matcher.clock"] = [](RunConfig& c, const std::string& v, int l) {
    if (v == "replay") c.tracker.clock.kind = SkipClock::Kind::Replay;
    else if (v == "wall") c.tracker.clock.kind = SkipClock::Kind::Wall;
    else throw ConfigError("clock must be 'replay' or 'wall'", l);
  };

  dbl("noise.sigma_pos", [](RunConfig& c) -> double& { return c.tracker.noise.sigma_pos; });
  dbl("noise.sigma_rot", [](RunConfig& c) -> double& { return c.tracker.noise.sigma_rot; });
  dbl("noise.sigma_vel", [](RunConfig& c) -> double& { return c.tracker.noise.sigma_vel; });
  dbl("noise.sigma_angvel", [](RunConfig& c) -> double& { return c.tracker.noise.sigma_angvel; });
  dbl("noise.sigma_acc", [](RunConfig& c) -> double& { return c.tracker.noise.sigma_acc; });
  dbl("noise.sigma_angacc", [](RunConfig& c) -> double& { return c.tracker.noise.sigma_angacc; });

  dbl("init.sigma_pos", [](RunConfig& c) -> double& { return c.tracker.init_sigmas.pos; });
  dbl("init.sigma_rot", [](RunConfig& c) -> double& { return c.tracker.init_sigmas.rot; });
  dbl("init.sigma_vel", [](RunConfig& c) -> double& { return c.tracker.init_sigmas.vel; });
  dbl("init.sigma_angvel", [](RunConfig& c) -> double& { return c.tracker.init_sigmas.angvel; });
  dbl("init.sigma_acc", [](RunConfig& c) -> double& { return c.tracker.init_sigmas.acc; });
  dbl("init.sigma_angacc", [](RunConfig& c) -> double& { return c.tracker.init_sigmas.angacc; });
  s["init.position"] = [](RunConfig& c, const std::string& v, int l) { c.init.position = to_vec3(v, l); };
  s["init.rotation"] = [](RunConfig& c, const std::string& v, int l) { c.init.rotation = to_vec3(v, l); };
  s["init.velocity"] = [](RunConfig& c, const std::string& v, int l) { c.init.velocity = to_vec3(v, l); };
  s["init.angular_velocity"] = [](RunConfig& c, const std::string& v, int l) {
    c.init.angular_velocity = to_vec3(v, l);
  };
  s["init.t_us"] = [](RunConfig& c, const std::string& v, int l) { c.init.t_us = to_int(v, l); };

  s["scene.preset"] = [](RunConfig& c, const std::string& v, int l) {
    if (v == "handshake") c.scene.preset = ScenePreset::Handshake;
    else if (v == "fourbar") c.scene.preset = ScenePreset::FourBar;
    else if (v == "static") c.scene.preset = ScenePreset::Static;
    else throw ConfigError("preset must be handshake, fourbar or static", l);
  };
  dbl("scene.duration_s", [](RunConfig& c) -> double& { return c.scene.duration_s; });
  dbl("scene.rpm", [](RunConfig& c) -> double& { return c.scene.rpm; });
  dbl("scene.ramp_s", [](RunConfig& c) -> double& { return c.scene.ramp_s; });
  dbl("scene.standoff", [](RunConfig& c) -> double& { return c.scene.standoff; });
  dbl("scene.handshake_ramp_s", [](RunConfig& c) -> double& { return c.scene.handshake_ramp_s; });

  dbl("events.rate", [](RunConfig& c) -> double& { return c.events.rate; });
  dbl("events.sigma_px", [](RunConfig& c) -> double& { return c.events.sigma_px; });
  dbl("events.outlier_fraction", [](RunConfig& c) -> double& { return c.events.outlier_fraction; });
  dbl("events.min_rate_fraction", [](RunConfig& c) -> double& { return c.events.min_rate_fraction; });
  dbl("events.slice_us", [](RunConfig& c) -> double& { return c.events.slice_us; });
  s["events.speed_modulation"] = [](RunConfig& c, const std::string& v, int l) {
    c.events.speed_modulation = to_bool(v, l);
  };
  s["events.threads"] = [](RunConfig& c, const std::string& v, int l) {
    c.events.threads = static_cast<int>(to_int(v, l));
  };

  path("paths.events", [](RunConfig& c) -> std::filesystem::path& { return c.paths.events; });
  path("paths.map", [](RunConfig& c) -> std::filesystem::path& { return c.paths.map; });
  path("paths.calib", [](RunConfig& c) -> std::filesystem::path& { return c.paths.calib; });
  path("paths.truth", [](RunConfig& c) -> std::filesystem::path& { return c.paths.truth; });
  path("paths.output", [](RunConfig& c) -> std::filesystem::path& { return c.paths.output; });
  return s;
}

}  // namespace

void RunConfig::validate() const {
  try {
    tracker.window.validate();
    tracker.matcher.validate();
    events.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const NoiseParams& n = tracker.noise;
  for (double v : {n.sigma_pos, n.sigma_rot, n.sigma_vel, n.sigma_angvel, n.sigma_acc, n.sigma_angacc}) {
    if (!(v >= 0.0)) throw ConfigError("noise densities must be >= 0");
  }
  const InitialSigmas& s = tracker.init_sigmas;
  for (double v : {s.pos, s.rot, s.vel, s.angvel, s.acc, s.angacc}) {
    if (!(v > 0.0)) throw ConfigError("initial sigmas must be > 0");
  }
  if (tracker.options.reproject_every < 0) throw ConfigError("reproject_every must be >= 0");
  if (!(tracker.options.divergence_sigma > 0.0)) throw ConfigError("divergence_sigma must be > 0");
  if (!(scene.duration_s >= 0.0)) throw ConfigError("duration_s must be >= 0");
  if (!(scene.rpm > 0.0)) throw ConfigError("rpm must be > 0");
  if (!(scene.ramp_s >= 0.0) || !(scene.handshake_ramp_s >= 0.0)) throw ConfigError("ramps must be >= 0");
  if (!(scene.standoff > 0.0)) throw ConfigError("standoff must be > 0");
}

FilterState RunConfig::initial_state() const {
  FilterState x = make_state(tracker.variant.model, init.position, exp_so3(init.rotation), init.t_us);
  if (x.twist) *x.twist = Twist{init.velocity, init.angular_velocity};
  return x;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  const auto setters = make_setters(base_dir);
  RunConfig cfg;
  for (auto* p : {&cfg.paths.events, &cfg.paths.map, &cfg.paths.calib, &cfg.paths.truth, &cfg.paths.output}) {
    if (p->is_relative()) *p = base_dir / *p;
  }
  std::istringstream is(text);
  std::string raw;
  std::string section;
  int n = 0;
  while (std::getline(is, raw)) {
    ++n;
    std::string line = raw;
    const auto c = line.find_first_of("#;");
    if (c != std::string::npos) line.erase(c);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", n);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", n);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("key '" + key + "' outside any section", n);
    const auto it = setters.find(section + "." + key);
    if (it == setters.end()) throw ConfigError("unknown key '" + section + "." + key + "'", n);
    if (value.empty()) throw ConfigError("empty value for '" + key + "'", n);
    it->second(cfg, value, n);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string format_config(const RunConfig& c) {
  const TrackerConfig& t = c.tracker;
  std::ostringstream os;
  os << "[run]\nseed = " << c.seed << "\n\n";
  os << "[filter]\nvariant = " << t.variant.name() << "\ndt_window_us = " << fmt(t.window.dt_window_us)
     << "\nsigma_d = " << fmt(t.window.sigma_d) << "\nn_sigma = " << fmt(t.window.n_sigma)
     << "\nfull_normalizer = " << fmt(t.options.full_normalizer)
     << "\nlinearized_innovation = " << fmt(t.options.linearized_innovation)
     << "\nreproject_every = " << t.options.reproject_every
     << "\ndivergence_sigma = " << fmt(t.options.divergence_sigma) << "\n\n";
  os << "[matcher]\nalpha = " << fmt(t.matcher.alpha) << "\nbeta = " << fmt(t.matcher.beta)
     << "\ngrid_cols = " << t.matcher.grid_cols << "\ngrid_rows = " << t.matcher.grid_rows
     << "\nskip_lag_us = " << fmt(t.matcher.skip_lag_us) << "\ndilate = " << fmt(t.matcher.dilate)
     << "\nclock = " << (t.clock.kind == SkipClock::Kind::Wall ? "wall" : "replay")
     << "\nevent_cost_us = " << fmt(t.clock.event_cost_us)
     << "\nwindow_cost_us = " << fmt(t.clock.window_cost_us) << "\n\n";
  const NoiseParams& n = t.noise;
  os << "[noise]\nsigma_pos = " << fmt(n.sigma_pos) << "\nsigma_rot = " << fmt(n.sigma_rot)
     << "\nsigma_vel = " << fmt(n.sigma_vel) << "\nsigma_angvel = " << fmt(n.sigma_angvel)
     << "\nsigma_acc = " << fmt(n.sigma_acc) << "\nsigma_angacc = " << fmt(n.sigma_angacc) << "\n\n";
  const InitialSigmas& s = t.init_sigmas;
  os << "[init]\nposition = " << fmt(c.init.position) << "\nrotation = " << fmt(c.init.rotation)
     << "\nvelocity = " << fmt(c.init.velocity) << "\nangular_velocity = " << fmt(c.init.angular_velocity)
     << "\nt_us = " << c.init.t_us << "\nsigma_pos = " << fmt(s.pos) << "\nsigma_rot = " << fmt(s.rot)
     << "\nsigma_vel = " << fmt(s.vel) << "\nsigma_angvel = " << fmt(s.angvel)
     << "\nsigma_acc = " << fmt(s.acc) << "\nsigma_angacc = " << fmt(s.angacc) << "\n\n";
  const char* preset = c.scene.preset == ScenePreset::FourBar  ? "fourbar"
                       : c.scene.preset == ScenePreset::Static ? "static"
                                                               : "handshake";
  os << "[scene]\npreset = " << preset << "\nduration_s = " << fmt(c.scene.duration_s)
     << "\nrpm = " << fmt(c.scene.rpm) << "\nramp_s = " << fmt(c.scene.ramp_s)
     << "\nstandoff = " << fmt(c.scene.standoff)
     << "\nhandshake_ramp_s = " << fmt(c.scene.handshake_ramp_s) << "\n\n";
  os << "[events]\nrate = " << fmt(c.events.rate) << "\nsigma_px = " << fmt(c.events.sigma_px)
     << "\noutlier_fraction = " << fmt(c.events.outlier_fraction)
     << "\nspeed_modulation = " << fmt(c.events.speed_modulation)
     << "\nmin_rate_fraction = " << fmt(c.events.min_rate_fraction)
     << "\nslice_us = " << fmt(c.events.slice_us) << "\nthreads = " << c.events.threads << "\n\n";
  os << "[paths]\nevents = " << c.paths.events.string() << "\nmap = " << c.paths.map.string()
     << "\ncalib = " << c.paths.calib.string() << "\ntruth = " << c.paths.truth.string()
     << "\noutput = " << c.paths.output.string() << "\n";
  return os.str();
}

}  // namespace evtrack
