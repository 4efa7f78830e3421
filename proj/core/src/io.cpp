#include "evtrack/io.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace evtrack {

namespace {

constexpr std::size_t kRecordSize = 9;

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary | std::ios::out : std::ios::out);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary | std::ios::in : std::ios::in);
  if (!is) throw IoError("cannot open: " + path.string());
  return is;
}

[[noreturn]] void bad_line(const std::filesystem::path& path, int line, const std::string& what) {
  throw IoError(path.string() + ":" + std::to_string(line) + ": " + what);
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool blank_or_comment(const std::string& s) {
  const auto p = s.find_first_not_of(" \t\r");
  return p == std::string::npos || s[p] == '#';
}

void put_u16(unsigned char* p, std::uint16_t v) {
  p[0] = static_cast<unsigned char>(v & 0xFF);
  p[1] = static_cast<unsigned char>(v >> 8);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void write_events(const std::filesystem::path& path, const EventFile& f) {
  std::ofstream os = open_out(path, true);
  os << "evtrack-events 1\n"
     << "width " << f.width << "\n"
     << "height " << f.height << "\n"
     << "count " << f.events.size() << "\n"
     << "duration_us " << f.duration_us << "\n"
     << "end_header\n";
  std::vector<unsigned char> buf(f.events.size() * kRecordSize);
  unsigned char* p = buf.data();
  for (const RawEvent& e : f.events) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>((e.t_us >> (8 * i)) & 0xFF);
    put_u16(p + 4, e.u);
    put_u16(p + 6, e.v);
    p[8] = static_cast<unsigned char>(e.polarity);
    p += kRecordSize;
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

EventFile read_events(const std::filesystem::path& path) {
  std::ifstream is = open_in(path, true);
  EventFile f;
  std::string line;
  if (!std::getline(is, line) || line != "evtrack-events 1") bad_line(path, 1, "not an event file");
  std::int64_t count = -1;
  int n = 1;
  for (;;) {
    ++n;
    if (!std::getline(is, line)) bad_line(path, n, "header ends without end_header");
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string key;
    std::int64_t value = 0;
    if (!(ls >> key >> value)) bad_line(path, n, "expected 'key value'");
    if (key == "width") f.width = static_cast<int>(value);
    else if (key == "height") f.height = static_cast<int>(value);
    else if (key == "count") count = value;
    else if (key == "duration_us") f.duration_us = value;
    else bad_line(path, n, "unknown header key '" + key + "'");
  }
  if (count < 0) bad_line(path, n, "missing count");
  std::vector<unsigned char> buf(static_cast<std::size_t>(count) * kRecordSize);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (is.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw IoError(path.string() + ": truncated event records");
  }
  f.events.resize(static_cast<std::size_t>(count));
  const unsigned char* p = buf.data();
  for (RawEvent& e : f.events) {
    e.t_us = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    e.u = get_u16(p + 4);
    e.v = get_u16(p + 6);
    e.polarity = static_cast<std::int8_t>(p[8]);
    p += kRecordSize;
  }
  return f;
}

void write_map(const std::filesystem::path& path, const std::vector<Segment3D>& map) {
  std::ofstream os = open_out(path, false);
  os << "# id x1 y1 z1 x2 y2 z2 (m)\n";
  for (const Segment3D& s : map) {
    os << s.id;
    for (int i = 0; i < 3; ++i) os << ' ' << fmt(s.p1[i]);
    for (int i = 0; i < 3; ++i) os << ' ' << fmt(s.p2[i]);
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<Segment3D> read_map(const std::filesystem::path& path) {
  std::ifstream is = open_in(path, false);
  std::vector<Segment3D> map;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (blank_or_comment(line)) continue;
    std::istringstream ls(line);
    Segment3D s;
    if (!(ls >> s.id >> s.p1.x() >> s.p1.y() >> s.p1.z() >> s.p2.x() >> s.p2.y() >> s.p2.z())) {
      bad_line(path, n, "expected 'id x1 y1 z1 x2 y2 z2'");
    }
    if (s.p1 == s.p2) bad_line(path, n, "segment endpoints coincide");
    map.push_back(s);
  }
  return map;
}

void write_calib(const std::filesystem::path& path, const CameraCalib& c) {
  std::ofstream os = open_out(path, false);
  os << "fx " << fmt(c.fx) << "\nfy " << fmt(c.fy) << "\ncx " << fmt(c.cx) << "\ncy " << fmt(c.cy)
     << "\nk1 " << fmt(c.k1) << "\nk2 " << fmt(c.k2) << "\nw " << c.width << "\nh " << c.height
     << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

CameraCalib read_calib(const std::filesystem::path& path) {
  std::ifstream is = open_in(path, false);
  CameraCalib c;
  std::string line;
  int n = 0;
  unsigned seen = 0;
  while (std::getline(is, line)) {
    ++n;
    if (blank_or_comment(line)) continue;
    std::istringstream ls(line);
    std::string key;
    double v = 0.0;
    if (!(ls >> key >> v)) bad_line(path, n, "expected 'key value'");
    if (key == "fx") c.fx = v, seen |= 1;
    else if (key == "fy") c.fy = v, seen |= 2;
    else if (key == "cx") c.cx = v, seen |= 4;
    else if (key == "cy") c.cy = v, seen |= 8;
    else if (key == "k1") c.k1 = v, seen |= 16;
    else if (key == "k2") c.k2 = v, seen |= 32;
    else if (key == "w") c.width = static_cast<int>(v), seen |= 64;
    else if (key == "h") c.height = static_cast<int>(v), seen |= 128;
    else bad_line(path, n, "unknown key '" + key + "'");
  }
  if (seen != 255u) throw IoError(path.string() + ": calibration needs fx fy cx cy k1 k2 w h");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return c;
}

void write_trajectory(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& recs) {
  std::ofstream os = open_out(path, false);
  os << "# t_us rx ry rz qw qx qy qz [sx sy sz sphi stheta spsi]\n";
  for (const TrajectoryRecord& r : recs) {
    os << r.t_us << ' ' << fmt(r.position.x()) << ' ' << fmt(r.position.y()) << ' '
       << fmt(r.position.z()) << ' ' << fmt(r.rotation.w()) << ' ' << fmt(r.rotation.x()) << ' '
       << fmt(r.rotation.y()) << ' ' << fmt(r.rotation.z());
    if (r.sigma) {
      for (double s : *r.sigma) os << ' ' << fmt(s);
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path) {
  std::ifstream is = open_in(path, false);
  std::vector<TrajectoryRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (blank_or_comment(line)) continue;
    std::istringstream ls(line);
    TrajectoryRecord r;
    double qw, qx, qy, qz;
    if (!(ls >> r.t_us >> r.position.x() >> r.position.y() >> r.position.z() >> qw >> qx >> qy >> qz)) {
      bad_line(path, n, "expected 't_us rx ry rz qw qx qy qz'");
    }
    r.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
    if (std::abs(r.rotation.norm() - 1.0) > 1e-6) bad_line(path, n, "quaternion is not unit");
    std::array<double, 6> s{};
    int k = 0;
    while (k < 6 && (ls >> s[static_cast<std::size_t>(k)])) ++k;
    if (k == 6) r.sigma = s;
    else if (k != 0) bad_line(path, n, "expected 0 or 6 sigma columns");
    out.push_back(r);
  }
  return out;
}

std::vector<TrajectoryRecord> to_records(const std::vector<TruthRecord>& truth) {
  std::vector<TrajectoryRecord> out;
  out.reserve(truth.size());
  for (const TruthRecord& t : truth) out.push_back({t.t_us, t.position, t.rotation, std::nullopt});
  return out;
}

}  // namespace evtrack
