#pragma once

// Brute-force references shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "evtrack/camera.hpp"
#include "evtrack/matcher.hpp"

namespace evtrack::oracle {

/// Cells visited when sampling the segment every `step` pixels.
inline std::set<GridCell> dense_cells(const Vec2& a, const Vec2& b, int cols, int rows, int width,
                                      int height, double step = 0.05) {
  std::set<GridCell> out;
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int k = 0; k <= n; ++k) {
    const Vec2 p = a + (b - a) * (static_cast<double>(k) / n);
    int c = static_cast<int>(std::floor(p.x() * cols / width));
    int r = static_cast<int>(std::floor(p.y() * rows / height));
    out.insert({std::clamp(c, 0, cols - 1), std::clamp(r, 0, rows - 1)});
  }
  return out;
}

/// Length of the part of a-b inside a closed cell rectangle.
inline double cell_overlap(const Vec2& a, const Vec2& b, const GridCell& g, int cols, int rows,
                           int width, int height) {
  const double cw = static_cast<double>(width) / cols;
  const double ch = static_cast<double>(height) / rows;
  Vec2 p = a, q = b;
  if (!clip_segment(p, q, g.col * cw, g.row * ch, (g.col + 1) * cw, (g.row + 1) * ch)) return 0.0;
  return (q - p).norm();
}

/// Exhaustive matcher: every line is a candidate if its finite segment is
/// within beta; same ranking and conditions as the tessellated matcher.
inline std::optional<Match> exhaustive_match(const Event& e, std::span<const ProjectedLine> lines,
                                             const MatcherConfig& cfg) {
  struct Cand {
    double d;
    double z;
    int idx;
  };
  const Vec2 ep(e.u, e.v);
  std::vector<Cand> c;
  for (int i = 0; i < static_cast<int>(lines.size()); ++i) {
    const ProjectedLine& l = lines[i];
    // Two-point distance to the infinite line, independent of the homogeneous form.
    const Vec2 d = l.px2 - l.px1;
    const double cross = d.x() * (ep.y() - l.px1.y()) - d.y() * (ep.x() - l.px1.x());
    const double dist = std::abs(cross) / d.norm();
    // Distance to the finite segment.
    const double t = std::clamp((ep - l.px1).dot(d) / d.squaredNorm(), 0.0, 1.0);
    if ((l.px1 + t * d - ep).norm() > cfg.beta) continue;
    c.push_back({dist, point_line_distance(ep, l.line), i});
  }
  if (c.empty()) return std::nullopt;
  std::sort(c.begin(), c.end(), [&](const Cand& x, const Cand& y) {
    if (x.d != y.d) return x.d < y.d;
    return lines[x.idx].seg_id < lines[y.idx].seg_id;
  });
  if (!(c[0].d < cfg.alpha)) return std::nullopt;
  if (c.size() > 1 && !(c[1].d > cfg.beta)) return std::nullopt;
  const ProjectedLine& l = lines[c[0].idx];
  const Vec2 v1 = l.px2 - l.px1;
  const double t = v1.dot(ep - l.px1) / v1.dot(v1);
  if (!(t > 0.0 && t < 1.0)) return std::nullopt;
  return Match{c[0].idx, l.seg_id, c[0].z};
}

/// Image-plane line through two pixels, in the ProjectedLine layout.
inline ProjectedLine make_line(const Vec2& a, const Vec2& b, int id) {
  ProjectedLine l;
  l.u1 = Vec3(a.x(), a.y(), 1.0);
  l.u2 = Vec3(b.x(), b.y(), 1.0);
  l.line = l.u1.cross(l.u2);
  l.px1 = l.clip1 = a;
  l.px2 = l.clip2 = b;
  l.seg_id = id;
  return l;
}

}  // namespace evtrack::oracle
