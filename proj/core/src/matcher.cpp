#include "evtrack/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evtrack {

void MatcherConfig::validate() const {
  if (!(alpha > 0.0) || !(beta >= alpha)) {
    throw std::invalid_argument("matcher: require beta >= alpha > 0");
  }
  if (grid_cols <= 0 || grid_rows <= 0) throw std::invalid_argument("matcher: grid must be non-empty");
  if (!(skip_lag_us >= 0.0)) throw std::invalid_argument("matcher: skip lag must be >= 0");
}

GridCell cell_of(double u, double v, int cols, int rows, int width, int height) {
  const int c = static_cast<int>(std::floor(u * cols / width));
  const int r = static_cast<int>(std::floor(v * rows / height));
  return GridCell{std::clamp(c, 0, cols - 1), std::clamp(r, 0, rows - 1)};
}

void segment_cells(const Vec2& a, const Vec2& b, int cols, int rows, int width, int height,
                   std::vector<GridCell>& out) {
  const double cw = static_cast<double>(width) / cols;
  const double ch = static_cast<double>(height) / rows;

  int cu = static_cast<int>(std::floor(a.x() * cols / width));
  int cv = static_cast<int>(std::floor(a.y() * rows / height));
  const int eu = static_cast<int>(std::floor(b.x() * cols / width));
  const int ev = static_cast<int>(std::floor(b.y() * rows / height));

  const double dx = b.x() - a.x();
  const double dy = b.y() - a.y();
  const int su = eu > cu ? 1 : -1;
  const int sv = ev > cv ? 1 : -1;
  int nu = std::abs(eu - cu);
  int nv = std::abs(ev - cv);

  // Parameter along a->b of the next vertical / horizontal grid line.
  auto next_u = [&](int c) {
    const double edge = (su > 0 ? c + 1 : c) * cw;
    return (edge - a.x()) / dx;
  };
  auto next_v = [&](int c) {
    const double edge = (sv > 0 ? c + 1 : c) * ch;
    return (edge - a.y()) / dy;
  };
  double tu = nu > 0 ? next_u(cu) : 2.0;
  double tv = nv > 0 ? next_v(cv) : 2.0;

  out.clear();
  out.reserve(static_cast<std::size_t>(nu + nv + 1));
  auto emit = [&](int c, int r) {
    const GridCell g{std::clamp(c, 0, cols - 1), std::clamp(r, 0, rows - 1)};
    if (out.empty() || !(out.back() == g)) out.push_back(g);
  };

  emit(cu, cv);
  while (nu > 0 || nv > 0) {
    const bool corner = nu > 0 && nv > 0 && tu == tv;
    const bool step_u = corner || (nu > 0 && (nv == 0 || tu < tv));
    const bool step_v = corner || !step_u;
    if (step_u) {
      cu += su;
      --nu;
      tu = nu > 0 ? next_u(cu) : 2.0;
    }
    if (step_v) {
      cv += sv;
      --nv;
      tv = nv > 0 ? next_v(cv) : 2.0;
    }
    emit(cu, cv);
  }
}

std::vector<GridCell> segment_cells(const Vec2& a, const Vec2& b, int cols, int rows, int width,
                                    int height) {
  std::vector<GridCell> out;
  segment_cells(a, b, cols, rows, width, height, out);
  return out;
}

// ---------------------------------------------------------------------------

TessellationGrid::TessellationGrid(int cols, int rows, int width, int height)
    : cols_(cols), rows_(rows), width_(width), height_(height),
      cells_(static_cast<std::size_t>(cols) * rows),
      stamp_(static_cast<std::size_t>(cols) * rows, 0) {}

void TessellationGrid::clear() {
  for (auto& c : cells_) c.clear();
}

void TessellationGrid::rebuild(std::span<const ProjectedLine> lines, const MatcherConfig& cfg) {
  clear();
  const double cw = static_cast<double>(width_) / cols_;
  const double ch = static_cast<double>(height_) / rows_;
  const int radius =
      cfg.dilate ? std::max(1, static_cast<int>(std::ceil(cfg.beta / std::min(cw, ch)))) : 0;
  // Points within beta of the image can still be the closest point to an
  // in-image event, so registration uses a margin of beta.
  const double margin = cfg.dilate ? cfg.beta : 0.0;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    Vec2 a = lines[i].px1;
    Vec2 b = lines[i].px2;
    if (!clip_segment(a, b, -margin, -margin, width_ + margin, height_ + margin)) continue;
    ++generation_;
    if (generation_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0u);
      generation_ = 1;
    }
    segment_cells(a, b, cols_, rows_, width_, height_, path_);
    for (const GridCell& g : path_) {
      const int r0 = std::max(0, g.row - radius);
      const int r1 = std::min(rows_ - 1, g.row + radius);
      const int c0 = std::max(0, g.col - radius);
      const int c1 = std::min(cols_ - 1, g.col + radius);
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const std::size_t k = static_cast<std::size_t>(r) * cols_ + c;
          if (stamp_[k] == generation_) continue;
          stamp_[k] = generation_;
          cells_[k].push_back(static_cast<int>(i));
        }
      }
    }
  }
}

TessellationGrid build_grid(std::span<const ProjectedLine> lines, const MatcherConfig& cfg,
                            int width, int height) {
  TessellationGrid g(cfg.grid_cols, cfg.grid_rows, width, height);
  g.rebuild(lines, cfg);
  return g;
}

// ---------------------------------------------------------------------------

double projection_parameter(const Vec2& e, const Vec2& a, const Vec2& b) {
  const Vec2 v1 = b - a;
  const Vec2 v2 = e - a;
  return v1.dot(v2) / v1.dot(v1);
}

double segment_distance(const Vec2& e, const Vec2& a, const Vec2& b) {
  const Vec2 v1 = b - a;
  const double len2 = v1.dot(v1);
  const double t = len2 > 0.0 ? std::clamp(v1.dot(e - a) / len2, 0.0, 1.0) : 0.0;
  return (e - (a + t * v1)).norm();
}

std::optional<Match> match_event(const Event& e, const TessellationGrid& grid,
                                 std::span<const ProjectedLine> lines, const MatcherConfig& cfg) {
  const Vec2 ep(e.u, e.v);
  int best = -1;
  int second = -1;
  double d_best = 0.0;
  double d_second = 0.0;
  double z_best = 0.0;

  auto closer = [&](double d, int idx, double d_ref, int ref) {
    return d < d_ref || (d == d_ref && lines[idx].seg_id < lines[ref].seg_id);
  };

  for (const int idx : grid.candidates(e.u, e.v)) {
    const ProjectedLine& pl = lines[idx];
    const Vec3& l = pl.line;
    const double z = (ep.x() * l.x() + ep.y() * l.y() + l.z()) / std::sqrt(l.x() * l.x() + l.y() * l.y());
    const double d = std::abs(z);
    if (d > cfg.beta) continue;
    if (segment_distance(ep, pl.px1, pl.px2) > cfg.beta) continue;
    if (best < 0 || closer(d, idx, d_best, best)) {
      second = best;
      d_second = d_best;
      best = idx;
      d_best = d;
      z_best = z;
    } else if (second < 0 || closer(d, idx, d_second, second)) {
      second = idx;
      d_second = d;
    }
  }

  if (best < 0) return std::nullopt;
  if (!(d_best < cfg.alpha)) return std::nullopt;
  if (second >= 0 && !(d_second > cfg.beta)) return std::nullopt;
  const double t = projection_parameter(ep, lines[best].px1, lines[best].px2);
  if (!(t > 0.0 && t < 1.0)) return std::nullopt;
  return Match{best, lines[best].seg_id, z_best};
}

}  // namespace evtrack
