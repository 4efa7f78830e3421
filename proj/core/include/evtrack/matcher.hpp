#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "evtrack/camera.hpp"

namespace evtrack {

struct MatcherConfig {
  double alpha = 2.5;  // px, accept threshold on the closest distance
  double beta = 3.5;   // px, ambiguity threshold on the second closest
  int grid_cols = 16;
  int grid_rows = 12;
  /// Events lagging the processing clock by more than this (us) are skipped.
  double skip_lag_us = std::numeric_limits<double>::infinity();
  /// Register each line in the neighbouring cells too. Required for the
  /// tessellated matcher to agree with an exhaustive search.
  bool dilate = true;

  void validate() const;
};

struct GridCell {
  int col = 0;
  int row = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
  friend auto operator<=>(const GridCell&, const GridCell&) = default;
};

/// Cell of a pixel with half-open cells [k w/m, (k+1) w/m), clamped to the grid.
GridCell cell_of(double u, double v, int cols, int rows, int width, int height);

/**
 * Cells crossed by the pixel segment a-b, walking grid-line intersections
 * from the cell of `a` to the cell of `b`. Endpoints may lie slightly
 * outside the image; cell indices are clamped. The number of cells returned
 * never exceeds the horizontal plus vertical crossings plus one.
 */
std::vector<GridCell> segment_cells(const Vec2& a, const Vec2& b, int cols, int rows, int width,
                                    int height);
/// Same, writing into `out` (cleared first).
void segment_cells(const Vec2& a, const Vec2& b, int cols, int rows, int width, int height,
                   std::vector<GridCell>& out);

/// Per-window image tessellation; each cell lists indices into the window's
/// ProjectedLine array.
class TessellationGrid {
 public:
  TessellationGrid() = default;
  TessellationGrid(int cols, int rows, int width, int height);

  /// Clears all lists and registers `lines`.
  void rebuild(std::span<const ProjectedLine> lines, const MatcherConfig& cfg);
  void clear();

  std::span<const int> candidates(double u, double v) const {
    const GridCell c = cell_of(u, v, cols_, rows_, width_, height_);
    return cells_[static_cast<std::size_t>(c.row) * cols_ + c.col];
  }
  std::span<const int> cell(int col, int row) const {
    return cells_[static_cast<std::size_t>(row) * cols_ + col];
  }

  int cols() const { return cols_; }
  int rows() const { return rows_; }
  int width() const { return width_; }
  int height() const { return height_; }

 private:
  int cols_ = 0;
  int rows_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::vector<int>> cells_;
  std::vector<std::uint32_t> stamp_;
  std::vector<GridCell> path_;
  std::uint32_t generation_ = 0;
};

TessellationGrid build_grid(std::span<const ProjectedLine> lines, const MatcherConfig& cfg,
                            int width, int height);

/// True iff the event lags the processing clock by more than skip_lag_us.
inline bool should_skip(std::int64_t event_ts_us, double processing_clock_us,
                        const MatcherConfig& cfg) {
  return processing_clock_us - static_cast<double>(event_ts_us) > cfg.skip_lag_us;
}

struct Match {
  int line_index = -1;  // index into the window's line array
  int seg_id = -1;
  double distance = 0.0;  // signed, px
};

/// Euclidean distance from a pixel to the finite segment a-b.
double segment_distance(const Vec2& e, const Vec2& a, const Vec2& b);

/// Projection parameter of e onto a-b, v1.v2 / v1.v1 with v1 = b - a, v2 = e - a.
double projection_parameter(const Vec2& e, const Vec2& a, const Vec2& b);

/**
 * Associates an event with one projected line.
 *
 * Candidates are the lines registered in the event's cell whose finite
 * segment passes within beta of the event, ranked by unsigned line distance
 * (ties to the lower segment id). The closest is accepted iff
 *   a) its distance is below alpha,
 *   b) the second closest (if any) is farther than beta,
 *   c) the event projects strictly between the segment endpoints.
 */
std::optional<Match> match_event(const Event& e, const TessellationGrid& grid,
                                 std::span<const ProjectedLine> lines, const MatcherConfig& cfg);

}  // namespace evtrack
