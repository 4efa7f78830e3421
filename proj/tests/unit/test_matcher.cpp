#include <gtest/gtest.h>

#include "evtrack/matcher.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace evtrack {
namespace {

using test::uni;

constexpr int W = 240, H = 180;

TEST(CellOf, HalfOpenAndClamped) {
  EXPECT_EQ(cell_of(0, 0, 16, 12, W, H), (GridCell{0, 0}));
  EXPECT_EQ(cell_of(14.999, 0, 16, 12, W, H), (GridCell{0, 0}));
  EXPECT_EQ(cell_of(15.0, 15.0, 16, 12, W, H), (GridCell{1, 1}));
  EXPECT_EQ(cell_of(240.0, 180.0, 16, 12, W, H), (GridCell{15, 11}));
  EXPECT_EQ(cell_of(-3.0, -1.0, 16, 12, W, H), (GridCell{0, 0}));
}

TEST(SegmentCells, InsideOneCell) {
  const auto c = segment_cells(Vec2(16, 16), Vec2(28, 20), 16, 12, W, H);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], (GridCell{1, 1}));
}

TEST(SegmentCells, HorizontalFullRow) {
  const auto c = segment_cells(Vec2(0.5, 100), Vec2(239.5, 100), 16, 12, W, H);
  ASSERT_EQ(c.size(), 16u);
  for (int k = 0; k < 16; ++k) EXPECT_EQ(c[k], (GridCell{k, 6}));
}

TEST(SegmentCells, WalksFromFirstToLastEndpoint) {
  const auto c = segment_cells(Vec2(200, 170), Vec2(3, 2), 16, 12, W, H);
  EXPECT_EQ(c.front(), cell_of(200, 170, 16, 12, W, H));
  EXPECT_EQ(c.back(), (GridCell{0, 0}));
}

// Every densely sampled cell is reported; every reported cell the sampling
// missed overlaps the segment by less than the sampling step. Path cost is
// bounded by the grid-line crossings plus one.
void check_against_dense(const Vec2& a, const Vec2& b, int cols, int rows) {
  constexpr double step = 0.05;
  const auto got = segment_cells(a, b, cols, rows, W, H);
  const std::set<GridCell> dense = oracle::dense_cells(a, b, cols, rows, W, H, step);
  const std::set<GridCell> set(got.begin(), got.end());
  ASSERT_EQ(set.size(), got.size()) << "duplicate cell";
  for (const GridCell& g : dense) ASSERT_TRUE(set.count(g)) << g.col << "," << g.row;
  for (const GridCell& g : set) {
    if (!dense.count(g)) ASSERT_LT(oracle::cell_overlap(a, b, g, cols, rows, W, H), step * 1.5);
  }
  const GridCell ca = cell_of(a.x(), a.y(), cols, rows, W, H);
  const GridCell cb = cell_of(b.x(), b.y(), cols, rows, W, H);
  ASSERT_LE(static_cast<int>(got.size()), std::abs(ca.col - cb.col) + std::abs(ca.row - cb.row) + 1);
}

TEST(SegmentCells, DenseSamplingOracle) {
  for (auto [cols, rows] : {std::pair{8, 6}, {16, 12}, {24, 18}}) {
    for (int i = 0; i < 1000; ++i) {
      check_against_dense(Vec2(uni(0, W), uni(0, H)), Vec2(uni(0, W), uni(0, H)), cols, rows);
    }
  }
}

TEST(SegmentCells, ExactCornerCrossing) {
  // Passes exactly through the grid corner (15, 15): the diagonal step.
  const auto c = segment_cells(Vec2(5, 5), Vec2(25, 25), 16, 12, W, H);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], (GridCell{0, 0}));
  EXPECT_EQ(c[1], (GridCell{1, 1}));
}

TEST(SegmentCells, AxisAlignedOnGridLine) {
  check_against_dense(Vec2(15, 3), Vec2(15, 170), 16, 12);
  check_against_dense(Vec2(3, 30), Vec2(200, 30), 16, 12);
}

TEST(BuildGrid, EmptyLines) {
  const TessellationGrid g = build_grid({}, MatcherConfig{}, W, H);
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) EXPECT_TRUE(g.cell(c, r).empty());
}

TEST(BuildGrid, DiagonalCorridor) {
  const std::vector<ProjectedLine> lines = {oracle::make_line(Vec2(10, 10), Vec2(230, 170), 0)};
  MatcherConfig cfg;
  const TessellationGrid g = build_grid(lines, cfg, W, H);
  const auto path = segment_cells(Vec2(10, 10), Vec2(230, 170), 16, 12, W, H);
  for (int r = 0; r < 12; ++r) {
    for (int c = 0; c < 16; ++c) {
      bool near = false;
      for (const GridCell& p : path) near |= std::abs(p.col - c) <= 1 && std::abs(p.row - r) <= 1;
      EXPECT_EQ(!g.cell(c, r).empty(), near) << c << "," << r;
    }
  }
}

TEST(BuildGrid, CrossingLinesShareCell) {
  const std::vector<ProjectedLine> lines = {oracle::make_line(Vec2(10, 90), Vec2(230, 90), 4),
                                            oracle::make_line(Vec2(120, 10), Vec2(120, 170), 9)};
  const TessellationGrid g = build_grid(lines, MatcherConfig{}, W, H);
  const auto cand = g.candidates(120, 90);
  EXPECT_EQ(std::vector<int>(cand.begin(), cand.end()), (std::vector<int>{0, 1}));
}

TEST(BuildGrid, RebuildClearsLists) {
  TessellationGrid g(16, 12, W, H);
  const std::vector<ProjectedLine> a = {oracle::make_line(Vec2(10, 90), Vec2(230, 90), 0)};
  g.rebuild(a, MatcherConfig{});
  EXPECT_FALSE(g.candidates(100, 90).empty());
  g.rebuild({}, MatcherConfig{});
  EXPECT_TRUE(g.candidates(100, 90).empty());
}

TEST(Skip, Policy) {
  MatcherConfig cfg;
  EXPECT_FALSE(should_skip(100, 100.0, cfg));
  EXPECT_FALSE(should_skip(0, 1e12, cfg));
  cfg.skip_lag_us = 1.0;
  EXPECT_FALSE(should_skip(100, 100.0, cfg));
  EXPECT_TRUE(should_skip(100, 102.0, cfg));
  EXPECT_FALSE(should_skip(100, 101.0, cfg));
}

TEST(Config, Validate) {
  MatcherConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.beta = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Match, LoneSegment) {
  const std::vector<ProjectedLine> lines = {oracle::make_line(Vec2(20, 50), Vec2(220, 50), 7)};
  const MatcherConfig cfg;
  const TessellationGrid g = build_grid(lines, cfg, W, H);
  const auto m = match_event(Event{0, 120, 51, 1}, g, lines, cfg);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->seg_id, 7);
  EXPECT_NEAR(std::abs(m->distance), 1.0, 1e-12);
}

TEST(Match, AmbiguousParallel) {
  const std::vector<ProjectedLine> lines = {oracle::make_line(Vec2(20, 50), Vec2(220, 50), 0),
                                            oracle::make_line(Vec2(20, 54), Vec2(220, 54), 1)};
  const MatcherConfig cfg;
  const TessellationGrid g = build_grid(lines, cfg, W, H);
  EXPECT_FALSE(match_event(Event{0, 120, 52, 1}, g, lines, cfg));
}

TEST(Match, BeyondEndpoint) {
  // Parameter 1.2 along a 10 px segment, 1 px off the line.
  const std::vector<ProjectedLine> lines = {oracle::make_line(Vec2(100, 50), Vec2(110, 50), 0)};
  const MatcherConfig cfg;
  const TessellationGrid g = build_grid(lines, cfg, W, H);
  EXPECT_FALSE(match_event(Event{0, 112, 51, 1}, g, lines, cfg));
  EXPECT_TRUE(match_event(Event{0, 105, 51, 1}, g, lines, cfg));
}

TEST(Match, TieBrokenByLowerSegmentId) {
  // Two lines at the same distance but farther apart than beta would allow
  // cannot tie; use collinear overlapping segments instead.
  const std::vector<ProjectedLine> lines = {oracle::make_line(Vec2(20, 50), Vec2(220, 50), 5),
                                            oracle::make_line(Vec2(20, 50), Vec2(220, 50), 2)};
  MatcherConfig cfg;
  const TessellationGrid g = build_grid(lines, cfg, W, H);
  // Identical lines are ambiguous under condition b.
  EXPECT_FALSE(match_event(Event{0, 120, 51, 1}, g, lines, cfg));
}

std::vector<ProjectedLine> random_lines(int n, std::mt19937_64& g) {
  std::uniform_real_distribution<double> U(-20.0, 260.0), V(-20.0, 200.0);
  std::vector<ProjectedLine> out;
  while (static_cast<int>(out.size()) < n) {
    const Vec2 a(U(g), V(g)), b(U(g), V(g));
    if ((b - a).norm() < 2.0) continue;
    out.push_back(oracle::make_line(a, b, static_cast<int>(out.size())));
  }
  return out;
}

TEST(Match, AgreesWithExhaustiveOracle) {
  std::mt19937_64 g(11);
  const MatcherConfig cfg;
  std::uniform_real_distribution<double> U(0.0, W), V(0.0, H);
  int matched = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto lines = random_lines(rep % 2 ? 20 : 200, g);
    const TessellationGrid grid = build_grid(lines, cfg, W, H);
    for (int i = 0; i < 1000; ++i) {
      // Half the events near a random line, half uniform.
      Event e{0, U(g), V(g), 1};
      if (i % 2) {
        const ProjectedLine& l = lines[i % lines.size()];
        const double t = std::uniform_real_distribution<double>(-0.1, 1.1)(g);
        const Vec2 p = l.px1 + t * (l.px2 - l.px1) +
                       std::uniform_real_distribution<double>(-4, 4)(g) *
                           Vec2(-(l.px2 - l.px1).y(), (l.px2 - l.px1).x()).normalized();
        if (p.x() < 0 || p.y() < 0 || p.x() >= W || p.y() >= H) continue;
        e.u = p.x();
        e.v = p.y();
      }
      const auto got = match_event(e, grid, lines, cfg);
      const auto ref = oracle::exhaustive_match(e, lines, cfg);
      ASSERT_EQ(got.has_value(), ref.has_value()) << e.u << "," << e.v;
      if (got) {
        ++matched;
        ASSERT_EQ(got->seg_id, ref->seg_id);
        // Soundness of the returned decision.
        const ProjectedLine& l = lines[got->line_index];
        ASSERT_LT(std::abs(got->distance), cfg.alpha);
        const double t = projection_parameter(Vec2(e.u, e.v), l.px1, l.px2);
        ASSERT_GT(t, 0.0);
        ASSERT_LT(t, 1.0);
      }
    }
  }
  EXPECT_GT(matched, 1000);
}

TEST(Match, DeterministicForIdenticalInput) {
  std::mt19937_64 g(5);
  const auto lines = random_lines(50, g);
  const MatcherConfig cfg;
  const TessellationGrid a = build_grid(lines, cfg, W, H);
  const TessellationGrid b = build_grid(lines, cfg, W, H);
  for (int i = 0; i < 1000; ++i) {
    const Event e{0, uni(0, W), uni(0, H), 1};
    const auto x = match_event(e, a, lines, cfg);
    const auto y = match_event(e, b, lines, cfg);
    ASSERT_EQ(x.has_value(), y.has_value());
    if (x) ASSERT_EQ(x->line_index, y->line_index);
  }
}

TEST(Geometry, SegmentDistanceAndParameter) {
  EXPECT_DOUBLE_EQ(segment_distance(Vec2(5, 3), Vec2(0, 0), Vec2(10, 0)), 3.0);
  EXPECT_DOUBLE_EQ(segment_distance(Vec2(13, 4), Vec2(0, 0), Vec2(10, 0)), 5.0);
  EXPECT_DOUBLE_EQ(projection_parameter(Vec2(12, 1), Vec2(0, 0), Vec2(10, 0)), 1.2);
}

}  // namespace
}  // namespace evtrack
