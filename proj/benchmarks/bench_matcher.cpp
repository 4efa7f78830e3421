#include <benchmark/benchmark.h>

#include <random>

#include "evtrack/matcher.hpp"

using namespace evtrack;

namespace {

std::vector<ProjectedLine> random_lines(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 240.0), V(0.0, 180.0);
  std::vector<ProjectedLine> out;
  while (static_cast<int>(out.size()) < n) {
    const Vec2 a(U(rng), V(rng)), b(U(rng), V(rng));
    if ((b - a).norm() < 5.0) continue;
    ProjectedLine l;
    l.u1 = Vec3(a.x(), a.y(), 1.0);
    l.u2 = Vec3(b.x(), b.y(), 1.0);
    l.line = l.u1.cross(l.u2);
    l.px1 = l.clip1 = a;
    l.px2 = l.clip2 = b;
    l.seg_id = static_cast<int>(out.size());
    out.push_back(l);
  }
  return out;
}

void BM_BuildGrid(benchmark::State& st) {
  std::mt19937_64 rng(1);
  const auto lines = random_lines(static_cast<int>(st.range(0)), rng);
  const MatcherConfig cfg;
  TessellationGrid grid(cfg.grid_cols, cfg.grid_rows, 240, 180);
  for (auto _ : st) {
    grid.rebuild(lines, cfg);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_BuildGrid)->Arg(20)->Arg(200);

void BM_MatchEvent(benchmark::State& st) {
  std::mt19937_64 rng(2);
  const auto lines = random_lines(static_cast<int>(st.range(0)), rng);
  const MatcherConfig cfg;
  const TessellationGrid grid = build_grid(lines, cfg, 240, 180);
  std::uniform_real_distribution<double> U(0.0, 240.0), V(0.0, 180.0);
  std::vector<Event> events(4096);
  for (Event& e : events) e = Event{0, U(rng), V(rng), 1};
  std::size_t i = 0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(match_event(events[i++ & 4095], grid, lines, cfg));
  }
}
BENCHMARK(BM_MatchEvent)->Arg(20)->Arg(200);

void BM_SegmentCells(benchmark::State& st) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 240.0), V(0.0, 180.0);
  std::vector<GridCell> out;
  for (auto _ : st) {
    segment_cells(Vec2(U(rng), V(rng)), Vec2(U(rng), V(rng)), 16, 12, 240, 180, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_SegmentCells);

}  // namespace
