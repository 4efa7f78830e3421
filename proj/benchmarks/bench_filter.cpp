#include <benchmark/benchmark.h>

#include <random>

#include "evtrack/harness.hpp"

using namespace evtrack;

namespace {

MotionModel model_arg(const benchmark::State& s) { return static_cast<MotionModel>(s.range(0)); }

FilterState moving_state(MotionModel m) {
  FilterState x = make_state(m, Vec3(0.01, -0.02, 0.03), exp_so3(Vec3(0.1, 0.2, -0.1)));
  if (x.twist) *x.twist = Twist{Vec3(0.3, -0.2, 0.1), Vec3(1.0, 2.0, -3.0)};
  if (x.accel) *x.accel = AccelBlock{Vec3(5, -3, 2), Vec3(20, -10, 30)};
  return x;
}

void BM_Propagate(benchmark::State& st) {
  const MotionModel m = model_arg(st);
  const FilterState x = moving_state(m);
  BlockCovariance P = BlockCovariance::initial(m);
  const NoiseParams noise;
  for (auto _ : st) {
    const FilterState y = predict_state(x, 1e-4);
    P = propagate_covariance(P, x, noise, 1e-4);
    benchmark::DoNotOptimize(y);
    benchmark::DoNotOptimize(P);
    P = BlockCovariance::initial(m);
  }
}
BENCHMARK(BM_Propagate)->Arg(0)->Arg(1)->Arg(2);

void BM_UpdateEvent(benchmark::State& st) {
  const MotionModel m = model_arg(st);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  PoseRow J;
  for (int i = 0; i < 6; ++i) J[i] = 100.0 * n(rng);
  FilterState x = moving_state(m);
  BlockCovariance P = BlockCovariance::initial(m);
  for (auto _ : st) {
    benchmark::DoNotOptimize(update_event(x, P, 0.3 * n(rng), J, 3.5, 2.0));
    if (P.dense()(0, 0) < 1e-8) P = BlockCovariance::initial(m);
  }
}
BENCHMARK(BM_UpdateEvent)->Arg(0)->Arg(1)->Arg(2);

// End-to-end window processing on a simulated hand-shake stream.
class WindowFixture : public benchmark::Fixture {
 public:
  void SetUp(const benchmark::State&) override {
    if (!sim.stream.events.empty()) return;
    cfg.scene.duration_s = 0.5;
    cfg.seed = 5;
    sim = simulate(cfg, cfg.seed);
    RunConfig rc = cfg;
    rc.init = sim.init;
    init = rc.initial_state();
    events.reserve(sim.stream.events.size());
    const UndistortLut lut(sim.scene.calib);
    for (const RawEvent& r : sim.stream.events) {
      if (auto p = lut.lookup(r.u, r.v)) events.push_back(Event{r.t_us, p->x(), p->y(), r.polarity});
    }
  }

  RunConfig cfg;
  Simulation sim;
  FilterState init;
  std::vector<Event> events;
};

BENCHMARK_DEFINE_F(WindowFixture, ProcessWindow)(benchmark::State& st) {
  TrackerConfig tc = cfg.tracker;
  tc.variant.model = model_arg(st);
  std::size_t processed = 0;
  for (auto _ : st) {
    st.PauseTiming();
    Tracker tracker(tc, sim.scene.map, sim.scene.calib, with_model(init, tc.variant.model));
    st.ResumeTiming();
    std::size_t i = 0;
    for (std::int64_t t = 0; t + 100 <= sim.duration_us; t += 100) {
      const std::size_t b = i;
      while (i < events.size() && events[i].t_us < t + 100) ++i;
      tracker.process_window(std::span<const Event>(events).subspan(b, i - b), t);
    }
    processed += i;
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(processed));
}
BENCHMARK_REGISTER_F(WindowFixture, ProcessWindow)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
