#include "evtrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace evtrack {

Vec3 euler_zyx(const Mat3& R) {
  const double phi = std::atan2(R(2, 1), R(2, 2));
  const double theta = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  const double psi = std::atan2(R(1, 0), R(0, 0));
  return Vec3(phi, theta, psi);
}

std::vector<AlignedError> align(std::span<const TrajectoryRecord> estimate,
                                std::span<const TrajectoryRecord> truth, double tolerance_us) {
  std::vector<AlignedError> out;
  if (truth.empty() || estimate.empty()) throw NoOverlap("evaluate: empty trajectory");
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return truth[a].t_us < truth[b].t_us; });

  out.reserve(estimate.size());
  for (const TrajectoryRecord& e : estimate) {
    const auto it = std::lower_bound(order.begin(), order.end(), e.t_us,
                                     [&](std::size_t i, std::int64_t t) { return truth[i].t_us < t; });
    const TrajectoryRecord* best = nullptr;
    double best_d = 0.0;
    for (auto c : {it, it == order.begin() ? order.end() : it - 1}) {
      if (c == order.end()) continue;
      const double d = std::abs(static_cast<double>(truth[*c].t_us - e.t_us));
      if (!best || d < best_d) {
        best = &truth[*c];
        best_d = d;
      }
    }
    if (!best || best_d > tolerance_us) continue;

    const Mat3 Rt = best->rotation.normalized().toRotationMatrix();
    const Mat3 Re = e.rotation.normalized().toRotationMatrix();
    AlignedError a;
    a.t_us = e.t_us;
    a.position = e.position - best->position;
    a.euler = euler_zyx(Rt.transpose() * Re);
    a.theta = detail::log_unchecked(Re.transpose() * Rt);
    a.sigma = e.sigma;
    out.push_back(a);
  }
  if (out.empty()) throw NoOverlap("evaluate: estimate and truth do not overlap in time");
  return out;
}

double EvalReport::rmse_pos_norm() const {
  return std::sqrt(rmse_pos[0] * rmse_pos[0] + rmse_pos[1] * rmse_pos[1] + rmse_pos[2] * rmse_pos[2]);
}

namespace {

struct RunSums {
  std::array<double, 6> sq{};
  std::size_t n = 0;
  const std::vector<AlignedError>* run = nullptr;
};

}  // namespace

EvalReport evaluate_runs(std::span<const std::vector<AlignedError>> runs) {
  EvalReport rep;
  rep.runs = runs.size();
  if (runs.empty()) return rep;

  // Canonical order so floating-point accumulation does not depend on the
  // order the runs were supplied in.
  std::vector<RunSums> sums(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    sums[r].run = &runs[r];
    for (const AlignedError& a : runs[r]) {
      for (int i = 0; i < 3; ++i) {
        sums[r].sq[static_cast<std::size_t>(i)] += a.position[i] * a.position[i];
        sums[r].sq[static_cast<std::size_t>(3 + i)] += a.euler[i] * a.euler[i];
      }
    }
    sums[r].n = runs[r].size();
  }
  std::sort(sums.begin(), sums.end(), [](const RunSums& a, const RunSums& b) {
    if (a.sq != b.sq) return a.sq < b.sq;
    return a.n < b.n;
  });

  std::array<double, 6> total{};
  std::size_t count = 0;
  for (const RunSums& s : sums) {
    for (std::size_t i = 0; i < 6; ++i) total[i] += s.sq[i];
    count += s.n;
  }
  if (count == 0) return rep;
  for (std::size_t i = 0; i < 3; ++i) {
    rep.rmse_pos[i] = std::sqrt(total[i] / static_cast<double>(count));
    rep.rmse_rot[i] = std::sqrt(total[3 + i] / static_cast<double>(count));
  }
  rep.windows = count / runs.size();

  struct Acc {
    std::array<double, 6> err{};
    std::array<double, 6> var{};
    int n = 0;
  };
  std::map<std::int64_t, Acc> per_window;
  bool all_sigma = true;
  for (const RunSums& s : sums) {
    for (const AlignedError& a : *s.run) {
      if (!a.sigma) {
        all_sigma = false;
        continue;
      }
      Acc& acc = per_window[a.t_us];
      for (int i = 0; i < 3; ++i) {
        acc.err[static_cast<std::size_t>(i)] += a.position[i] * a.position[i];
        acc.err[static_cast<std::size_t>(3 + i)] += a.theta[i] * a.theta[i];
      }
      for (std::size_t i = 0; i < 6; ++i) acc.var[i] += (*a.sigma)[i] * (*a.sigma)[i];
      ++acc.n;
    }
  }
  if (all_sigma && !per_window.empty()) {
    std::array<std::size_t, 6> under{};
    for (const auto& [t, acc] : per_window) {
      for (std::size_t i = 0; i < 6; ++i) {
        // sqrt(mean e^2) < 2 sqrt(mean sigma^2)
        if (acc.err[i] < 4.0 * acc.var[i]) ++under[i];
      }
    }
    for (std::size_t i = 0; i < 6; ++i) {
      rep.coverage[i] = 100.0 * static_cast<double>(under[i]) / static_cast<double>(per_window.size());
    }
    rep.has_coverage = true;
  }
  return rep;
}

EvalReport evaluate(std::span<const TrajectoryRecord> estimate,
                    std::span<const TrajectoryRecord> truth, double tolerance_us) {
  const std::vector<AlignedError> a = align(estimate, truth, tolerance_us);
  return evaluate_runs(std::span<const std::vector<AlignedError>>(&a, 1));
}

std::string format_report(const EvalReport& r) {
  char buf[512];
  std::string s;
  std::snprintf(buf, sizeof buf, "runs %zu, windows %zu\n", r.runs, r.windows);
  s += buf;
  std::snprintf(buf, sizeof buf, "rmse_pos_m    x %.6g  y %.6g  z %.6g\n", r.rmse_pos[0],
                r.rmse_pos[1], r.rmse_pos[2]);
  s += buf;
  std::snprintf(buf, sizeof buf, "rmse_rot_rad  phi %.6g  theta %.6g  psi %.6g\n", r.rmse_rot[0],
                r.rmse_rot[1], r.rmse_rot[2]);
  s += buf;
  if (r.has_coverage) {
    std::snprintf(buf, sizeof buf,
                  "coverage_2sigma_pct  x %.2f  y %.2f  z %.2f  rx %.2f  ry %.2f  rz %.2f\n",
                  r.coverage[0], r.coverage[1], r.coverage[2], r.coverage[3], r.coverage[4],
                  r.coverage[5]);
    s += buf;
  }
  if (r.t_proc_us) {
    std::snprintf(buf, sizeof buf, "t_proc_us %.4g\n", *r.t_proc_us);
    s += buf;
  }
  if (r.processed_pct) {
    std::snprintf(buf, sizeof buf, "n_events_pct %.2f\n", *r.processed_pct);
    s += buf;
  }
  return s;
}

}  // namespace evtrack
