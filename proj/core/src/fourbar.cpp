#include <algorithm>
#include <cmath>
#include <numbers>

#include "evtrack/simulator.hpp"

namespace evtrack {

namespace {

inline Vec2 unit(double a) { return Vec2(std::cos(a), std::sin(a)); }
inline Vec2 perp(const Vec2& v) { return Vec2(-v.y(), v.x()); }

// Wraps an angle difference to (-pi, pi].
inline double wrap(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

bool FourBarDims::is_grashof_crank_rocker() const {
  const double links[4] = {crank, coupler, rocker, ground};
  const double s = *std::min_element(links, links + 4);
  const double l = *std::max_element(links, links + 4);
  const double sum = crank + coupler + rocker + ground;
  return s > 0.0 && crank == s && s + l <= sum - s - l;
}

FourBarPose fourbar_pose(double crank_angle, const FourBarDims& d) {
  FourBarPose p;
  p.crank_pin = d.crank * unit(crank_angle);
  const Vec2 o4(d.ground, 0.0);
  const Vec2 diag = o4 - p.crank_pin;
  const double L = diag.norm();
  if (!(L <= d.coupler + d.rocker) || !(L >= std::abs(d.coupler - d.rocker)) || L == 0.0) {
    throw NoAssemblyConfiguration("four-bar: loop cannot close at this crank angle");
  }
  const double x = (L * L + d.coupler * d.coupler - d.rocker * d.rocker) / (2.0 * L);
  const double h = std::sqrt(std::max(d.coupler * d.coupler - x * x, 0.0));
  const Vec2 ex = diag / L;
  p.rocker_pin = p.crank_pin + x * ex + h * perp(ex);

  const Vec2 u = (p.rocker_pin - p.crank_pin) / d.coupler;
  p.point = p.crank_pin + d.point_along * u + d.point_across * perp(u);
  p.coupler_angle = std::atan2(u.y(), u.x());
  const Vec2 r = p.rocker_pin - o4;
  p.rocker_angle = std::atan2(r.y(), r.x());
  return p;
}

double loop_closure_residual(double crank_angle, const FourBarPose& p, const FourBarDims& d) {
  const Vec2 loop = d.crank * unit(crank_angle) + d.coupler * unit(p.coupler_angle) -
                    d.rocker * unit(p.rocker_angle) - Vec2(d.ground, 0.0);
  return loop.norm();
}

namespace {

struct PointDerivs {
  FourBarPose pose;
  Vec2 dp;    // d point / d crank
  Vec2 ddp;   // d^2 point / d crank^2
  double dth = 0.0;
  double ddth = 0.0;
};

PointDerivs point_derivatives(double phi, const FourBarDims& d) {
  constexpr double h = 1e-4;
  PointDerivs out;
  out.pose = fourbar_pose(phi, d);
  const FourBarPose a = fourbar_pose(phi - h, d);
  const FourBarPose b = fourbar_pose(phi + h, d);
  out.dp = (b.point - a.point) / (2.0 * h);
  out.ddp = (b.point - 2.0 * out.pose.point + a.point) / (h * h);
  const double dm = wrap(a.coupler_angle - out.pose.coupler_angle);
  const double dpl = wrap(b.coupler_angle - out.pose.coupler_angle);
  out.dth = (dpl - dm) / (2.0 * h);
  out.ddth = (dpl + dm) / (h * h);
  return out;
}

}  // namespace

FourBarEnvelope fourbar_envelope(const FourBarDims& dims, double rpm, int samples) {
  const double w = rpm * 2.0 * std::numbers::pi / 60.0;
  FourBarEnvelope env;
  Vec2 lo = Vec2::Constant(1e300);
  Vec2 hi = Vec2::Constant(-1e300);
  for (int i = 0; i < samples; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / samples;
    const PointDerivs pd = point_derivatives(phi, dims);
    lo = lo.cwiseMin(pd.pose.point);
    hi = hi.cwiseMax(pd.pose.point);
    env.peak_speed = std::max(env.peak_speed, pd.dp.norm() * w);
    env.peak_accel = std::max(env.peak_accel, pd.ddp.norm() * w * w);
    env.max_residual = std::max(env.max_residual, loop_closure_residual(phi, pd.pose, dims));
  }
  env.peak_to_peak = (hi - lo).maxCoeff();
  return env;
}

CrankMotion crank_motion(const FourBarTrajectory& fb, double t) {
  const double wmax = fb.rpm * 2.0 * std::numbers::pi / 60.0;
  const double T = fb.ramp_s;
  CrankMotion m;
  if (T > 0.0 && t < T) {
    const double tau = std::max(t, 0.0) / T;
    m.angle = wmax * T * (tau * tau * tau - 0.5 * tau * tau * tau * tau);
    m.rate = wmax * (3.0 * tau * tau - 2.0 * tau * tau * tau);
    m.accel = wmax * (6.0 * tau - 6.0 * tau * tau) / T;
  } else {
    m.angle = 0.5 * wmax * T + wmax * (t - T);
    m.rate = wmax;
    m.accel = 0.0;
  }
  return m;
}

void center_fourbar(FourBarTrajectory& fb) {
  Vec2 lo = Vec2::Constant(1e300);
  Vec2 hi = Vec2::Constant(-1e300);
  double alo = 1e300;
  double ahi = -1e300;
  constexpr int n = 3600;
  for (int i = 0; i < n; ++i) {
    const FourBarPose p = fourbar_pose(2.0 * std::numbers::pi * i / n, fb.dims);
    lo = lo.cwiseMin(p.point);
    hi = hi.cwiseMax(p.point);
    alo = std::min(alo, p.coupler_angle);
    ahi = std::max(ahi, p.coupler_angle);
  }
  fb.point_center = 0.5 * (lo + hi);
  fb.angle_center = 0.5 * (alo + ahi);
}

TrajectorySample sample_fourbar(const FourBarTrajectory& fb, double t) {
  const CrankMotion cm = crank_motion(fb, t);
  const PointDerivs pd = point_derivatives(cm.angle, fb.dims);
  const Mat3& E = fb.plane_rotation;
  auto embed = [&](const Vec2& v) -> Vec3 { return E * Vec3(v.x(), v.y(), 0.0); };

  TrajectorySample s;
  s.position = fb.standoff + embed(pd.pose.point - fb.point_center);
  s.velocity = embed(pd.dp * cm.rate);
  s.acceleration = embed(pd.ddp * cm.rate * cm.rate + pd.dp * cm.accel);
  const double psi = wrap(pd.pose.coupler_angle - fb.angle_center);
  s.rotation = E * Eigen::AngleAxisd(psi, Vec3::UnitZ()).toRotationMatrix();
  s.angular_velocity = Vec3(0.0, 0.0, pd.dth * cm.rate);
  s.angular_acceleration = Vec3(0.0, 0.0, pd.ddth * cm.rate * cm.rate + pd.dth * cm.accel);
  return s;
}

FourBarDims default_fourbar_dims() { return FourBarDims{}; }

FourBarTrajectory fourbar_preset(double rpm) {
  FourBarTrajectory fb;
  fb.dims = default_fourbar_dims();
  fb.rpm = rpm;
  fb.ramp_s = 2.0;
  fb.standoff = Vec3(0.0, 0.0, 0.20);
  center_fourbar(fb);
  return fb;
}

}  // namespace evtrack
