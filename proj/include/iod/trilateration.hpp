#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "iod/constants.hpp"
#include "iod/errors.hpp"
#include "iod/result.hpp"
#include "iod/rng.hpp"
#include "iod/scenario.hpp"

namespace iod {

/// Three monostatic ranges and range-rates with their noise levels.
struct RangeSet {
  std::array<EcefPosition, 3> station_positions;
  Eigen::Vector3d ranges = Eigen::Vector3d::Zero();
  Eigen::Vector3d range_rates = Eigen::Vector3d::Zero();
  double sigma_r = 0.0;
  double sigma_rdot = 0.0;
};

inline constexpr int kMaxGaussNewtonSteps = 10;

/// Range and range-rate noise equivalent to one delay / Doppler channel:
/// sigma_r = c sigma_t, sigma_rdot = c sqrt(scale) sigma_t / mean(fc).
inline RangeSet derive_ranges(const RadarNetwork& net, const StateVector& truth,
                              const NoiseModel& noise, std::uint64_t run_index) {
  if (net.M() < 3) {
    throw ValidationError("trilateration needs at least 3 transmitters, network has " +
                          std::to_string(net.M()));
  }
  double mean_fc = 0.0;
  for (const auto& t : net.transmitters) mean_fc += t.carrier_frequency_hz;
  mean_fc /= net.M();

  RangeSet rs;
  rs.sigma_r = kSpeedOfLight * noise.sigma_t;
  rs.sigma_rdot = kSpeedOfLight * noise.sigma_doppler() / mean_fc;
  auto gen = substream(noise.seed, run_index, "tri");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 3; ++i) {
    const EcefPosition& t = net.transmitters[i].position;
    const Eigen::Vector3d d = truth.position - t;
    const double r = d.norm();
    if (!(r > 0.0)) throw GeometryError("target coincides with transmitter " + std::to_string(i));
    rs.station_positions[i] = t;
    rs.ranges[i] = r;
    rs.range_rates[i] = d.dot(truth.velocity) / r;
  }
  if (noise.sigma_t > 0.0) {
    for (int i = 0; i < 3; ++i) rs.ranges[i] += rs.sigma_r * normal(gen);
    for (int i = 0; i < 3; ++i) rs.range_rates[i] += rs.sigma_rdot * normal(gen);
  }
  return rs;
}

/// Both roots of the three-sphere intersection. Throws when the spheres do
/// not meet.
inline std::array<Eigen::Vector3d, 2> sphere_intersections(const RangeSet& rs) {
  const auto& [p1, p2, p3] = rs.station_positions;
  const Eigen::Vector3d d21 = p2 - p1;
  const double d = d21.norm();
  const Eigen::Vector3d ex = d21 / d;
  const double i = ex.dot(p3 - p1);
  Eigen::Vector3d ey = p3 - p1 - i * ex;
  const double j = ey.norm();
  if (!(d > 0.0) || !(j > 1e-9 * d)) {
    throw GeometryError("trilateration stations are collinear");
  }
  ey /= j;
  const Eigen::Vector3d ez = ex.cross(ey);
  const double r1 = rs.ranges[0], r2 = rs.ranges[1], r3 = rs.ranges[2];
  const double x = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
  const double y = (r1 * r1 - r3 * r3 + i * i + j * j) / (2.0 * j) - i / j * x;
  const double z2 = r1 * r1 - x * x - y * y;
  if (!(z2 >= 0.0)) throw EstimationError("range spheres do not intersect");
  const double z = std::sqrt(z2);
  const Eigen::Vector3d base = p1 + x * ex + y * ey;
  return {base + z * ez, base - z * ez};
}

/// Prefers the root outside the Earth (geocentric radius above the equatorial
/// radius). If both are outside, the lower one; if neither, the higher one.
inline Eigen::Vector3d select_root(const std::array<Eigen::Vector3d, 2>& roots) {
  const double n0 = roots[0].norm();
  const double n1 = roots[1].norm();
  const bool out0 = n0 > wgs84::kSemiMajorAxis;
  const bool out1 = n1 > wgs84::kSemiMajorAxis;
  if (out0 != out1) return out0 ? roots[0] : roots[1];
  if (out0) return n0 <= n1 ? roots[0] : roots[1];
  return n0 >= n1 ? roots[0] : roots[1];
}

namespace detail {

inline Eigen::Matrix3d line_of_sight_rows(const RangeSet& rs, const Eigen::Vector3d& x,
                                          Eigen::Vector3d& ranges_at_x) {
  Eigen::Matrix3d rows;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d d = x - rs.station_positions[i];
    ranges_at_x[i] = d.norm();
    if (!(ranges_at_x[i] > 0.0)) throw GeometryError("position estimate at a station");
    rows.row(i) = d.transpose() / ranges_at_x[i];
  }
  return rows;
}

}  // namespace detail

/// Baseline estimator: closed-form sphere intersection refined by Gauss-Newton
/// on the range residuals, velocity from the line-of-sight system, and a
/// first-order covariance.
inline EstimateWithCovariance trilaterate(const RangeSet& rs) {
  if (!(rs.ranges.array() > 0.0).all()) throw ValidationError("ranges must be > 0");
  Eigen::Vector3d x = select_root(sphere_intersections(rs));
  const Eigen::Vector3d closed_form = x;

  Eigen::Vector3d r_at;
  Eigen::Matrix3d los = detail::line_of_sight_rows(rs, x, r_at);
  const Eigen::Vector3d closed_form_velocity = los.partialPivLu().solve(rs.range_rates);
  int steps = 0;
  for (; steps < kMaxGaussNewtonSteps; ++steps) {
    los = detail::line_of_sight_rows(rs, x, r_at);
    const Eigen::Vector3d step = los.partialPivLu().solve(rs.ranges - r_at);
    if (!step.allFinite()) throw EstimationError("trilateration Gauss-Newton step diverged");
    x += step;
    if (step.norm() <= 1e-12 * x.norm()) {
      ++steps;
      break;
    }
  }
  los = detail::line_of_sight_rows(rs, x, r_at);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd{los});
  const double cond = svd.singularValues()[0] / svd.singularValues()[2];
  if (!(cond < 1e12)) {
    throw GeometryError("line-of-sight vectors are coplanar (cond = " + std::to_string(cond) + ")");
  }
  const Eigen::PartialPivLU<Eigen::Matrix3d> lu(los);
  const Eigen::Vector3d v = lu.solve(rs.range_rates);

  // d(rho_i^T v)/dx = v^T (I - rho_i rho_i^T) / r_i
  Eigen::Matrix3d rate_wrt_pos;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d rho = los.row(i).transpose();
    rate_wrt_pos.row(i) = (v - rho * rho.dot(v)).transpose() / r_at[i];
  }
  const Eigen::Matrix3d los_inv = lu.inverse();
  Matrix6d k = Matrix6d::Zero();
  k.topLeftCorner<3, 3>() = los_inv;
  k.bottomLeftCorner<3, 3>() = -los_inv * rate_wrt_pos * los_inv;
  k.bottomRightCorner<3, 3>() = los_inv;
  Vector6d noise_var;
  noise_var << Eigen::Vector3d::Constant(rs.sigma_r * rs.sigma_r),
      Eigen::Vector3d::Constant(rs.sigma_rdot * rs.sigma_rdot);
  const Matrix6d sigma = k * noise_var.asDiagonal() * k.transpose();

  EstimateWithCovariance out;
  out.state = {x, v};
  out.stage1_state = {closed_form, closed_form_velocity};
  out.sigma = 0.5 * (sigma + sigma.transpose());
  out.diagnostics = {
      {"gauss_newton_steps", static_cast<double>(steps)},
      {"cond_line_of_sight", cond},
      {"range_residual_m", (rs.ranges - r_at).norm()},
  };
  return out;
}

}  // namespace iod
