#pragma once

// Test-only helpers: random scenario generation and independent oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <random>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>

#include "iod/geodesy.hpp"
#include "iod/scenario.hpp"

namespace iod::fixtures {

inline constexpr double kEarthMu = 3.986004418e14;  // m^3/s^2

inline std::filesystem::path source_dir() {
  if (const char* env = std::getenv("IOD_SOURCE_DIR")) return env;
#ifdef IOD_SOURCE_DIR
  return IOD_SOURCE_DIR;
#else
  return std::filesystem::current_path();
#endif
}

inline std::filesystem::path reference_scenario_path() { return source_dir() / "scenarios" / "reference.json"; }

/// Three transmitters and five receivers scattered over a regional patch, target
/// 200-2000 km above the patch on a near-circular LEO velocity.
inline Scenario random_leo_scenario(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double lat0 = 60.0 * u(gen);
  const double lon0 = 170.0 * u(gen);
  auto site = [&](double spread) {
    return GeodeticCoordinate{std::clamp(lat0 + spread * u(gen), -89.0, 89.0),
                              std::remainder(lon0 + spread * u(gen), 360.0), 0.0};
  };
  Scenario s;
  for (int i = 0; i < 3; ++i) {
    s.network.transmitters.push_back({geodetic_to_ecef(site(8.0)), 1.0e9 + 0.5e9 * (u(gen) + 1.0) / 2});
  }
  for (int j = 0; j < 5; ++j) s.network.receivers.push_back(geodetic_to_ecef(site(8.0)));

  GeodeticCoordinate sub = site(10.0);
  sub.altitude_m = 200e3 + 1800e3 * (u(gen) + 1.0) / 2.0;
  s.target.position = geodetic_to_ecef(sub);
  const Eigen::Vector3d up = s.target.position.normalized();
  Eigen::Vector3d dir(u(gen), u(gen), u(gen));
  dir = (dir - up * up.dot(dir)).normalized();
  const double speed = std::sqrt(kEarthMu / s.target.position.norm());
  s.target.velocity = speed * dir + 100.0 * u(gen) * up;
  s.noise.seed = seed;
  return s;
}

/// Generic iterative minimizer of ||M y - r||^2 (CG on the normal equations,
/// Jacobi preconditioned) in extended precision.
inline Eigen::VectorXd iterative_least_squares(const Eigen::MatrixXd& m, const Eigen::VectorXd& r) {
  using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  const MatL ml = m.cast<long double>();
  const VecL rl = r.cast<long double>();
  Eigen::LeastSquaresConjugateGradient<MatL> solver;
  solver.setTolerance(1e-18L);
  solver.setMaxIterations(100000);
  solver.compute(ml);
  const VecL y = solver.solve(rl);
  return y.cast<double>();
}

inline bool is_symmetric_psd(const Eigen::MatrixXd& m, double rel_tol = 1e-9) {
  if ((m - m.transpose()).norm() > 1e-12 * m.norm()) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  return eig.eigenvalues().minCoeff() >= -rel_tol * std::max(m.trace(), 0.0);
}

}  // namespace iod::fixtures
