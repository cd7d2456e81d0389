#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "iod/constants.hpp"
#include "iod/errors.hpp"
#include "iod/measurement.hpp"
#include "iod/scenario.hpp"

namespace iod {

/// Partials of the stacked (delay, Doppler) model with respect to (x, v).
inline Eigen::MatrixXd measurement_jacobian(const RadarNetwork& net, const StateVector& state) {
  const int mn = net.pair_count();
  const Eigen::Vector3d& x = state.position;
  const Eigen::Vector3d& v = state.velocity;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * mn, 6);
  for (int i = 0; i < net.M(); ++i) {
    const Eigen::Vector3d dt = x - net.transmitters[i].position;
    const double rt = dt.norm();
    if (!(rt > 0.0)) throw GeometryError("target coincides with transmitter " + std::to_string(i));
    const Eigen::Vector3d rho_t = dt / rt;
    const double fc_over_c = net.transmitters[i].carrier_frequency_hz / kSpeedOfLight;
    for (int j = 0; j < net.N(); ++j) {
      const Eigen::Vector3d ds = x - net.receivers[j];
      const double rs = ds.norm();
      if (!(rs > 0.0)) throw GeometryError("target coincides with receiver " + std::to_string(j));
      const Eigen::Vector3d rho_s = ds / rs;
      const int k = net.pair_index(i, j);
      const Eigen::Vector3d rho_sum = rho_t + rho_s;
      J.block<1, 3>(k, 0) = rho_sum.transpose() / kSpeedOfLight;
      // v^T (I - rho rho^T) / r for each leg
      const Eigen::Vector3d dpos =
          (v - rho_t * rho_t.dot(v)) / rt + (v - rho_s * rho_s.dot(v)) / rs;
      J.block<1, 3>(mn + k, 0) = fc_over_c * dpos.transpose();
      J.block<1, 3>(mn + k, 3) = fc_over_c * rho_sum.transpose();
    }
  }
  return J;
}

struct FisherInformation {
  Matrix6d matrix = Matrix6d::Zero();
  Eigen::MatrixXd jacobian;
};

/// J^T Q^{-1} J for the given covariance diagonal.
inline FisherInformation fisher_information(const RadarNetwork& net, const StateVector& state,
                                            const Eigen::VectorXd& q_diag) {
  FisherInformation fim;
  fim.jacobian = measurement_jacobian(net, state);
  const Eigen::MatrixXd wj = q_diag.cwiseSqrt().cwiseInverse().asDiagonal() * fim.jacobian;
  fim.matrix = wj.transpose() * wj;
  return fim;
}

struct CrlbResult {
  double position_bound_m = 0.0;
  double velocity_bound_mps = 0.0;
  Matrix6d inverse_fim = Matrix6d::Zero();
};

/// Cramer-Rao bound at the true state. Bounds are sqrt(trace) of the position
/// and velocity blocks of the inverse FIM, i.e. directly comparable to RMSE.
inline CrlbResult crlb(const RadarNetwork& net, const StateVector& state,
                       const NoiseModel& noise) {
  // Evaluate at unit delay sigma; the bound scales linearly with sigma_t.
  NoiseModel unit = noise;
  unit.sigma_t = 1.0;
  const FisherInformation fim = fisher_information(net, state, q_alpha_diag(unit, net.pair_count()));

  const Vector6d scale = fim.matrix.diagonal().cwiseSqrt();
  if (!(scale.array() > 0.0).all()) {
    int k = 0;
    scale.minCoeff(&k);
    throw EstimationError("Fisher information singular: no information on state component " +
                          std::to_string(k));
  }
  const Matrix6d equilibrated =
      scale.cwiseInverse().asDiagonal() * fim.matrix * scale.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(equilibrated);
  const auto& ev = eig.eigenvalues();
  if (!(ev[0] > 1e-14 * ev[5])) {
    const Vector6d null_dir = (scale.cwiseInverse().asDiagonal() * eig.eigenvectors().col(0)).normalized();
    std::ostringstream msg;
    msg << "Fisher information singular; null direction (x, v) = [" << null_dir.transpose() << "]";
    throw EstimationError(msg.str());
  }
  const Matrix6d unit_inverse = scale.cwiseInverse().asDiagonal() *
                                equilibrated.ldlt().solve(Matrix6d::Identity()) *
                                scale.cwiseInverse().asDiagonal();

  CrlbResult out;
  const double var_t = noise.sigma_t * noise.sigma_t;
  out.inverse_fim = var_t * 0.5 * (unit_inverse + unit_inverse.transpose());
  out.position_bound_m = noise.sigma_t * std::sqrt(unit_inverse.topLeftCorner<3, 3>().trace());
  out.velocity_bound_mps = noise.sigma_t * std::sqrt(unit_inverse.bottomRightCorner<3, 3>().trace());
  return out;
}

}  // namespace iod
