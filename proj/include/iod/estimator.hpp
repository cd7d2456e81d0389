#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iod/constants.hpp"
#include "iod/errors.hpp"
#include "iod/linalg.hpp"
#include "iod/measurement.hpp"
#include "iod/result.hpp"
#include "iod/scenario.hpp"

namespace iod {

/// Stage-1 unknown: position, velocity, transmitter ranges gamma_i and
/// transmitter range-rates beta_i. Stacked as (x, v, gamma, beta).
struct AugmentedState {
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;

  [[nodiscard]] int M() const { return static_cast<int>(gamma.size()); }

  [[nodiscard]] Eigen::VectorXd stacked() const {
    Eigen::VectorXd y(6 + 2 * M());
    y << x, v, gamma, beta;
    return y;
  }

  static AugmentedState from_stacked(const Eigen::VectorXd& y, int m) {
    AugmentedState a;
    a.x = y.segment<3>(0);
    a.v = y.segment<3>(3);
    a.gamma = y.segment(6, m);
    a.beta = y.segment(6 + m, m);
    return a;
  }

  /// Exact augmented vector implied by a state.
  static AugmentedState from_state(const RadarNetwork& net, const StateVector& s) {
    AugmentedState a;
    a.x = s.position;
    a.v = s.velocity;
    a.gamma.resize(net.M());
    a.beta.resize(net.M());
    for (int i = 0; i < net.M(); ++i) {
      const Eigen::Vector3d d = s.position - net.transmitters[i].position;
      a.gamma[i] = d.norm();
      a.beta[i] = d.dot(s.velocity) / a.gamma[i];
    }
    return a;
  }

  [[nodiscard]] StateVector state() const { return {x, v}; }

  /// max_i |gamma_i - ||x - t_i|||
  [[nodiscard]] double gamma_inconsistency(const RadarNetwork& net) const {
    double worst = 0.0;
    for (int i = 0; i < M(); ++i) {
      worst = std::max(worst, std::abs(gamma[i] - (x - net.transmitters[i].position).norm()));
    }
    return worst;
  }

  /// max_i |beta_i - rho_i^T v|
  [[nodiscard]] double beta_inconsistency(const RadarNetwork& net) const {
    double worst = 0.0;
    for (int i = 0; i < M(); ++i) {
      const Eigen::Vector3d d = x - net.transmitters[i].position;
      worst = std::max(worst, std::abs(beta[i] - d.dot(v) / d.norm()));
    }
    return worst;
  }
};

struct LinearSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

/// Pseudo-linear stage-1 system b ~ A y, rows (delay pairs, Doppler pairs),
/// columns (x, v, gamma, beta).
inline LinearSystem build_stage1(const RadarNetwork& net, const MeasurementSet& m) {
  const int mcount = net.M();
  const int mn = net.pair_count();
  if (m.size() != mn || m.doppler.size() != mn) {
    throw ValidationError("measurement count " + std::to_string(m.size()) +
                          " does not match network pairs " + std::to_string(mn));
  }
  constexpr double c = kSpeedOfLight;
  LinearSystem sys{Eigen::MatrixXd::Zero(2 * mn, 6 + 2 * mcount), Eigen::VectorXd(2 * mn)};
  for (int i = 0; i < mcount; ++i) {
    const Eigen::Vector3d& t = net.transmitters[i].position;
    const double fc = net.transmitters[i].carrier_frequency_hz;
    for (int j = 0; j < net.N(); ++j) {
      const Eigen::Vector3d& s = net.receivers[j];
      const int k = net.pair_index(i, j);
      const double tau = m.tau[k];
      const double f = m.doppler[k];
      const Eigen::Vector3d baseline = t - s;

      sys.b[k] = c * c * tau * tau + t.squaredNorm() - s.squaredNorm();
      sys.A.block<1, 3>(k, 0) = 2.0 * baseline.transpose();
      sys.A(k, 6 + i) = 2.0 * c * tau;

      const int kf = mn + k;
      sys.b[kf] = 2.0 * c * c * tau * f;
      sys.A.block<1, 3>(kf, 3) = 2.0 * fc * baseline.transpose();
      sys.A(kf, 6 + i) = 2.0 * c * f;
      sys.A(kf, 6 + mcount + i) = 2.0 * c * fc * tau;
    }
  }
  return sys;
}

/// Noise-mapping matrix B (B dalpha ~ b - A y), evaluated at a state guess.
/// Lower triangular: 2c [[I (x) diag(r0), 0], [diag(fc) (x) diag(r0_dot), I (x) diag(r0)]].
inline Eigen::MatrixXd build_B(const RadarNetwork& net, const Eigen::Vector3d& x,
                               const Eigen::Vector3d& v) {
  const int mn = net.pair_count();
  constexpr double two_c = 2.0 * kSpeedOfLight;
  std::vector<double> r0(net.N()), r0_dot(net.N());
  for (int j = 0; j < net.N(); ++j) {
    const Eigen::Vector3d d = x - net.receivers[j];
    r0[j] = d.norm();
    if (!(r0[j] > 0.0)) {
      throw GeometryError("state guess coincides with receiver " + std::to_string(j));
    }
    r0_dot[j] = d.dot(v) / r0[j];
  }
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2 * mn, 2 * mn);
  for (int i = 0; i < net.M(); ++i) {
    const double fc = net.transmitters[i].carrier_frequency_hz;
    for (int j = 0; j < net.N(); ++j) {
      const int k = net.pair_index(i, j);
      B(k, k) = two_c * r0[j];
      B(mn + k, mn + k) = two_c * r0[j];
      B(mn + k, k) = two_c * fc * r0_dot[j];
    }
  }
  return B;
}

struct Stage1Result {
  AugmentedState state;
  /// cov(y~) = (A^T W A)^{-1}, in the units of the weighting covariance.
  Eigen::MatrixXd covariance;
  /// W^{1/2} A of the final pass; its Gram matrix is cov(y~)^{-1}.
  Eigen::MatrixXd whitened_design;
  double condition = 0.0;
  double normal_residual = 0.0;
  int passes = 0;
};

namespace detail {

/// Q^{-1/2} B^{-1} applied to a matrix/vector; B lower triangular.
template <typename Derived>
Eigen::MatrixXd whiten(const Eigen::VectorXd& q_diag, const Eigen::MatrixXd* B,
                       const Eigen::MatrixBase<Derived>& rhs) {
  Eigen::MatrixXd out = rhs;
  if (B != nullptr) out = B->triangularView<Eigen::Lower>().solve(out);
  return q_diag.cwiseSqrt().cwiseInverse().asDiagonal() * out;
}

}  // namespace detail

/// Stage 1: W = Q^{-1} on the first pass, then W = (B Q B^T)^{-1} with B
/// rebuilt from the previous pass for every further pass.
inline Stage1Result estimate_stage1(const RadarNetwork& net, const MeasurementSet& m,
                                    int passes = 2) {
  if (passes < 1) throw ValidationError("stage-1 passes must be >= 1");
  const int mcount = net.M();
  if (2 * net.pair_count() < 6 + 2 * mcount) {
    throw EstimationError("stage 1 under-determined: " + std::to_string(2 * net.pair_count()) +
                          " equations for " + std::to_string(6 + 2 * mcount) + " unknowns");
  }
  const LinearSystem sys = build_stage1(net, m);
  const Eigen::VectorXd q = m.weighting_diag();

  Stage1Result out;
  for (int pass = 0; pass < passes; ++pass) {
    Eigen::MatrixXd aw, bw;
    if (pass == 0) {
      aw = detail::whiten(q, nullptr, sys.A);
      bw = detail::whiten(q, nullptr, sys.b);
    } else {
      const Eigen::MatrixXd B = build_B(net, out.state.x, out.state.v);
      aw = detail::whiten(q, &B, sys.A);
      bw = detail::whiten(q, &B, sys.b);
    }
    LeastSquaresSolution sol = solve_whitened(aw, bw.col(0));
    out.state = AugmentedState::from_stacked(sol.solution, mcount);
    out.covariance = std::move(sol.covariance);
    out.whitened_design = std::move(aw);
    out.condition = sol.condition;
    out.normal_residual = sol.normal_residual;
    out.passes = pass + 1;
  }
  return out;
}

/// Stage-2 system B2 dy~ ~ h - G z over z = (dx, dv).
struct Stage2System {
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  Eigen::MatrixXd B2;
};

inline Stage2System build_stage2(const std::vector<EcefPosition>& transmitters,
                                 const AugmentedState& y1) {
  const int m = static_cast<int>(transmitters.size());
  if (y1.M() != m) throw ValidationError("augmented state does not match transmitter count");
  const int rows = 2 * m + 6;
  Stage2System sys{Eigen::MatrixXd::Zero(rows, 6), Eigen::VectorXd::Zero(rows),
                   Eigen::MatrixXd::Zero(rows, 6 + 2 * m)};
  for (int i = 0; i < m; ++i) {
    const Eigen::Vector3d d = y1.x - transmitters[i];
    const double r = d.norm();
    const double g = y1.gamma[i];
    const double b = y1.beta[i];

    // gamma~^2 - ||x~ - t||^2, factored to avoid cancellation
    sys.h[i] = (g - r) * (g + r);
    sys.G.block<1, 3>(i, 0) = -2.0 * d.transpose();
    sys.B2(i, 6 + i) = 2.0 * g;

    sys.h[m + i] = g * b - d.dot(y1.v);
    sys.G.block<1, 3>(m + i, 0) = -y1.v.transpose();
    sys.G.block<1, 3>(m + i, 3) = -d.transpose();
    sys.B2(m + i, 6 + i) = b;
    sys.B2(m + i, 6 + m + i) = g;
  }
  sys.G.bottomRows<6>() = -Matrix6d::Identity();
  sys.B2.block<6, 6>(2 * m, 0).setIdentity();
  return sys;
}

inline std::vector<EcefPosition> transmitter_positions(const RadarNetwork& net) {
  std::vector<EcefPosition> out;
  out.reserve(net.transmitters.size());
  for (const auto& t : net.transmitters) out.push_back(t.position);
  return out;
}

struct EstimatorOptions {
  int stage1_passes = 2;
};

/// Stage 2: corrects a stage-1 solution with the gamma/beta consistency
/// relations and attaches Sigma = (L^T Q^{-1} L)^{-1}, L = B^{-1} A B2^{-1} G,
/// with B taken at the corrected state.
inline EstimateWithCovariance correct_stage1(const RadarNetwork& net, const MeasurementSet& m,
                                             const Stage1Result& s1) {
  for (int i = 0; i < net.M(); ++i) {
    if (!(s1.state.gamma[i] > 0.0)) {
      throw EstimationError("stage 1 produced non-positive range gamma_" + std::to_string(i + 1) +
                            " = " + std::to_string(s1.state.gamma[i]));
    }
  }
  const Stage2System s2 = build_stage2(transmitter_positions(net), s1.state);
  const Eigen::PartialPivLU<Eigen::MatrixXd> b2(s2.B2);
  const Eigen::MatrixXd b2inv_g = b2.solve(s2.G);
  const Eigen::VectorXd b2inv_h = b2.solve(s2.h);

  // W2 = (B2 cov(y~) B2^T)^{-1} = B2^{-T} (Aw^T Aw) B2^{-1}
  const LeastSquaresSolution z =
      solve_whitened(s1.whitened_design * b2inv_g, s1.whitened_design * b2inv_h);

  EstimateWithCovariance out;
  out.stage1_state = s1.state.state();
  out.state.position = s1.state.x - z.solution.head<3>();
  out.state.velocity = s1.state.v - z.solution.tail<3>();

  const LinearSystem sys = build_stage1(net, m);
  const Eigen::MatrixXd B = build_B(net, out.state.position, out.state.velocity);
  const Eigen::MatrixXd lw = detail::whiten(m.weighting_diag(), &B, sys.A * b2inv_g);
  const LeastSquaresSolution info = solve_whitened(lw, Eigen::VectorXd::Zero(lw.rows()));
  out.sigma = m.noiseless() ? Matrix6d::Zero() : Matrix6d(symmetrized(info.covariance));

  out.diagnostics = {
      {"cond_stage1", s1.condition},
      {"cond_stage2", z.condition},
      {"cond_sigma", info.condition},
      {"residual_stage1", s1.normal_residual},
      {"residual_stage2", z.normal_residual},
      {"gamma_inconsistency_m", s1.state.gamma_inconsistency(net)},
      {"beta_inconsistency_mps", s1.state.beta_inconsistency(net)},
      {"stage1_passes", static_cast<double>(s1.passes)},
      {"correction_norm", z.solution.norm()},
  };
  return out;
}

inline EstimateWithCovariance estimate(const RadarNetwork& net, const MeasurementSet& m,
                                       const EstimatorOptions& options = {}) {
  return correct_stage1(net, m, estimate_stage1(net, m, options.stage1_passes));
}

}  // namespace iod
