#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iod/constants.hpp"
#include "iod/errors.hpp"
#include "iod/format.hpp"
#include "iod/rng.hpp"
#include "iod/scenario.hpp"

namespace iod {

/// Stacked delay and Doppler vectors, both ordered by RadarNetwork::pair_index,
/// plus the diagonal of their noise covariance (MN delay variances, then MN
/// Doppler variances).
struct MeasurementSet {
  Eigen::VectorXd tau;
  Eigen::VectorXd doppler;
  Eigen::VectorXd q_alpha_diag;
  double doppler_variance_scale = kDefaultDopplerVarianceScale;

  [[nodiscard]] int size() const { return static_cast<int>(tau.size()); }

  [[nodiscard]] bool noiseless() const { return !(q_alpha_diag.array() > 0.0).all(); }

  /// Covariance diagonal used for weighting. Falls back to the unit-sigma
  /// shape when the variances are zero, which leaves exact-data solutions
  /// unchanged.
  [[nodiscard]] Eigen::VectorXd weighting_diag() const {
    if (!noiseless()) return q_alpha_diag;
    const Eigen::Index n = tau.size();
    Eigen::VectorXd q(2 * n);
    q.head(n).setOnes();
    q.tail(n).setConstant(doppler_variance_scale);
    return q;
  }
};

inline Eigen::VectorXd q_alpha_diag(const NoiseModel& noise, int pair_count) {
  Eigen::VectorXd q(2 * pair_count);
  const double var_t = noise.sigma_t * noise.sigma_t;
  q.head(pair_count).setConstant(var_t);
  q.tail(pair_count).setConstant(noise.doppler_variance_scale * var_t);
  return q;
}

namespace detail {

inline double checked_range(const Eigen::Vector3d& x, const Eigen::Vector3d& station,
                            const char* what) {
  const double r = (x - station).norm();
  if (!(r > 0.0)) throw GeometryError(std::string("target coincides with ") + what);
  return r;
}

}  // namespace detail

/// Bistatic travel time transmitter -> target -> receiver, seconds.
inline double true_delay(const Eigen::Vector3d& x, const EcefPosition& t, const EcefPosition& s) {
  return (detail::checked_range(x, t, "transmitter") + detail::checked_range(x, s, "receiver")) /
         kSpeedOfLight;
}

/// Doppler shift from the range-rate along both legs, Hz.
inline double true_doppler(const Eigen::Vector3d& x, const Eigen::Vector3d& v,
                           const Transmitter& t, const EcefPosition& s) {
  const double rt = detail::checked_range(x, t.position, "transmitter");
  const double rs = detail::checked_range(x, s, "receiver");
  const double range_rate = (x - t.position).dot(v) / rt + (x - s).dot(v) / rs;
  return t.carrier_frequency_hz / kSpeedOfLight * range_rate;
}

inline MeasurementSet noiseless_measurements(const RadarNetwork& net, const StateVector& truth,
                                             double doppler_variance_scale =
                                                 kDefaultDopplerVarianceScale) {
  const int mn = net.pair_count();
  MeasurementSet m;
  m.tau.resize(mn);
  m.doppler.resize(mn);
  for (int i = 0; i < net.M(); ++i) {
    for (int j = 0; j < net.N(); ++j) {
      const int k = net.pair_index(i, j);
      m.tau[k] = true_delay(truth.position, net.transmitters[i].position, net.receivers[j]);
      m.doppler[k] =
          true_doppler(truth.position, truth.velocity, net.transmitters[i], net.receivers[j]);
    }
  }
  m.q_alpha_diag = Eigen::VectorXd::Zero(2 * mn);
  m.doppler_variance_scale = doppler_variance_scale;
  return m;
}

/// Noisy delay/Doppler draw for one Monte Carlo run. The noise stream is keyed
/// by (noise.seed, run_index) only, so every sigma level sees the same
/// standardized draws.
inline MeasurementSet simulate(const RadarNetwork& net, const StateVector& truth,
                               const NoiseModel& noise, std::uint64_t run_index) {
  MeasurementSet m = noiseless_measurements(net, truth, noise.doppler_variance_scale);
  const int mn = net.pair_count();
  m.q_alpha_diag = q_alpha_diag(noise, mn);
  if (noise.sigma_t == 0.0) return m;
  auto gen = substream(noise.seed, run_index, "measurement");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma_f = noise.sigma_doppler();
  for (int k = 0; k < mn; ++k) m.tau[k] += noise.sigma_t * normal(gen);
  for (int k = 0; k < mn; ++k) m.doppler[k] += sigma_f * normal(gen);
  return m;
}

// ---------------------------------------------------------------------------
// measurements.csv: i,j,tau_s,doppler_hz with 1-based station indices

inline void write_measurements_csv(const RadarNetwork& net, const MeasurementSet& m,
                                   std::ostream& out) {
  out << "i,j,tau_s,doppler_hz\n";
  for (int i = 0; i < net.M(); ++i) {
    for (int j = 0; j < net.N(); ++j) {
      const int k = net.pair_index(i, j);
      out << i + 1 << ',' << j + 1 << ',' << fmt17(m.tau[k]) << ',' << fmt17(m.doppler[k])
          << '\n';
    }
  }
}

/// Reads delays and Dopplers back; the covariance comes from `noise`.
inline MeasurementSet read_measurements_csv(const RadarNetwork& net, const NoiseModel& noise,
                                            std::istream& in) {
  const int mn = net.pair_count();
  MeasurementSet m;
  m.tau = Eigen::VectorXd::Constant(mn, std::numeric_limits<double>::quiet_NaN());
  m.doppler = m.tau;
  std::string line;
  if (!std::getline(in, line) || line.rfind("i,j,tau_s,doppler_hz", 0) != 0) {
    throw ValidationError("measurements.csv: expected header 'i,j,tau_s,doppler_hz'");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    int i = 0, j = 0;
    double tau = 0.0, f = 0.0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> i >> c1 >> j >> c2 >> tau >> c3 >> f) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw ValidationError("measurements.csv line " + std::to_string(line_no) + ": malformed");
    }
    if (i < 1 || i > net.M() || j < 1 || j > net.N()) {
      throw ValidationError("measurements.csv line " + std::to_string(line_no) +
                            ": station index out of range");
    }
    const int k = net.pair_index(i - 1, j - 1);
    m.tau[k] = tau;
    m.doppler[k] = f;
  }
  if (!m.tau.allFinite() || !m.doppler.allFinite()) {
    throw ValidationError("measurements.csv: missing or non-finite (i, j) entries");
  }
  m.q_alpha_diag = q_alpha_diag(noise, mn);
  m.doppler_variance_scale = noise.doppler_variance_scale;
  return m;
}

}  // namespace iod
