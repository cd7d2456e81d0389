#include <gtest/gtest.h>

#include <cmath>

#include "iod/crlb.hpp"
#include "iod/estimator.hpp"
#include "support.hpp"

using namespace iod;

namespace {

Eigen::VectorXd model(const RadarNetwork& net, const Vector6d& s) {
  const StateVector st{s.head<3>(), s.tail<3>()};
  const MeasurementSet m = noiseless_measurements(net, st);
  Eigen::VectorXd out(2 * m.size());
  out << m.tau, m.doppler;
  return out;
}

}  // namespace

TEST(Jacobian, DelayRowsHaveNoVelocityBlock) {
  const Scenario sc = default_reference_scenario();
  const Eigen::MatrixXd J = measurement_jacobian(sc.network, sc.target);
  const int mn = sc.network.pair_count();
  EXPECT_TRUE(J.topRightCorner(mn, 3).isZero(0.0));
}

TEST(Jacobian, StaticTargetHasNoDopplerPositionBlock) {
  StateVector st = default_reference_scenario().target;
  st.velocity.setZero();
  const auto net = default_reference_scenario().network;
  const Eigen::MatrixXd J = measurement_jacobian(net, st);
  EXPECT_TRUE(J.bottomLeftCorner(net.pair_count(), 3).isZero(0.0));
}

TEST(Jacobian, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario sc = seed == 0 ? default_reference_scenario() : fixtures::random_leo_scenario(seed);
    const Eigen::MatrixXd J = measurement_jacobian(sc.network, sc.target);
    const Vector6d s0 = sc.target.stacked();
    for (int k = 0; k < 6; ++k) {
      const double h = k < 3 ? 1.0 : 1e-1;  // m, m/s
      Vector6d sp = s0, sm = s0;
      sp[k] += h;
      sm[k] -= h;
      const Eigen::VectorXd fd = (model(sc.network, sp) - model(sc.network, sm)) / (2.0 * h);
      for (int r = 0; r < J.rows(); ++r) {
        // per-row scale guards entries that vanish by geometry
        const double scale = J.row(r).cwiseAbs().maxCoeff();
        EXPECT_LE(std::abs(fd[r] - J(r, k)), 1e-6 * std::max(std::abs(J(r, k)), 1e-3 * scale))
            << "seed " << seed << " row " << r << " col " << k;
      }
    }
  }
}

TEST(Crlb, FisherMatrixIsSymmetricPsd) {
  const Scenario sc = default_reference_scenario();
  NoiseModel noise = sc.noise;
  noise.sigma_t = 1e-9;
  const FisherInformation fim =
      fisher_information(sc.network, sc.target, q_alpha_diag(noise, sc.network.pair_count()));
  EXPECT_TRUE(fixtures::is_symmetric_psd(fim.matrix));
  const CrlbResult b = crlb(sc.network, sc.target, noise);
  EXPECT_TRUE(fixtures::is_symmetric_psd(b.inverse_fim));
  EXPECT_LE((b.inverse_fim * fim.matrix - Matrix6d::Identity()).norm(), 1e-6);
}

TEST(Crlb, ScalesLinearlyWithSigma) {
  const Scenario sc = default_reference_scenario();
  NoiseModel a = sc.noise, b = sc.noise;
  a.sigma_t = 1e-9;
  b.sigma_t = 1e-8;
  const CrlbResult ra = crlb(sc.network, sc.target, a);
  const CrlbResult rb = crlb(sc.network, sc.target, b);
  EXPECT_NEAR(rb.position_bound_m / ra.position_bound_m, 10.0, 1e-12);
  EXPECT_NEAR(rb.velocity_bound_mps / ra.velocity_bound_mps, 10.0, 1e-12);
}

TEST(Crlb, AddingReceiverNeverLoosensBound) {
  const Scenario sc = default_reference_scenario();
  NoiseModel noise = sc.noise;
  noise.sigma_t = 1e-9;
  const CrlbResult full = crlb(sc.network, sc.target, noise);
  for (int drop = 0; drop < sc.network.N(); ++drop) {
    RadarNetwork net = sc.network;
    net.receivers.erase(net.receivers.begin() + drop);
    const CrlbResult fewer = crlb(net, sc.target, noise);
    EXPECT_GE(fewer.position_bound_m, full.position_bound_m * (1 - 1e-12));
    EXPECT_GE(fewer.velocity_bound_mps, full.velocity_bound_mps * (1 - 1e-12));
  }
}

TEST(Crlb, SingularInformationNamesNullDirection) {
  RadarNetwork net;
  net.transmitters.push_back({{6.4e6, 0, 0}, 1e9});
  net.receivers.push_back({0, 6.4e6, 0});
  NoiseModel noise;
  noise.sigma_t = 1e-9;
  try {
    crlb(net, {{7e6, 1e6, 1e6}, {0, 7000, 0}}, noise);
    FAIL() << "expected singular FIM error";
  } catch (const EstimationError& e) {
    EXPECT_NE(std::string(e.what()).find("null direction"), std::string::npos);
  }
}

TEST(Crlb, EstimatorAttainsBound) {
  const Scenario sc = default_reference_scenario();
  const int runs = 1000;
  for (double sigma : {1e-9, 1e-6}) {
    NoiseModel noise = sc.noise;
    noise.sigma_t = sigma;
    const CrlbResult bound = crlb(sc.network, sc.target, noise);
    double sp = 0.0, sv = 0.0;
    for (int run = 0; run < runs; ++run) {
      const EstimateWithCovariance e = estimate(sc.network, simulate(sc.network, sc.target, noise, run));
      sp += (e.state.position - sc.target.position).squaredNorm();
      sv += (e.state.velocity - sc.target.velocity).squaredNorm();
    }
    const double pos_ratio = std::sqrt(sp / runs) / bound.position_bound_m;
    const double vel_ratio = std::sqrt(sv / runs) / bound.velocity_bound_mps;
    if (sigma == 1e-9) {
      EXPECT_GE(pos_ratio, 0.9);
      EXPECT_LE(pos_ratio, 1.3);
    } else {
      EXPECT_GE(vel_ratio, 0.9);
      EXPECT_LE(vel_ratio, 1.5);
    }
  }
}
