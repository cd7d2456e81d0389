#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "iod/estimator.hpp"
#include "support.hpp"

using namespace iod;

namespace {

constexpr double c = kSpeedOfLight;

RadarNetwork single_pair() {
  RadarNetwork net;
  net.transmitters.push_back({{1, 0, 0}, 1.0});
  net.receivers.push_back({0, 1, 0});
  return net;
}

MeasurementSet noisy(const Scenario& sc, double sigma_t, std::uint64_t run) {
  NoiseModel noise = sc.noise;
  noise.sigma_t = sigma_t;
  return simulate(sc.network, sc.target, noise, run);
}

}  // namespace

TEST(Stage1System, SinglePairVectorAndRow) {
  const RadarNetwork net = single_pair();
  MeasurementSet m;
  m.tau = Eigen::VectorXd::Constant(1, 1.0);
  m.doppler = Eigen::VectorXd::Constant(1, 1.0);
  const LinearSystem sys = build_stage1(net, m);
  ASSERT_EQ(sys.A.rows(), 2);
  ASSERT_EQ(sys.A.cols(), 8);
  EXPECT_EQ(sys.b[0], c * c);
  EXPECT_EQ(sys.b[1], 2.0 * c * c);
  Eigen::RowVectorXd row(8);
  row << 2, -2, 0, 0, 0, 0, 2 * c, 0;
  EXPECT_EQ(sys.A.row(0), row);
  Eigen::RowVectorXd doppler_row(8);
  doppler_row << 0, 0, 0, 2, -2, 0, 2 * c, 2 * c;
  EXPECT_EQ(sys.A.row(1), doppler_row);
}

TEST(Stage1System, NoiselessResidualVanishes) {
  const Scenario sc = default_reference_scenario();
  const MeasurementSet m = noiseless_measurements(sc.network, sc.target);
  const LinearSystem sys = build_stage1(sc.network, m);
  const Eigen::VectorXd y = AugmentedState::from_state(sc.network, sc.target).stacked();
  EXPECT_LE((sys.b - sys.A * y).norm(), 1e-6 * sys.b.norm());
  // delay and Doppler halves separately
  const int mn = sc.network.pair_count();
  EXPECT_LE((sys.b - sys.A * y).tail(mn).norm(), 1e-6 * sys.b.tail(mn).norm());
}

TEST(NoiseMap, SinglePairStaticIsScaledIdentity) {
  RadarNetwork net;
  net.transmitters.push_back({{5, 5, 5}, 123.0});
  net.receivers.push_back({0, 0, 0});
  const Eigen::MatrixXd B = build_B(net, {1, 0, 0}, {0, 1, 0});
  EXPECT_LE((B - 2 * c * Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-6);
}

TEST(NoiseMap, UpperRightBlockIsZero) {
  RadarNetwork net;
  net.transmitters.push_back({{5, 5, 5}, 1e9});
  net.receivers = {{0, 0, 0}, {0, 3, 1}};
  const Eigen::MatrixXd B = build_B(net, {1, 2, 3}, {4, -5, 6});
  ASSERT_EQ(B.rows(), 4);
  EXPECT_TRUE(B.topRightCorner(2, 2).isZero(0.0));
  EXPECT_NE(B(2, 0), 0.0);
}

TEST(NoiseMap, ReferenceScenarioEntries) {
  const Scenario sc = default_reference_scenario();
  const auto& net = sc.network;
  const Eigen::MatrixXd B = build_B(net, sc.target.position, sc.target.velocity);
  const int mn = net.pair_count();
  for (int i = 0; i < net.M(); ++i) {
    for (int j = 0; j < net.N(); ++j) {
      const int k = i * net.N() + j;
      const Eigen::Vector3d d = sc.target.position - net.receivers[j];
      const double r = std::sqrt(d.x() * d.x() + d.y() * d.y() + d.z() * d.z());
      const double rdot = (d.x() * sc.target.velocity.x() + d.y() * sc.target.velocity.y() +
                           d.z() * sc.target.velocity.z()) / r;
      EXPECT_NEAR(B(k, k), 2 * c * r, 1e-12 * 2 * c * r);
      EXPECT_NEAR(B(mn + k, mn + k), 2 * c * r, 1e-12 * 2 * c * r);
      const double expected = 2 * c * net.transmitters[i].carrier_frequency_hz * rdot;
      EXPECT_NEAR(B(mn + k, k), expected, 1e-12 * std::abs(expected));
    }
  }
  // diagonal blocks otherwise
  EXPECT_EQ(B.topLeftCorner(mn, mn).diagonal().asDiagonal().toDenseMatrix(), B.topLeftCorner(mn, mn));
  EXPECT_TRUE(B.topRightCorner(mn, mn).isZero(0.0));
}

TEST(NoiseMap, GuessAtReceiverThrows) {
  const Scenario sc = default_reference_scenario();
  EXPECT_THROW(build_B(sc.network, sc.network.receivers[2], sc.target.velocity), GeometryError);
}

TEST(Stage1, ZeroNoiseRecoversTruth) {
  const Scenario sc = default_reference_scenario();
  const MeasurementSet m = noiseless_measurements(sc.network, sc.target);
  const Stage1Result s1 = estimate_stage1(sc.network, m);
  EXPECT_EQ(s1.passes, 2);
  EXPECT_LE((s1.state.x - sc.target.position).norm(), 1e-3);
  for (int i = 0; i < sc.network.M(); ++i) {
    EXPECT_NEAR(s1.state.gamma[i], (s1.state.x - sc.network.transmitters[i].position).norm(), 1e-3);
  }
  EXPECT_LE(s1.normal_residual, 1e-6);
}

TEST(Stage1, MatchesIterativeMinimizerOfRefinedObjective) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario sc = seed == 0 ? default_reference_scenario() : fixtures::random_leo_scenario(seed);
    const MeasurementSet m = noisy(sc, 1e-9, seed);
    const Stage1Result first = estimate_stage1(sc.network, m, 1);
    const Stage1Result second = estimate_stage1(sc.network, m, 2);

    // objective (b - Ay)^T (B Q B^T)^{-1} (b - Ay), B at the pass-1 state
    const LinearSystem sys = build_stage1(sc.network, m);
    const Eigen::MatrixXd B = build_B(sc.network, first.state.x, first.state.v);
    const Eigen::MatrixXd binv_a = B.inverse() * sys.A;
    const Eigen::VectorXd binv_b = B.inverse() * sys.b;
    const Eigen::VectorXd w = m.q_alpha_diag.cwiseSqrt().cwiseInverse();
    const Eigen::VectorXd oracle =
        fixtures::iterative_least_squares(w.asDiagonal() * binv_a, w.asDiagonal() * binv_b);
    const Eigen::VectorXd y = second.state.stacked();
    EXPECT_LE((y - oracle).norm(), 1e-8 * oracle.norm()) << "seed " << seed;
    EXPECT_LE((y.segment<3>(3) - oracle.segment<3>(3)).norm(), 1e-8 * oracle.segment<3>(3).norm() + 1e-4)
        << "seed " << seed;
    EXPECT_LE(second.normal_residual, 1e-6);
  }
}

TEST(Stage2System, ConsistentStateGivesZeroRhs) {
  const Scenario sc = default_reference_scenario();
  const AugmentedState y = AugmentedState::from_state(sc.network, sc.target);
  const Stage2System s2 = build_stage2(transmitter_positions(sc.network), y);
  const int m = sc.network.M();
  for (int i = 0; i < m; ++i) {
    EXPECT_NEAR(s2.h[i], 0.0, 1e-9 * y.gamma[i] * y.gamma[i]);
    EXPECT_NEAR(s2.h[m + i], 0.0, 1e-9 * y.gamma[i] * sc.target.velocity.norm());
  }
  EXPECT_TRUE(s2.h.tail<6>().isZero(0.0));
  EXPECT_EQ(Eigen::MatrixXd(s2.G.bottomRows<6>()), Eigen::MatrixXd(-Matrix6d::Identity()));
  EXPECT_EQ(Eigen::MatrixXd(s2.B2.bottomLeftCorner(6, 6)), Eigen::MatrixXd(Matrix6d::Identity()));
  EXPECT_TRUE(s2.B2.bottomRightCorner(6, 2 * m).isZero(0.0));
}

TEST(Stage2System, SingleTransmitterBetaRow) {
  AugmentedState y;
  y.x = {1, 0, 0};
  y.v = {0, 1, 0};
  y.gamma = Eigen::VectorXd::Constant(1, 1.0);
  y.beta = Eigen::VectorXd::Constant(1, 0.0);
  const Stage2System s2 = build_stage2({EcefPosition::Zero()}, y);
  ASSERT_EQ(s2.G.rows(), 8);
  Eigen::RowVectorXd beta_row(6);
  beta_row << 0, -1, 0, -1, 0, 0;
  EXPECT_EQ(s2.G.row(1), beta_row);
  Eigen::RowVectorXd gamma_row(6);
  gamma_row << -2, 0, 0, 0, 0, 0;
  EXPECT_EQ(s2.G.row(0), gamma_row);
  EXPECT_EQ(s2.B2(0, 6), 2.0);
  EXPECT_EQ(s2.B2(1, 6), 0.0);
  EXPECT_EQ(s2.B2(1, 7), 1.0);
}

TEST(Estimate, ZeroNoiseReferenceScenario) {
  const Scenario sc = default_reference_scenario();
  const MeasurementSet m = noiseless_measurements(sc.network, sc.target);
  const EstimateWithCovariance e = estimate(sc.network, m);
  EXPECT_LE((e.state.position - sc.target.position).norm(), 1e-3);
  EXPECT_LE((e.state.velocity - sc.target.velocity).norm(), 1e-6);
  EXPECT_TRUE(e.sigma.isZero(0.0));
  EXPECT_LE(e.diagnostics.at("residual_stage1"), 1e-6);
  EXPECT_LE(e.diagnostics.at("residual_stage2"), 1e-6);
}

TEST(Estimate, ZeroNoiseRandomScenarios) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Scenario sc = fixtures::random_leo_scenario(seed);
    const MeasurementSet m = noiseless_measurements(sc.network, sc.target);
    const EstimateWithCovariance e = estimate(sc.network, m);
    EXPECT_LE((e.state.position - sc.target.position).norm(), 1e-3) << "seed " << seed;
    EXPECT_LE((e.state.velocity - sc.target.velocity).norm(), 1e-6) << "seed " << seed;
  }
}

TEST(Estimate, NormalResidualsAndCovarianceShape) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scenario sc = fixtures::random_leo_scenario(seed);
    const EstimateWithCovariance e = estimate(sc.network, noisy(sc, 1e-9, seed));
    EXPECT_LE(e.diagnostics.at("residual_stage1"), 1e-6);
    EXPECT_LE(e.diagnostics.at("residual_stage2"), 1e-6);
    EXPECT_TRUE(fixtures::is_symmetric_psd(e.sigma)) << "seed " << seed;
    EXPECT_GT(e.sigma.trace(), 0.0);
  }
}

TEST(Estimate, WeightScalingInvariance) {
  const Scenario sc = default_reference_scenario();
  MeasurementSet m = noisy(sc, 1e-9, 3);
  const EstimateWithCovariance a = estimate(sc.network, m);
  m.q_alpha_diag *= 7.5;
  const EstimateWithCovariance b = estimate(sc.network, m);
  EXPECT_LE((a.state.position - b.state.position).norm(), 1e-6);
  EXPECT_LE((a.state.velocity - b.state.velocity).norm(), 1e-9);
  EXPECT_LE((b.sigma - 7.5 * a.sigma).norm(), 1e-9 * b.sigma.norm());
}

TEST(Estimate, RejectsNonPositiveRange) {
  const Scenario sc = default_reference_scenario();
  const MeasurementSet m = noiseless_measurements(sc.network, sc.target);
  Stage1Result s1 = estimate_stage1(sc.network, m);
  s1.state.gamma[1] = -s1.state.gamma[1];
  EXPECT_THROW(correct_stage1(sc.network, m, s1), EstimationError);
  s1.state.gamma[1] = 0.0;
  EXPECT_THROW(correct_stage1(sc.network, m, s1), EstimationError);
}

TEST(Estimate, CorrectionIsSmallRelativeToState) {
  const Scenario sc = default_reference_scenario();
  std::vector<double> corrections;
  for (std::uint64_t run = 0; run < 200; ++run) {
    corrections.push_back(estimate(sc.network, noisy(sc, 1e-9, run)).diagnostics.at("correction_norm"));
  }
  std::nth_element(corrections.begin(), corrections.begin() + 100, corrections.end());
  const double median = corrections[100];
  EXPECT_LE(median, 1e-4 * sc.target.position.norm());
  EXPECT_GT(median, 0.0);
  RecordProperty("median_correction_norm", std::to_string(median));
}

TEST(Estimate, ReportedCovarianceMatchesSampleSpread) {
  const Scenario sc = default_reference_scenario();
  for (double sigma : {1e-9, 1e-8}) {
    const int runs = 1000;
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    double reported = 0.0;
    std::vector<Eigen::Vector3d> errors;
    for (int run = 0; run < runs; ++run) {
      const EstimateWithCovariance e = estimate(sc.network, noisy(sc, sigma, run));
      errors.push_back(e.state.position - sc.target.position);
      mean += errors.back();
      reported += e.sigma.topLeftCorner<3, 3>().trace();
    }
    mean /= runs;
    for (const auto& d : errors) scatter += (d - mean) * (d - mean).transpose();
    const double sample = scatter.trace() / (runs - 1);
    reported /= runs;
    EXPECT_GE(reported / sample, 0.5) << sigma;
    EXPECT_LE(reported / sample, 2.0) << sigma;

    // unbiased to within the Monte Carlo noise on every axis
    for (int k = 0; k < 3; ++k) {
      double ms = 0.0;
      for (const auto& d : errors) ms += d[k] * d[k];
      const double rmse = std::sqrt(ms / runs);
      EXPECT_LE(std::abs(mean[k]), 4.0 * rmse / std::sqrt(runs)) << "axis " << k;
    }
  }
}
