#pragma once

#include <map>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "iod/scenario.hpp"

namespace iod {

/// Final (x, v) with its 6x6 covariance. Position block in m^2, velocity
/// block in (m/s)^2.
struct EstimateWithCovariance {
  StateVector state;
  Matrix6d sigma = Matrix6d::Zero();
  /// Intermediate state before the last refinement (stage-1 result for the
  /// WLS estimator, closed-form root for trilateration).
  StateVector stage1_state;
  std::map<std::string, double> diagnostics;

  [[nodiscard]] Eigen::Vector3d position_sigma() const {
    return sigma.diagonal().head<3>().cwiseMax(0.0).cwiseSqrt();
  }
  [[nodiscard]] Eigen::Vector3d velocity_sigma() const {
    return sigma.diagonal().tail<3>().cwiseMax(0.0).cwiseSqrt();
  }
};

inline nlohmann::json to_json(const EstimateWithCovariance& e) {
  const Vector6d s = e.state.stacked();
  const Vector6d s1 = e.stage1_state.stacked();
  nlohmann::json sigma = nlohmann::json::array();
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) sigma.push_back(e.sigma(r, c));
  }
  nlohmann::json diag = nlohmann::json::object();
  for (const auto& [k, v] : e.diagnostics) diag[k] = v;
  return {{"state", std::vector<double>(s.data(), s.data() + 6)},
          {"sigma", sigma},
          {"stage1_state", std::vector<double>(s1.data(), s1.data() + 6)},
          {"diagnostics", diag}};
}

}  // namespace iod
