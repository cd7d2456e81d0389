#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "iod/constants.hpp"
#include "iod/errors.hpp"
#include "iod/geodesy.hpp"

namespace iod {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

struct Transmitter {
  EcefPosition position = EcefPosition::Zero();
  double carrier_frequency_hz = 0.0;
};

/// M transmitters (with carriers) and N receivers, all ECEF.
/// Measurement (i, j) pairs transmitter i with receiver j and lives at
/// index i * N + j of every stacked vector.
struct RadarNetwork {
  std::vector<Transmitter> transmitters;
  std::vector<EcefPosition> receivers;

  [[nodiscard]] int M() const { return static_cast<int>(transmitters.size()); }
  [[nodiscard]] int N() const { return static_cast<int>(receivers.size()); }
  [[nodiscard]] int pair_count() const { return M() * N(); }
  [[nodiscard]] int pair_index(int i, int j) const { return i * N() + j; }
};

struct StateVector {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();

  [[nodiscard]] Vector6d stacked() const {
    Vector6d s;
    s << position, velocity;
    return s;
  }
};

/// Delay noise std sigma_t; Doppler std is sqrt(doppler_variance_scale) * sigma_t.
struct NoiseModel {
  double sigma_t = 0.0;
  double doppler_variance_scale = kDefaultDopplerVarianceScale;
  std::uint64_t seed = 0;

  [[nodiscard]] double sigma_doppler() const {
    return std::sqrt(doppler_variance_scale) * sigma_t;
  }
};

struct ExperimentConfig {
  std::vector<double> sigma_grid{1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
  int runs = 1000;
  std::vector<std::string> estimators{"wls", "tri"};
  int stage1_passes = 2;
  double confidence = 0.95;
  int bias_runs = 20000;
  int histogram_bins = 61;
};

struct Scenario {
  RadarNetwork network;
  StateVector target;
  NoiseModel noise;
  ExperimentConfig experiment;
};

namespace detail {

inline bool all_finite(const Eigen::Vector3d& v) { return v.allFinite(); }

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ValidationError(path + ": " + what);
}

}  // namespace detail

inline void validate(const RadarNetwork& net) {
  const int m = net.M();
  const int n = net.N();
  detail::require(m >= 1 && n >= 1, "network",
                  "network too small (need at least one transmitter and one receiver)");
  detail::require(2 * m * n >= 6 + 2 * m, "network",
                  "network too small: " + std::to_string(2 * m * n) + " equations for " +
                      std::to_string(6 + 2 * m) + " unknowns");
  for (int i = 0; i < m; ++i) {
    const auto path = "network.transmitters[" + std::to_string(i) + "]";
    detail::require(detail::all_finite(net.transmitters[i].position), path + ".position",
                    "must be finite");
    const double fc = net.transmitters[i].carrier_frequency_hz;
    detail::require(std::isfinite(fc) && fc > 0.0, path + ".fc_hz", "must be > 0");
    for (int k = 0; k < i; ++k) {
      detail::require(net.transmitters[k].position != net.transmitters[i].position, path,
                      "duplicates transmitter " + std::to_string(k));
    }
  }
  for (int j = 0; j < n; ++j) {
    const auto path = "network.receivers[" + std::to_string(j) + "]";
    detail::require(detail::all_finite(net.receivers[j]), path, "must be finite");
    for (int k = 0; k < j; ++k) {
      detail::require(net.receivers[k] != net.receivers[j], path,
                      "duplicates receiver " + std::to_string(k));
    }
  }
}

inline void validate(const Scenario& s) {
  validate(s.network);
  detail::require(detail::all_finite(s.target.position), "target.position_m", "must be finite");
  detail::require(detail::all_finite(s.target.velocity), "target.velocity_mps", "must be finite");
  for (int i = 0; i < s.network.M(); ++i) {
    detail::require(s.network.transmitters[i].position != s.target.position, "target.position_m",
                    "coincides with transmitter " + std::to_string(i));
  }
  for (int j = 0; j < s.network.N(); ++j) {
    detail::require(s.network.receivers[j] != s.target.position, "target.position_m",
                    "coincides with receiver " + std::to_string(j));
  }
  detail::require(std::isfinite(s.noise.sigma_t) && s.noise.sigma_t >= 0.0, "noise.sigma_t_s",
                  "must be >= 0");
  detail::require(std::isfinite(s.noise.doppler_variance_scale) &&
                      s.noise.doppler_variance_scale > 0.0,
                  "noise.doppler_scale", "must be > 0");
  const auto& e = s.experiment;
  detail::require(e.runs >= 1, "experiment.runs", "must be >= 1");
  detail::require(e.stage1_passes >= 1, "experiment.stage1_passes", "must be >= 1");
  detail::require(e.confidence > 0.0 && e.confidence < 1.0, "experiment.confidence",
                  "must lie in (0, 1)");
  detail::require(e.bias_runs >= 1, "experiment.bias_runs", "must be >= 1");
  detail::require(e.histogram_bins >= 1, "experiment.histogram_bins", "must be >= 1");
  detail::require(!e.sigma_grid.empty(), "experiment.sigma_grid", "must not be empty");
  for (std::size_t k = 0; k < e.sigma_grid.size(); ++k) {
    detail::require(e.sigma_grid[k] > 0.0 && std::isfinite(e.sigma_grid[k]),
                    "experiment.sigma_grid[" + std::to_string(k) + "]", "must be > 0");
    if (k > 0) {
      detail::require(e.sigma_grid[k] > e.sigma_grid[k - 1], "experiment.sigma_grid",
                      "must be strictly increasing");
    }
  }
  for (const auto& name : e.estimators) {
    detail::require(name == "wls" || name == "tri", "experiment.estimators",
                    "unknown estimator '" + name + "'");
  }
}

/// Three transmitters and five receivers in western Europe; LEO target.
inline Scenario default_reference_scenario() {
  Scenario s;
  const struct {
    double lat, lon, fc;
  } tx[] = {{37.182, -5.605, 1215e6}, {44.335, 7.638, 1280e6}, {51.616, 7.129, 1330e6}};
  const struct {
    double lat, lon;
  } rx[] = {{40.000, -3.600}, {42.000, 2.300}, {46.000, 4.300}, {49.300, -1.300}, {42.000, 6.300}};
  for (const auto& t : tx) {
    s.network.transmitters.push_back({geodetic_to_ecef({t.lat, t.lon, 0.0}), t.fc});
  }
  for (const auto& r : rx) {
    s.network.receivers.push_back(geodetic_to_ecef({r.lat, r.lon, 0.0}));
  }
  s.target.position = {-2370406.31406129, -3691689.10408981, 4901428.8809492};
  s.target.velocity = {-3931.046491, 6498.676921, 4665.980697};
  s.noise = NoiseModel{};
  return s;
}

// ---------------------------------------------------------------------------
// JSON scenario documents

namespace detail {

using nlohmann::json;

inline double number_at(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ValidationError(path + "." + key + ": missing");
  const auto& v = j.at(key);
  if (!v.is_number()) throw ValidationError(path + "." + key + ": expected a number");
  return v.get<double>();
}

inline Eigen::Vector3d vec3_at(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ValidationError(path + "." + key + ": missing");
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) {
    throw ValidationError(path + "." + key + ": expected an array of 3 numbers");
  }
  Eigen::Vector3d out;
  for (int k = 0; k < 3; ++k) {
    if (!v[k].is_number()) {
      throw ValidationError(path + "." + key + "[" + std::to_string(k) + "]: expected a number");
    }
    out[k] = v[k].get<double>();
  }
  return out;
}

inline EcefPosition station_position(const json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  const bool has_ecef = j.contains("ecef");
  const bool has_geo = j.contains("lat_deg") || j.contains("lon_deg");
  if (has_ecef == has_geo) {
    throw ValidationError(path + ": give exactly one of 'ecef' or 'lat_deg'/'lon_deg'");
  }
  if (has_ecef) return vec3_at(j, "ecef", path);
  GeodeticCoordinate g{number_at(j, "lat_deg", path), number_at(j, "lon_deg", path),
                       j.contains("alt_m") ? number_at(j, "alt_m", path) : 0.0};
  try {
    return geodetic_to_ecef(g);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline json vec3_json(const Eigen::Vector3d& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& doc) {
  using detail::json;
  if (!doc.is_object()) throw ValidationError("scenario: expected a JSON object");
  Scenario s;
  if (!doc.contains("network") || !doc.at("network").is_object()) {
    throw ValidationError("network: missing");
  }
  const auto& net = doc.at("network");
  const auto tx = net.value("transmitters", json::array());
  const auto rx = net.value("receivers", json::array());
  if (!tx.is_array()) throw ValidationError("network.transmitters: expected an array");
  if (!rx.is_array()) throw ValidationError("network.receivers: expected an array");
  for (std::size_t i = 0; i < tx.size(); ++i) {
    const auto path = "network.transmitters[" + std::to_string(i) + "]";
    Transmitter t;
    t.position = detail::station_position(tx[i], path);
    t.carrier_frequency_hz = detail::number_at(tx[i], "fc_hz", path);
    s.network.transmitters.push_back(t);
  }
  for (std::size_t j = 0; j < rx.size(); ++j) {
    s.network.receivers.push_back(
        detail::station_position(rx[j], "network.receivers[" + std::to_string(j) + "]"));
  }

  if (!doc.contains("target") || !doc.at("target").is_object()) {
    throw ValidationError("target: missing");
  }
  s.target.position = detail::vec3_at(doc.at("target"), "position_m", "target");
  s.target.velocity = detail::vec3_at(doc.at("target"), "velocity_mps", "target");

  if (doc.contains("noise")) {
    const auto& n = doc.at("noise");
    if (!n.is_object()) throw ValidationError("noise: expected an object");
    if (n.contains("sigma_t_s")) s.noise.sigma_t = detail::number_at(n, "sigma_t_s", "noise");
    if (n.contains("doppler_scale")) {
      s.noise.doppler_variance_scale = detail::number_at(n, "doppler_scale", "noise");
    }
    if (n.contains("seed")) {
      if (!n.at("seed").is_number_unsigned()) {
        throw ValidationError("noise.seed: expected an unsigned 64-bit integer");
      }
      s.noise.seed = n.at("seed").get<std::uint64_t>();
    }
  }

  if (doc.contains("experiment")) {
    const auto& e = doc.at("experiment");
    if (!e.is_object()) throw ValidationError("experiment: expected an object");
    try {
      auto& x = s.experiment;
      if (e.contains("sigma_grid")) x.sigma_grid = e.at("sigma_grid").get<std::vector<double>>();
      if (e.contains("runs")) x.runs = e.at("runs").get<int>();
      if (e.contains("estimators")) {
        x.estimators = e.at("estimators").get<std::vector<std::string>>();
      }
      if (e.contains("stage1_passes")) x.stage1_passes = e.at("stage1_passes").get<int>();
      if (e.contains("confidence")) x.confidence = e.at("confidence").get<double>();
      if (e.contains("bias_runs")) x.bias_runs = e.at("bias_runs").get<int>();
      if (e.contains("histogram_bins")) x.histogram_bins = e.at("histogram_bins").get<int>();
    } catch (const json::exception& ex) {
      throw ValidationError(std::string("experiment: ") + ex.what());
    }
  }
  validate(s);
  return s;
}

/// Stations are always written in ECEF form so a reload is bit-exact.
inline nlohmann::json scenario_to_json(const Scenario& s) {
  using detail::json;
  json tx = json::array();
  for (const auto& t : s.network.transmitters) {
    tx.push_back({{"ecef", detail::vec3_json(t.position)}, {"fc_hz", t.carrier_frequency_hz}});
  }
  json rx = json::array();
  for (const auto& r : s.network.receivers) rx.push_back({{"ecef", detail::vec3_json(r)}});
  const auto& e = s.experiment;
  return {
      {"network", {{"transmitters", tx}, {"receivers", rx}}},
      {"target",
       {{"position_m", detail::vec3_json(s.target.position)},
        {"velocity_mps", detail::vec3_json(s.target.velocity)}}},
      {"noise",
       {{"sigma_t_s", s.noise.sigma_t},
        {"doppler_scale", s.noise.doppler_variance_scale},
        {"seed", s.noise.seed}}},
      {"experiment",
       {{"sigma_grid", e.sigma_grid},
        {"runs", e.runs},
        {"estimators", e.estimators},
        {"stage1_passes", e.stage1_passes},
        {"confidence", e.confidence},
        {"bias_runs", e.bias_runs},
        {"histogram_bins", e.histogram_bins}}},
  };
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string() + ": cannot open scenario file");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": parse error: " + e.what());
  }
  return scenario_from_json(doc);
}

inline void write_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError(path.string() + ": cannot write scenario file");
  out << scenario_to_json(s).dump(2) << '\n';
}

}  // namespace iod
