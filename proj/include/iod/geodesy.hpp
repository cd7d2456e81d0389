#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "iod/constants.hpp"
#include "iod/errors.hpp"

namespace iod {

using EcefPosition = Eigen::Vector3d;

struct GeodeticCoordinate {
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  double altitude_m = 0.0;
};

inline void validate(const GeodeticCoordinate& g) {
  if (!std::isfinite(g.latitude_deg) || g.latitude_deg < -90.0 || g.latitude_deg > 90.0) {
    throw ValidationError("latitude " + std::to_string(g.latitude_deg) + " deg outside [-90, 90]");
  }
  if (!std::isfinite(g.longitude_deg) || g.longitude_deg < -180.0 || g.longitude_deg > 180.0) {
    throw ValidationError("longitude " + std::to_string(g.longitude_deg) +
                          " deg outside [-180, 180]");
  }
  if (!std::isfinite(g.altitude_m)) {
    throw ValidationError("altitude must be finite");
  }
}

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Geodetic (WGS-84) to Earth-centered Earth-fixed coordinates.
inline EcefPosition geodetic_to_ecef(const GeodeticCoordinate& g) {
  validate(g);
  const double lat = deg_to_rad(g.latitude_deg);
  const double lon = deg_to_rad(g.longitude_deg);
  const double sin_lat = std::sin(lat);
  const double cos_lat = std::cos(lat);
  // prime vertical radius of curvature
  const double n = wgs84::kSemiMajorAxis / std::sqrt(1.0 - wgs84::kEccentricitySq * sin_lat * sin_lat);
  return {(n + g.altitude_m) * cos_lat * std::cos(lon),
          (n + g.altitude_m) * cos_lat * std::sin(lon),
          (n * (1.0 - wgs84::kEccentricitySq) + g.altitude_m) * sin_lat};
}

}  // namespace iod
