#pragma once

namespace iod {

/// Speed of light in vacuum, m/s (exact by SI definition).
inline constexpr double kSpeedOfLight = 299792458.0;

/// WGS-84 reference ellipsoid.
namespace wgs84 {
inline constexpr double kSemiMajorAxis = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kSemiMinorAxis = kSemiMajorAxis * (1.0 - kFlattening);
inline constexpr double kEccentricitySq = kFlattening * (2.0 - kFlattening);
}  // namespace wgs84

/// Default ratio between Doppler and delay noise variances.
inline constexpr double kDefaultDopplerVarianceScale = 1e11;

}  // namespace iod
