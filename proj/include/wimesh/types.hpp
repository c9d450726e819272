// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <Eigen/Dense>

namespace wimesh {

using Real = double;
using Complex = std::complex<Real>;

using Vec2 = Eigen::Matrix<Real, 2, 1>;
using Vec3 = Eigen::Matrix<Real, 3, 1>;
using Mat3 = Eigen::Matrix<Real, 3, 3>;
using RVec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using CVec = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;
using CMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
using Image = Eigen::Array<Real, Eigen::Dynamic, Eigen::Dynamic>;  // (elevation, azimuth)

inline constexpr Real kSpeedOfLight = 299'792'458.0;  // m/s
inline constexpr Real kPi = 3.141592653589793238462643383279502884;

inline constexpr Real deg2rad(Real deg) { return deg * kPi / 180.0; }
inline constexpr Real rad2deg(Real rad) { return rad * 180.0 / kPi; }

}  // namespace wimesh
