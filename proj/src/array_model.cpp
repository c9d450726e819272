// SPDX-License-Identifier: Apache-2.0
#include "wimesh/array_model.hpp"

#include <cmath>
#include <stdexcept>

namespace wimesh {

void RadioConfig::validate() const {
  if (carrier_freq_hz <= 0 || bandwidth_hz <= 0)
    throw std::invalid_argument("RadioConfig: frequencies must be positive");
  if (num_subcarriers < 1 || num_tx < 1 || num_rx < 1)
    throw std::invalid_argument("RadioConfig: counts must be >= 1");
  if (tx_spacing_m <= 0 || rx_spacing_m <= 0)
    throw std::invalid_argument("RadioConfig: spacings must be positive");
  const Real derived = bandwidth_hz / num_subcarriers;
  if (std::abs(subcarrier_spacing_hz - derived) > 1e-6 * derived)
    throw std::invalid_argument(
        "RadioConfig: subcarrier_spacing_hz != bandwidth_hz / num_subcarriers");
}

ArrayGeometry ArrayGeometry::l_shaped(int num_elements, Real spacing_m) {
  if (num_elements < 1) throw std::invalid_argument("l_shaped: need >= 1 element");
  if (spacing_m <= 0) throw std::invalid_argument("l_shaped: spacing must be positive");
  ArrayGeometry g;
  g.layout_tag = "l_shaped";
  g.rx_elements.reserve(num_elements);
  g.rx_elements.push_back(Vec2(0.0, 0.0));
  const int x_arm = (num_elements - 1 + 1) / 2;  // corner excluded
  const int z_arm = num_elements - 1 - x_arm;
  for (int i = 1; i <= x_arm; ++i) g.rx_elements.push_back(Vec2(i * spacing_m, 0.0));
  for (int i = 1; i <= z_arm; ++i) g.rx_elements.push_back(Vec2(0.0, i * spacing_m));
  return g;
}

void ArrayGeometry::validate(const RadioConfig& config) const {
  if (static_cast<int>(rx_elements.size()) != config.num_rx)
    throw std::invalid_argument("ArrayGeometry: element count != num_rx");
  if (rx_elements.empty() || rx_elements[0].x() != 0.0 || rx_elements[0].y() != 0.0)
    throw std::invalid_argument("ArrayGeometry: reference element must sit at the origin");
  for (std::size_t i = 0; i < rx_elements.size(); ++i)
    for (std::size_t j = i + 1; j < rx_elements.size(); ++j)
      if (rx_elements[i] == rx_elements[j])
        throw std::invalid_argument("ArrayGeometry: duplicate element coordinates");
}

void Direction::validate() const {
  if (!(azimuth_deg >= 0.0 && azimuth_deg <= 180.0))
    throw std::invalid_argument("Direction: azimuth out of [0, 180]");
  if (!(elevation_deg >= 0.0 && elevation_deg <= 180.0))
    throw std::invalid_argument("Direction: elevation out of [0, 180]");
}

void PathSignature::validate() const {
  direction.validate();
  if (!(aod_deg >= -90.0 && aod_deg <= 90.0))
    throw std::invalid_argument("PathSignature: aod out of [-90, 90]");
  if (!(tof_s >= 0.0)) throw std::invalid_argument("PathSignature: tof must be >= 0");
}

Complex rx_phase(const RadioConfig& config, const ArrayGeometry& geometry,
                 int element_index, const Direction& dir) {
  if (element_index < 0 || element_index >= config.num_rx)
    throw std::invalid_argument("rx_phase: element index out of range");
  geometry.validate(config);
  dir.validate();
  const Real az = deg2rad(dir.azimuth_deg);
  const Real el = deg2rad(dir.elevation_deg);
  const Vec2& e = geometry.rx_elements[element_index];
  const Real path_m = e.x() * std::sin(el) * std::cos(az) + e.y() * std::cos(el);
  const Real phase = -2.0 * kPi * config.carrier_freq_hz * path_m / kSpeedOfLight;
  return std::polar(1.0, phase);
}

CVec steering_vector_2d(const RadioConfig& config, const ArrayGeometry& geometry,
                        const Direction& dir) {
  geometry.validate(config);
  dir.validate();
  const Real az = deg2rad(dir.azimuth_deg);
  const Real el = deg2rad(dir.elevation_deg);
  const Real sin_el_cos_az = std::sin(el) * std::cos(az);
  const Real cos_el = std::cos(el);
  const Real scale = -2.0 * kPi * config.carrier_freq_hz / kSpeedOfLight;
  CVec a(config.num_rx);
  for (int y = 0; y < config.num_rx; ++y) {
    const Vec2& e = geometry.rx_elements[y];
    a(y) = std::polar(1.0, scale * (e.x() * sin_el_cos_az + e.y() * cos_el));
  }
  return a;
}

Complex tx_shift(const RadioConfig& config, Real aod_deg) {
  const Real phase = -2.0 * kPi * config.carrier_freq_hz * config.tx_spacing_m *
                     std::sin(deg2rad(aod_deg)) / kSpeedOfLight;
  return std::polar(1.0, phase);
}

Complex subcarrier_shift(const RadioConfig& config, Real tof_s) {
  return std::polar(1.0, -2.0 * kPi * config.subcarrier_spacing_hz * tof_s);
}

static CVec joint_steering_impl(const RadioConfig& config, const ArrayGeometry& geometry,
                                const PathSignature& sig,
                                const std::vector<int>& subcarrier_ids) {
  sig.validate();
  const CVec rx = steering_vector_2d(config, geometry, sig.direction);
  const Real psi_phase = -2.0 * kPi * config.carrier_freq_hz * config.tx_spacing_m *
                         std::sin(deg2rad(sig.aod_deg)) / kSpeedOfLight;
  const Real omega_phase = -2.0 * kPi * config.subcarrier_spacing_hz * sig.tof_s;
  const int m = static_cast<int>(subcarrier_ids.size());

  CVec sub(m);
  for (int c = 0; c < m; ++c) {
    const int k = subcarrier_ids[c];
    if (k < 0 || k >= config.num_subcarriers)
      throw std::invalid_argument("joint_steering_vector: subcarrier id out of range");
    sub(c) = std::polar(1.0, k * omega_phase);
  }

  CVec a(config.num_tx * config.num_rx * m);
  int idx = 0;
  for (int v = 0; v < config.num_tx; ++v) {
    const Complex tx_factor = std::polar(1.0, v * psi_phase);
    for (int y = 0; y < config.num_rx; ++y) {
      const Complex ty = tx_factor * rx(y);
      for (int c = 0; c < m; ++c) a(idx++) = ty * sub(c);
    }
  }
  return a;
}

CVec joint_steering_vector(const RadioConfig& config, const ArrayGeometry& geometry,
                           const PathSignature& sig) {
  std::vector<int> ids(config.num_subcarriers);
  for (int k = 0; k < config.num_subcarriers; ++k) ids[k] = k;
  return joint_steering_impl(config, geometry, sig, ids);
}

CVec joint_steering_vector(const RadioConfig& config, const ArrayGeometry& geometry,
                           const PathSignature& sig,
                           const std::vector<int>& subcarrier_ids) {
  return joint_steering_impl(config, geometry, sig, subcarrier_ids);
}

}  // namespace wimesh
