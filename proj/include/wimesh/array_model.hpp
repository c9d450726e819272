// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "wimesh/types.hpp"

namespace wimesh {

/// Radio configuration of one transmitter / receiver pair.
///
/// Subcarrier spacing is tied to bandwidth / num_subcarriers; validate()
/// rejects inconsistent values.
struct RadioConfig {
  Real carrier_freq_hz = 5.32e9;
  Real bandwidth_hz = 40e6;
  Real subcarrier_spacing_hz = 40e6 / 30.0;
  int num_subcarriers = 30;
  int num_tx = 3;
  int num_rx = 9;
  Real tx_spacing_m = 0.028;
  Real rx_spacing_m = 0.028;

  Real wavelength_m() const { return kSpeedOfLight / carrier_freq_hz; }
  int joint_dim() const { return num_tx * num_rx * num_subcarriers; }

  // Flat index of (tx v, rx y, subcarrier k); tx-major, then rx, then
  // subcarrier. Covariance vectorization and trace files share this order.
  int flat_index(int v, int y, int k) const {
    return (v * num_rx + y) * num_subcarriers + k;
  }

  void validate() const;  // throws std::invalid_argument
};

/// Receive array element positions in the array plane, meters.
/// Elements live in the local X-Z plane; the reference element is the origin.
struct ArrayGeometry {
  std::vector<Vec2> rx_elements;  // (X, Z)
  std::string layout_tag = "l_shaped";

  // Two orthogonal uniform arms sharing the corner element at the origin:
  // element 0 = corner, then the +X arm, then the +Z arm.
  static ArrayGeometry l_shaped(int num_elements, Real spacing_m);

  void validate(const RadioConfig& config) const;
};

/// Incidence direction at a receiver. Azimuth is measured from the +X axis
/// inside the front half-space (y >= 0); elevation from the +Z axis.
struct Direction {
  Real azimuth_deg = 90.0;
  Real elevation_deg = 90.0;

  void validate() const;
};

/// One propagation path as seen by a receiver.
struct PathSignature {
  Direction direction;
  Real aod_deg = 0.0;  // departure angle from transmit-array broadside
  Real tof_s = 0.0;

  void validate() const;
};

/// Per-element receive phasor: exp(-j 2 pi f [X sin(el) cos(az) + Z cos(el)] / c).
Complex rx_phase(const RadioConfig& config, const ArrayGeometry& geometry,
                 int element_index, const Direction& dir);

/// Receive-array steering vector, length num_rx. Entry 0 is exactly 1.
CVec steering_vector_2d(const RadioConfig& config, const ArrayGeometry& geometry,
                        const Direction& dir);

/// Adjacent-transmit-antenna phase shift exp(-j 2 pi f d sin(aod) / c).
Complex tx_shift(const RadioConfig& config, Real aod_deg);

/// Adjacent-subcarrier phase shift exp(-j 2 pi f_delta tof).
Complex subcarrier_shift(const RadioConfig& config, Real tof_s);

/// Joint steering vector over (tx, rx, subcarrier) diversity, length
/// num_tx * num_rx * num_subcarriers, entries in flat_index() order:
/// entry(v, y, k) = tx_shift^v * rx_phase(y) * subcarrier_shift^k.
CVec joint_steering_vector(const RadioConfig& config, const ArrayGeometry& geometry,
                           const PathSignature& sig);

/// Same with an explicit subcarrier subset (for decimated covariance);
/// subcarrier_ids are original indices, exponents keep the full aperture.
CVec joint_steering_vector(const RadioConfig& config, const ArrayGeometry& geometry,
                           const PathSignature& sig,
                           const std::vector<int>& subcarrier_ids);

}  // namespace wimesh
