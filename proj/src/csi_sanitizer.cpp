// SPDX-License-Identifier: Apache-2.0
#include "wimesh/csi_sanitizer.hpp"

#include <cmath>
#include <stdexcept>

namespace wimesh {

RVec unwrap_subcarrier_phase(const RadioConfig& config, const CsiPacket& packet,
                             int v, int y) {
  if (v < 0 || v >= config.num_tx || y < 0 || y >= config.num_rx)
    throw std::invalid_argument("unwrap_subcarrier_phase: chain out of range");
  if (packet.h.size() != config.joint_dim())
    throw std::invalid_argument("unwrap_subcarrier_phase: packet size mismatch");
  const int m = config.num_subcarriers;
  RVec phase(m);
  Real prev_raw = std::arg(packet.at(config, v, y, 0));
  phase(0) = prev_raw;
  for (int k = 1; k < m; ++k) {
    const Real raw = std::arg(packet.at(config, v, y, k));
    // step wrapped into (-pi, pi]
    Real d = std::remainder(raw - prev_raw, 2.0 * kPi);
    if (d <= -kPi) d = kPi;
    phase(k) = phase(k - 1) + d;
    prev_raw = raw;
  }
  return phase;
}

SanitizeReport fit_linear_offset(const RadioConfig& config, const CsiPacket& packet) {
  if (config.num_subcarriers < 2)
    throw std::invalid_argument("fit_linear_offset: need >= 2 subcarriers");
  const int m = config.num_subcarriers;
  const int chains = config.num_tx * config.num_rx;

  // Closed-form normal equations for phase = -(c0 (k-1) sigma + beta) with a
  // single slope/offset shared by every chain; x is identical across chains so
  // the joint fit reduces to a fit of the chain-averaged phase.
  const Real x_mean = 0.5 * (m - 1);
  Real sxx = 0.0;
  for (int k = 0; k < m; ++k) sxx += (k - x_mean) * (k - x_mean);

  Real sxy = 0.0;
  Real y_sum = 0.0;
  for (int v = 0; v < config.num_tx; ++v) {
    for (int y = 0; y < config.num_rx; ++y) {
      const RVec phase = unwrap_subcarrier_phase(config, packet, v, y);
      for (int k = 0; k < m; ++k) {
        sxy += (k - x_mean) * phase(k);
        y_sum += phase(k);
      }
    }
  }
  const Real slope = sxy / (sxx * chains);        // d(phase)/d(k)
  const Real mean = y_sum / (chains * m);         // mean phase
  const Real c0 = 2.0 * kPi * config.subcarrier_spacing_hz;

  SanitizeReport report;
  report.sigma_s = -slope / c0;
  report.beta_rad = -(mean - slope * x_mean);
  return report;
}

CsiPacket sanitize(const RadioConfig& config, const CsiPacket& packet,
                   SanitizeReport* report) {
  const SanitizeReport fit = fit_linear_offset(config, packet);
  if (report) *report = fit;
  const Real c0 = 2.0 * kPi * config.subcarrier_spacing_hz;
  const int m = config.num_subcarriers;

  CsiPacket out;
  out.timestamp_ns = packet.timestamp_ns;
  out.h.resize(packet.h.size());
  // Per-subcarrier rotation only: identical across chains, so inter-antenna
  // phase differences and amplitudes are preserved.
  std::vector<Complex> rot(m);
  for (int k = 0; k < m; ++k) rot[k] = std::polar(1.0, c0 * k * fit.sigma_s);
  for (int v = 0; v < config.num_tx; ++v)
    for (int y = 0; y < config.num_rx; ++y)
      for (int k = 0; k < m; ++k) {
        const int i = config.flat_index(v, y, k);
        out.h(i) = packet.h(i) * rot[k];
      }
  return out;
}

CsiTrace sanitize(const CsiTrace& trace) {
  CsiTrace out;
  out.radio = trace.radio;
  out.packets.reserve(trace.packets.size());
  for (const auto& p : trace.packets) out.packets.push_back(sanitize(trace.radio, p));
  return out;
}

}  // namespace wimesh
