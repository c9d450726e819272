// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "wimesh/array_model.hpp"
#include "wimesh/types.hpp"

namespace wimesh {

/// One CSI snapshot: complex channel values over (tx, rx, subcarrier) in
/// RadioConfig::flat_index order.
struct CsiPacket {
  std::int64_t timestamp_ns = 0;
  CVec h;

  Complex at(const RadioConfig& config, int v, int y, int k) const {
    return h(config.flat_index(v, y, k));
  }
};

struct CsiTrace {
  RadioConfig radio;
  std::vector<CsiPacket> packets;
};

/// Fitted per-packet phase ramp: a common delay (seconds) and offset (radians)
/// across subcarriers, joint over all (tx, rx) chains.
struct SanitizeReport {
  Real sigma_s = 0.0;
  Real beta_rad = 0.0;
};

/// Unwrapped phase of chain (v, y) across subcarriers; successive differences
/// fall in (-pi, pi] and the result equals the raw phase mod 2 pi.
RVec unwrap_subcarrier_phase(const RadioConfig& config, const CsiPacket& packet,
                             int v, int y);

/// Least-squares (sigma, beta) minimizing
///   sum_{v,y,k} (phase(v,y,k) + 2 pi f_delta (k-1) sigma + beta)^2
/// over unwrapped phases. Requires num_subcarriers >= 2.
SanitizeReport fit_linear_offset(const RadioConfig& config, const CsiPacket& packet);

/// Remove the fitted cross-subcarrier ramp. Amplitudes and inter-chain phase
/// differences are untouched; the mean path delay is absorbed, so only
/// relative ToF across paths survives downstream.
CsiPacket sanitize(const RadioConfig& config, const CsiPacket& packet,
                   SanitizeReport* report = nullptr);

/// Per-packet sanitize over a whole trace (one receiver).
CsiTrace sanitize(const CsiTrace& trace);

}  // namespace wimesh
