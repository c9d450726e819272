// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wimesh/array_model.hpp"
#include "wimesh/csi_sanitizer.hpp"
#include "wimesh/types.hpp"

namespace wimesh {

struct CovarianceOptions {
  // Forward-backward averaging doubles the snapshot count but assumes a
  // centro-symmetric element layout; the joint L-array vectorization is not
  // centro-symmetric and the backward term aliases each source to a phantom
  // at swapped direction cosines, so it stays off unless explicitly enabled.
  bool forward_backward = false;
  int decimation = 3;  // subcarrier stride; 1 = full dimension
};

/// Sample covariance of vectorized packets, averaged over a window.
struct CovarianceMatrix {
  CMat r;
  int num_packets = 0;
  std::vector<int> subcarrier_ids;  // original indices kept after decimation

  int dim() const { return static_cast<int>(r.rows()); }
};

CovarianceMatrix build_covariance(const RadioConfig& config,
                                  std::span<const CsiPacket> window,
                                  const CovarianceOptions& options = {});

/// Eigenstructure split into signal and noise subspaces. Eigenvalues are
/// descending; basis columns are orthonormal. Both bases are kept: the noise
/// basis carries the subspace contract, the signal basis drives the fast
/// complement evaluation of the spectrum.
struct SubspaceDecomposition {
  RVec eigenvalues;
  CMat noise_basis;   // D x (D - J)
  CMat signal_basis;  // D x J
  int num_sources = 0;
  std::vector<int> subcarrier_ids;
};

/// Count of eigenvalues above ratio * max, clamped to [1, D-1];
/// fixed_num_sources > 0 overrides the rule.
int estimate_num_sources(const RVec& eigenvalues_descending, Real ratio = 0.05,
                         int fixed_num_sources = 0);

/// Hermitian eigendecomposition with the module invariants asserted
/// (Hermitian input, PSD, trace match, orthonormal bases).
SubspaceDecomposition decompose(const CovarianceMatrix& cov, Real source_ratio = 0.05,
                                int fixed_num_sources = 0);

struct SpectrumGrid {
  std::vector<Real> azimuth_deg;
  std::vector<Real> elevation_deg;
  std::vector<Real> aod_deg;
  std::vector<Real> tof_s;

  std::size_t cells() const {
    return azimuth_deg.size() * elevation_deg.size() * aod_deg.size() * tof_s.size();
  }
};

/// 4D spectrum block shaped (azimuth, elevation, aod, tof), row-major in that
/// order. clamped_cells counts denominators at/below the numeric floor (true
/// signal directions in exact cases) replaced by the ceiling.
struct Spectrum4D {
  SpectrumGrid grid;
  RVec values;
  int clamped_cells = 0;

  Real at(int ia, int ie, int iw, int it) const {
    const auto ne = grid.elevation_deg.size();
    const auto nw = grid.aod_deg.size();
    const auto nt = grid.tof_s.size();
    return values(((ia * ne + ie) * nw + iw) * nt + it);
  }
};

Spectrum4D pseudospectrum(const RadioConfig& config, const ArrayGeometry& geometry,
                          const SubspaceDecomposition& decomp, const SpectrumGrid& grid,
                          Real clamp_ceiling = 1e12);

/// Nonnegative (azimuth, elevation) image; values(el_idx, az_idx).
struct AoaImage {
  Image values;
  std::vector<Real> azimuth_axis_deg;
  std::vector<Real> elevation_axis_deg;
  int frame_index = 0;
  int receiver_index = 0;
  int clamped_cells = 0;
};

/// Sum the spectrum over the ToF and AoD dimensions.
AoaImage accumulate_aoa_image(const Spectrum4D& spectrum);

enum class SearchMode { exhaustive, coarse_to_fine };

struct SearchConfig {
  SearchMode mode = SearchMode::coarse_to_fine;
  int coarse_step_deg = 3;
  int refine_radius_deg = 4;
  int top_q = 10;
  int aod_points = 19;
  int tof_points = 16;
  Real tof_span_s = -1.0;  // < 0: 2 * num_subcarriers / bandwidth
  CovarianceOptions covariance;
  Real source_ratio = 0.05;
  int fixed_num_sources = 0;
  Real clamp_ceiling = 1e12;
};

struct EstimateStats {
  std::uint64_t steering_evaluations = 0;
  int num_sources = 0;
  int clamped_cells = 0;
};

/// Covariance -> subspace -> accumulated 2D AoA image over the full 180 x 180
/// 1-degree grid. Exhaustive mode is literally pseudospectrum + accumulate;
/// coarse_to_fine evaluates a decimated grid, refines around the top-Q coarse
/// cells, and fills unvisited pixels with the bilinear coarse interpolant.
/// Refined pixel values are bit-identical to the exhaustive ones.
AoaImage estimate_frame(const RadioConfig& config, const ArrayGeometry& geometry,
                        std::span<const CsiPacket> window, const SearchConfig& search,
                        EstimateStats* stats = nullptr);

/// Strict 8-neighborhood local maxima, sorted by value descending, ties by
/// lowest linear (row-major) index. Returns (el_idx, az_idx) pairs.
std::vector<std::pair<int, int>> find_peaks(const Image& image, int max_count);

/// Argmax cell (el_idx, az_idx), ties by lowest linear index.
std::pair<int, int> argmax_cell(const Image& image);

}  // namespace wimesh
