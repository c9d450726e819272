// SPDX-License-Identifier: Apache-2.0
#include "wimesh/music_estimator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wimesh/parallel.hpp"

namespace wimesh {

namespace {

std::vector<int> decimated_subcarriers(const RadioConfig& config, int stride) {
  if (stride < 1) throw std::invalid_argument("decimation stride must be >= 1");
  std::vector<int> ids;
  for (int k = 0; k < config.num_subcarriers; k += stride) ids.push_back(k);
  return ids;
}

CVec vectorize(const RadioConfig& config, const CsiPacket& packet,
               const std::vector<int>& subcarrier_ids) {
  const int m = static_cast<int>(subcarrier_ids.size());
  CVec x(config.num_tx * config.num_rx * m);
  int idx = 0;
  for (int v = 0; v < config.num_tx; ++v)
    for (int y = 0; y < config.num_rx; ++y)
      for (int c = 0; c < m; ++c)
        x(idx++) = packet.h(config.flat_index(v, y, subcarrier_ids[c]));
  return x;
}

std::vector<Real> linspace(Real lo, Real hi, int n) {
  std::vector<Real> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  return v;
}

// Shared evaluation state for the spectrum kernel. The complement identity
//   ||E_N^H a||^2 = ||a||^2 - ||E_S^H a||^2
// turns each cell into J short contractions; the steering factorization over
// (tx, rx, subcarrier) collapses them further. The subcarrier dimension is
// contracted once per (source, tof) into C, and the rx dimension once per
// pixel into G, leaving 3 multiplies per (aod, tof, source) cell.
struct SpectrumContext {
  const RadioConfig* config;
  const ArrayGeometry* geometry;
  int num_sources = 0;
  int n_aod = 0, n_tof = 0;
  int K = 0, N = 0;
  Real norm2 = 0.0;          // ||a||^2 = D for unit-modulus entries
  Real floor = 0.0;          // clamp threshold on the denominator
  Real ceiling = 1e12;
  std::vector<Real> aod_deg, tof_s;
  // psi[iw * K + v]
  std::vector<Complex> psi;
  // c_table[((j * n_tof) + it) * (K*N) + (v*N + y)]
  std::vector<Complex> c_table;
  bool direct_noise_path = false;  // fall back to ||E_N^H a||^2
  const CMat* noise_basis = nullptr;
  std::vector<int> subcarrier_ids;

  void prepare(const RadioConfig& cfg, const ArrayGeometry& geom,
               const SubspaceDecomposition& decomp, const std::vector<Real>& aod,
               const std::vector<Real>& tof, Real clamp_ceiling) {
    config = &cfg;
    geometry = &geom;
    aod_deg = aod;
    tof_s = tof;
    n_aod = static_cast<int>(aod.size());
    n_tof = static_cast<int>(tof.size());
    K = cfg.num_tx;
    N = cfg.num_rx;
    subcarrier_ids = decomp.subcarrier_ids;
    const int m = static_cast<int>(subcarrier_ids.size());
    const int dim = K * N * m;
    norm2 = static_cast<Real>(dim);
    floor = norm2 * 1e-14;
    ceiling = clamp_ceiling;
    num_sources = decomp.num_sources;

    direct_noise_path = decomp.signal_basis.cols() != decomp.num_sources;
    noise_basis = &decomp.noise_basis;

    psi.resize(static_cast<std::size_t>(n_aod) * K);
    for (int iw = 0; iw < n_aod; ++iw) {
      const Real phase = -2.0 * kPi * cfg.carrier_freq_hz * cfg.tx_spacing_m *
                         std::sin(deg2rad(aod_deg[iw])) / kSpeedOfLight;
      for (int v = 0; v < K; ++v) psi[iw * K + v] = std::polar(1.0, v * phase);
    }

    if (!direct_noise_path) {
      c_table.assign(static_cast<std::size_t>(num_sources) * n_tof * K * N, Complex(0, 0));
      for (int j = 0; j < num_sources; ++j) {
        for (int it = 0; it < n_tof; ++it) {
          const Real omega_phase = -2.0 * kPi * cfg.subcarrier_spacing_hz * tof_s[it];
          Complex* out = &c_table[(static_cast<std::size_t>(j) * n_tof + it) * K * N];
          for (int v = 0; v < K; ++v)
            for (int y = 0; y < N; ++y) {
              Complex acc(0, 0);
              for (int c = 0; c < m; ++c) {
                const Complex e = decomp.signal_basis((v * N + y) * m + c, j);
                acc += std::conj(e) * std::polar(1.0, subcarrier_ids[c] * omega_phase);
              }
              out[v * N + y] = acc;
            }
        }
      }
    }
  }

  // Spectrum cells for one (azimuth, elevation) pixel, emitted in (aod, tof)
  // row-major order; sink(iw, it, value, clamped).
  template <typename Sink>
  void eval_pixel(Real az_deg, Real el_deg, Sink&& sink) const {
    const Real az = deg2rad(az_deg);
    const Real el = deg2rad(el_deg);
    const Real sin_el_cos_az = std::sin(el) * std::cos(az);
    const Real cos_el = std::cos(el);
    const Real scale = -2.0 * kPi * config->carrier_freq_hz / kSpeedOfLight;
    std::vector<Complex> phi(N);
    for (int y = 0; y < N; ++y) {
      const Vec2& e = geometry->rx_elements[y];
      phi[y] = std::polar(1.0, scale * (e.x() * sin_el_cos_az + e.y() * cos_el));
    }

    if (direct_noise_path) {
      eval_pixel_direct(phi, sink);
      return;
    }

    // G[(j * K + v) * n_tof + it] = sum_y phi_y * C_j(v, y; it)
    std::vector<Complex> g(static_cast<std::size_t>(num_sources) * K * n_tof);
    for (int j = 0; j < num_sources; ++j)
      for (int it = 0; it < n_tof; ++it) {
        const Complex* c = &c_table[(static_cast<std::size_t>(j) * n_tof + it) * K * N];
        for (int v = 0; v < K; ++v) {
          Complex acc(0, 0);
          for (int y = 0; y < N; ++y) acc += phi[y] * c[v * N + y];
          g[(static_cast<std::size_t>(j) * K + v) * n_tof + it] = acc;
        }
      }

    for (int iw = 0; iw < n_aod; ++iw) {
      const Complex* p = &psi[static_cast<std::size_t>(iw) * K];
      for (int it = 0; it < n_tof; ++it) {
        Real projected = 0.0;
        for (int j = 0; j < num_sources; ++j) {
          Complex acc(0, 0);
          const Complex* gj = &g[static_cast<std::size_t>(j) * K * n_tof];
          for (int v = 0; v < K; ++v) acc += p[v] * gj[v * n_tof + it];
          projected += std::norm(acc);
        }
        const Real denom = norm2 - projected;
        bool clamped = false;
        Real value;
        if (denom <= floor) {
          value = ceiling;
          clamped = true;
        } else {
          value = 1.0 / denom;
          if (value > ceiling) {
            value = ceiling;
            clamped = true;
          }
        }
        sink(iw, it, value, clamped);
      }
    }
  }

  template <typename Sink>
  void eval_pixel_direct(const std::vector<Complex>& phi, Sink&& sink) const {
    const int m = static_cast<int>(subcarrier_ids.size());
    CVec a(K * N * m);
    for (int iw = 0; iw < n_aod; ++iw) {
      const Complex* p = &psi[static_cast<std::size_t>(iw) * K];
      for (int it = 0; it < n_tof; ++it) {
        const Real omega_phase = -2.0 * kPi * config->subcarrier_spacing_hz * tof_s[it];
        int idx = 0;
        for (int v = 0; v < K; ++v)
          for (int y = 0; y < N; ++y) {
            const Complex t = p[v] * phi[y];
            for (int c = 0; c < m; ++c)
              a(idx++) = t * std::polar(1.0, subcarrier_ids[c] * omega_phase);
          }
        const Real denom = (noise_basis->adjoint() * a).squaredNorm();
        bool clamped = false;
        Real value;
        if (denom <= floor) {
          value = ceiling;
          clamped = true;
        } else {
          value = 1.0 / denom;
          if (value > ceiling) {
            value = ceiling;
            clamped = true;
          }
        }
        sink(iw, it, value, clamped);
      }
    }
  }
};

}  // namespace

CovarianceMatrix build_covariance(const RadioConfig& config,
                                  std::span<const CsiPacket> window,
                                  const CovarianceOptions& options) {
  if (window.empty()) throw std::invalid_argument("build_covariance: empty window");
  config.validate();
  CovarianceMatrix cov;
  cov.subcarrier_ids = decimated_subcarriers(config, options.decimation);
  const int dim = config.num_tx * config.num_rx * static_cast<int>(cov.subcarrier_ids.size());
  cov.r = CMat::Zero(dim, dim);
  cov.num_packets = static_cast<int>(window.size());
  for (const auto& packet : window) {
    if (packet.h.size() != config.joint_dim())
      throw std::invalid_argument("build_covariance: packet size mismatch");
    const CVec x = vectorize(config, packet, cov.subcarrier_ids);
    cov.r.noalias() += x * x.adjoint();
  }
  cov.r /= static_cast<Real>(cov.num_packets);

  if (options.forward_backward) {
    CMat flipped = cov.r.conjugate();
    flipped.colwise().reverseInPlace();
    flipped.rowwise().reverseInPlace();
    cov.r = (cov.r + flipped) / 2.0;
  }
  return cov;
}

int estimate_num_sources(const RVec& eigenvalues_descending, Real ratio,
                         int fixed_num_sources) {
  const int d = static_cast<int>(eigenvalues_descending.size());
  if (d < 1) throw std::invalid_argument("estimate_num_sources: empty eigenvalues");
  const int cap = std::max(1, d - 1);
  if (fixed_num_sources > 0) return std::clamp(fixed_num_sources, 1, cap);
  const Real cut = ratio * eigenvalues_descending(0);
  int count = 0;
  for (int i = 0; i < d; ++i)
    if (eigenvalues_descending(i) > cut) ++count;
  return std::clamp(count, 1, cap);
}

SubspaceDecomposition decompose(const CovarianceMatrix& cov, Real source_ratio,
                                int fixed_num_sources) {
  const int d = cov.dim();
  if (d < 2) throw std::invalid_argument("decompose: covariance too small");

  const Real herm_err = (cov.r - cov.r.adjoint()).cwiseAbs().maxCoeff();
  if (herm_err > 1e-9)
    throw std::runtime_error("decompose: covariance is not Hermitian");

  Eigen::SelfAdjointEigenSolver<CMat> solver(cov.r);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("decompose: eigensolver failed");

  const Real trace = cov.r.real().trace();
  if (solver.eigenvalues().minCoeff() < -1e-9 * std::max(trace, 1.0))
    throw std::runtime_error("decompose: covariance is not PSD");
  if (std::abs(solver.eigenvalues().sum() - trace) > 1e-6 * std::max(std::abs(trace), 1.0))
    throw std::runtime_error("decompose: eigenvalue sum does not match trace");

  SubspaceDecomposition out;
  out.subcarrier_ids = cov.subcarrier_ids;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.num_sources = estimate_num_sources(out.eigenvalues, source_ratio, fixed_num_sources);

  const int j = out.num_sources;
  out.signal_basis.resize(d, j);
  for (int c = 0; c < j; ++c) out.signal_basis.col(c) = solver.eigenvectors().col(d - 1 - c);
  out.noise_basis.resize(d, d - j);
  for (int c = 0; c < d - j; ++c)
    out.noise_basis.col(c) = solver.eigenvectors().col(d - 1 - j - c);

  const Real ortho =
      (out.noise_basis.adjoint() * out.noise_basis - CMat::Identity(d - j, d - j))
          .cwiseAbs()
          .maxCoeff();
  if (ortho > 1e-8) throw std::runtime_error("decompose: noise basis not orthonormal");
  return out;
}

Spectrum4D pseudospectrum(const RadioConfig& config, const ArrayGeometry& geometry,
                          const SubspaceDecomposition& decomp, const SpectrumGrid& grid,
                          Real clamp_ceiling) {
  if (grid.cells() == 0) throw std::invalid_argument("pseudospectrum: empty grid");
  geometry.validate(config);

  SpectrumContext ctx;
  ctx.prepare(config, geometry, decomp, grid.aod_deg, grid.tof_s, clamp_ceiling);

  Spectrum4D out;
  out.grid = grid;
  out.values.resize(static_cast<Eigen::Index>(grid.cells()));

  const int n_az = static_cast<int>(grid.azimuth_deg.size());
  const int n_el = static_cast<int>(grid.elevation_deg.size());
  const int block = ctx.n_aod * ctx.n_tof;
  std::atomic<int> clamped{0};

  parallel_for(0, static_cast<std::int64_t>(n_az) * n_el, [&](std::int64_t pix) {
    const int ia = static_cast<int>(pix / n_el);
    const int ie = static_cast<int>(pix % n_el);
    Real* base = out.values.data() + (static_cast<std::int64_t>(ia) * n_el + ie) * block;
    int local_clamped = 0;
    ctx.eval_pixel(grid.azimuth_deg[ia], grid.elevation_deg[ie],
                   [&](int iw, int it, Real value, bool was_clamped) {
                     base[iw * ctx.n_tof + it] = value;
                     if (was_clamped) ++local_clamped;
                   });
    clamped += local_clamped;
  });
  out.clamped_cells = clamped.load();
  return out;
}

AoaImage accumulate_aoa_image(const Spectrum4D& spectrum) {
  const int n_az = static_cast<int>(spectrum.grid.azimuth_deg.size());
  const int n_el = static_cast<int>(spectrum.grid.elevation_deg.size());
  const int n_aod = static_cast<int>(spectrum.grid.aod_deg.size());
  const int n_tof = static_cast<int>(spectrum.grid.tof_s.size());

  AoaImage image;
  image.azimuth_axis_deg = spectrum.grid.azimuth_deg;
  image.elevation_axis_deg = spectrum.grid.elevation_deg;
  image.clamped_cells = spectrum.clamped_cells;
  image.values.setZero(n_el, n_az);
  for (int ia = 0; ia < n_az; ++ia)
    for (int ie = 0; ie < n_el; ++ie) {
      const Real* base =
          spectrum.values.data() + (static_cast<std::int64_t>(ia) * n_el + ie) * n_aod * n_tof;
      Real sum = 0.0;
      for (int c = 0; c < n_aod * n_tof; ++c) sum += base[c];
      image.values(ie, ia) = sum;
    }
  return image;
}

AoaImage estimate_frame(const RadioConfig& config, const ArrayGeometry& geometry,
                        std::span<const CsiPacket> window, const SearchConfig& search,
                        EstimateStats* stats) {
  const CovarianceMatrix cov = build_covariance(config, window, search.covariance);
  const SubspaceDecomposition decomp =
      decompose(cov, search.source_ratio, search.fixed_num_sources);

  SpectrumGrid grid;
  grid.azimuth_deg = linspace(0.0, 179.0, 180);
  grid.elevation_deg = linspace(0.0, 179.0, 180);
  grid.aod_deg = linspace(-90.0, 90.0, search.aod_points);
  // Sanitation absorbs the mean path delay, so residual ToFs cluster around
  // zero; the grid is a zero-centered comb fine enough to keep any residual
  // within half a step of a cell (default +/-25.6 ns, 3.2 ns step).
  const Real span = search.tof_span_s > 0.0 ? search.tof_span_s : 51.2e-9;
  grid.tof_s.resize(search.tof_points);
  const Real tof_step = span / search.tof_points;
  for (int i = 0; i < search.tof_points; ++i)
    grid.tof_s[i] = (i - search.tof_points / 2) * tof_step;

  const std::uint64_t cells_per_pixel =
      static_cast<std::uint64_t>(search.aod_points) * search.tof_points;

  if (stats) {
    stats->num_sources = decomp.num_sources;
    stats->steering_evaluations = 0;
    stats->clamped_cells = 0;
  }

  if (search.mode == SearchMode::exhaustive) {
    const Spectrum4D spectrum =
        pseudospectrum(config, geometry, decomp, grid, search.clamp_ceiling);
    AoaImage image = accumulate_aoa_image(spectrum);
    if (stats) {
      stats->steering_evaluations = spectrum.grid.cells();
      stats->clamped_cells = spectrum.clamped_cells;
    }
    return image;
  }

  // Coarse pass on a decimated pixel grid (full aod/tof block per pixel).
  SpectrumContext ctx;
  ctx.prepare(config, geometry, decomp, grid.aod_deg, grid.tof_s, search.clamp_ceiling);

  const int step = std::max(1, search.coarse_step_deg);
  const int n_fine = 180;
  const int nc = (n_fine + step - 1) / step;
  Image coarse(nc, nc);
  Image coarse_rank(nc, nc);  // per-pixel max over (aod, tof): peak-sensitive
  std::atomic<int> clamped{0};
  std::uint64_t evaluations = 0;

  parallel_for(0, static_cast<std::int64_t>(nc) * nc, [&](std::int64_t pix) {
    const int ca = static_cast<int>(pix / nc);
    const int ce = static_cast<int>(pix % nc);
    Real sum = 0.0;
    Real peak = 0.0;
    int local_clamped = 0;
    ctx.eval_pixel(grid.azimuth_deg[ca * step], grid.elevation_deg[ce * step],
                   [&](int, int, Real value, bool was_clamped) {
                     sum += value;
                     peak = std::max(peak, value);
                     if (was_clamped) ++local_clamped;
                   });
    coarse(ce, ca) = sum;
    coarse_rank(ce, ca) = peak;
    clamped += local_clamped;
  });
  evaluations += static_cast<std::uint64_t>(nc) * nc * cells_per_pixel;

  // Top-Q coarse cells by the max metric (a narrow peak barely lifts the
  // accumulated sum between samples but still dominates the cell maximum);
  // ties go to the lowest linear index.
  std::vector<std::int64_t> order(static_cast<std::size_t>(nc) * nc);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
  const int q = std::min<std::int64_t>(search.top_q, static_cast<std::int64_t>(order.size()));
  // order index = ca * nc + ce, matching the fill loop above
  std::partial_sort(order.begin(), order.begin() + q, order.end(),
                    [&](std::int64_t a, std::int64_t b) {
                      const Real va = coarse_rank(a % nc, a / nc);
                      const Real vb = coarse_rank(b % nc, b / nc);
                      if (va != vb) return va > vb;
                      return a < b;
                    });

  // Bilinear interpolant of the coarse grid, clamped at the grid edge.
  AoaImage image;
  image.azimuth_axis_deg = grid.azimuth_deg;
  image.elevation_axis_deg = grid.elevation_deg;
  image.values.resize(n_fine, n_fine);
  auto interp = [&](Real e, Real a) {
    if (nc == 1) return coarse(0, 0);
    const Real max_pos = static_cast<Real>((nc - 1) * step);
    const Real ec = std::min(e, max_pos);
    const Real ac = std::min(a, max_pos);
    const int ie = std::min(static_cast<int>(ec / step), nc - 2);
    const int ia = std::min(static_cast<int>(ac / step), nc - 2);
    const Real fe = ec / step - ie;
    const Real fa = ac / step - ia;
    return (1 - fe) * ((1 - fa) * coarse(ie, ia) + fa * coarse(ie, ia + 1)) +
           fe * ((1 - fa) * coarse(ie + 1, ia) + fa * coarse(ie + 1, ia + 1));
  };
  for (int ie = 0; ie < n_fine; ++ie)
    for (int ia = 0; ia < n_fine; ++ia)
      image.values(ie, ia) = interp(static_cast<Real>(ie), static_cast<Real>(ia));

  // Exact evaluation around each selected coarse cell.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> refine(n_fine, n_fine);
  refine.setConstant(false);
  const int radius = std::max(search.refine_radius_deg, 0);
  for (int s = 0; s < q; ++s) {
    const int ca = static_cast<int>(order[s] / nc);
    const int ce = static_cast<int>(order[s] % nc);
    const int fa = ca * step;
    const int fe = ce * step;
    for (int de = -radius; de <= radius; ++de)
      for (int da = -radius; da <= radius; ++da) {
        const int e = fe + de;
        const int a = fa + da;
        if (e >= 0 && e < n_fine && a >= 0 && a < n_fine) refine(e, a) = true;
      }
  }
  std::vector<std::pair<int, int>> targets;
  for (int ie = 0; ie < n_fine; ++ie)
    for (int ia = 0; ia < n_fine; ++ia)
      if (refine(ie, ia)) targets.emplace_back(ie, ia);

  parallel_for(0, static_cast<std::int64_t>(targets.size()), [&](std::int64_t i) {
    const auto [ie, ia] = targets[i];
    Real sum = 0.0;
    int local_clamped = 0;
    ctx.eval_pixel(grid.azimuth_deg[ia], grid.elevation_deg[ie],
                   [&](int, int, Real value, bool was_clamped) {
                     sum += value;
                     if (was_clamped) ++local_clamped;
                   });
    image.values(ie, ia) = sum;
    clamped += local_clamped;
  });
  evaluations += targets.size() * cells_per_pixel;

  image.clamped_cells = clamped.load();
  if (stats) {
    stats->steering_evaluations = evaluations;
    stats->clamped_cells = image.clamped_cells;
  }
  return image;
}

std::vector<std::pair<int, int>> find_peaks(const Image& image, int max_count) {
  const int rows = static_cast<int>(image.rows());
  const int cols = static_cast<int>(image.cols());
  std::vector<std::int64_t> peaks;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Real v = image(r, c);
      bool is_peak = true;
      for (int dr = -1; dr <= 1 && is_peak; ++dr)
        for (int dc = -1; dc <= 1 && is_peak; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
          if (image(rr, cc) >= v) is_peak = false;
        }
      if (is_peak) peaks.push_back(static_cast<std::int64_t>(r) * cols + c);
    }
  std::sort(peaks.begin(), peaks.end(), [&](std::int64_t a, std::int64_t b) {
    const Real va = image(a / cols, a % cols);
    const Real vb = image(b / cols, b % cols);
    if (va != vb) return va > vb;
    return a < b;
  });
  if (static_cast<int>(peaks.size()) > max_count) peaks.resize(max_count);
  std::vector<std::pair<int, int>> out;
  out.reserve(peaks.size());
  for (const auto p : peaks)
    out.emplace_back(static_cast<int>(p / cols), static_cast<int>(p % cols));
  return out;
}

std::pair<int, int> argmax_cell(const Image& image) {
  const int rows = static_cast<int>(image.rows());
  const int cols = static_cast<int>(image.cols());
  Real best = -std::numeric_limits<Real>::infinity();
  std::int64_t best_idx = 0;
  // Row-major scan; strict > keeps the lowest linear index on ties.
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Real v = image(r, c);
      if (v > best) {
        best = v;
        best_idx = static_cast<std::int64_t>(r) * cols + c;
      }
    }
  return {static_cast<int>(best_idx / cols), static_cast<int>(best_idx % cols)};
}

}  // namespace wimesh
