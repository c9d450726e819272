// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "wimesh/music_estimator.hpp"
#include "wimesh/types.hpp"

namespace wimesh {

/// Time-invariant image component over a frame window (per-pixel minimum).
struct StaticProfile {
  Image values;
  int window_len = 0;
};

/// Body-only image after clutter subtraction and thresholding; zeros outside
/// the detected body.
struct BodyImage {
  Image values;
  Real threshold_used = 0.0;
};

inline constexpr int kTensorFrames = 15;
inline constexpr int kTensorReceivers = 2;
inline constexpr int kImageSize = 180;

/// Network-input tensor: frames x receivers x elevation x azimuth, row-major.
struct InputTensor {
  std::vector<Real> data;  // kTensorFrames * kTensorReceivers * 180 * 180
  std::array<std::int64_t, kTensorFrames> frame_timestamps_ns{};

  InputTensor() : data(static_cast<std::size_t>(kTensorFrames) * kTensorReceivers *
                       kImageSize * kImageSize, 0.0) {}

  Real& at(int frame, int receiver, int el, int az) {
    return data[((static_cast<std::size_t>(frame) * kTensorReceivers + receiver) * kImageSize +
                 el) * kImageSize + az];
  }
  Real at(int frame, int receiver, int el, int az) const {
    return data[((static_cast<std::size_t>(frame) * kTensorReceivers + receiver) * kImageSize +
                 el) * kImageSize + az];
  }
  /// One (frame, receiver) slice as an image; tensor data is row-major in
  /// (elevation, azimuth), Image is column-major, so this copies.
  Image slice(int frame, int receiver) const {
    Eigen::Map<const Eigen::Array<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        &data[((static_cast<std::size_t>(frame) * kTensorReceivers + receiver) * kImageSize) *
              kImageSize],
        kImageSize, kImageSize);
    return m;
  }
  void set_slice(int frame, int receiver, const Image& image);

  void validate() const;  // shape + increasing timestamps + nonnegative
};

/// Per-pixel temporal minimum over >= 2 frames; a moving body only adds
/// energy to a pixel, so the minimum tracks the static background.
StaticProfile estimate_static(const std::vector<AoaImage>& window);

/// max(0, frame - profile), elementwise.
Image subtract_static(const Image& frame, const StaticProfile& profile);

/// Zero pixels below mean + kappa * std of the nonzero residual pixels;
/// surviving pixels are preserved verbatim.
BodyImage adaptive_threshold(const Image& residual, Real kappa = 2.0);

/// Stack per-receiver frame sequences (exactly kTensorFrames each, both
/// receivers) into the input tensor; composite = per-receiver max over time.
struct AggregateResult {
  InputTensor tensor;
  std::array<Image, kTensorReceivers> composite;
};

AggregateResult aggregate_frames(
    const std::array<std::vector<BodyImage>, kTensorReceivers>& body_images,
    const std::array<std::vector<std::int64_t>, kTensorReceivers>& timestamps_ns);

}  // namespace wimesh
