// SPDX-License-Identifier: Apache-2.0
#include "wimesh/image_pipeline.hpp"

#include <cmath>
#include <stdexcept>

namespace wimesh {

void InputTensor::set_slice(int frame, int receiver, const Image& image) {
  if (image.rows() != kImageSize || image.cols() != kImageSize)
    throw std::invalid_argument("InputTensor: slice must be 180 x 180");
  for (int el = 0; el < kImageSize; ++el)
    for (int az = 0; az < kImageSize; ++az) at(frame, receiver, el, az) = image(el, az);
}

void InputTensor::validate() const {
  const std::size_t expect = static_cast<std::size_t>(kTensorFrames) * kTensorReceivers *
                             kImageSize * kImageSize;
  if (data.size() != expect) throw std::invalid_argument("InputTensor: wrong size");
  for (const Real v : data)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("InputTensor: negative or non-finite value");
  for (int t = 1; t < kTensorFrames; ++t)
    if (frame_timestamps_ns[t] <= frame_timestamps_ns[t - 1])
      throw std::invalid_argument("InputTensor: timestamps must be strictly increasing");
}

StaticProfile estimate_static(const std::vector<AoaImage>& window) {
  if (window.size() < 2)
    throw std::invalid_argument("estimate_static: window must hold >= 2 frames");
  StaticProfile profile;
  profile.window_len = static_cast<int>(window.size());
  profile.values = window[0].values;
  for (std::size_t i = 1; i < window.size(); ++i) {
    if (window[i].values.rows() != profile.values.rows() ||
        window[i].values.cols() != profile.values.cols())
      throw std::invalid_argument("estimate_static: frame shape mismatch");
    profile.values = profile.values.min(window[i].values);
  }
  return profile;
}

Image subtract_static(const Image& frame, const StaticProfile& profile) {
  if (frame.rows() != profile.values.rows() || frame.cols() != profile.values.cols())
    throw std::invalid_argument("subtract_static: shape mismatch");
  return (frame - profile.values).max(0.0);
}

BodyImage adaptive_threshold(const Image& residual, Real kappa) {
  BodyImage out;
  // Statistics over nonzero pixels only; the empty background would dilute
  // the threshold otherwise.
  Real sum = 0.0, sum2 = 0.0;
  std::int64_t n = 0;
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    const Real v = residual(i);
    if (v > 0.0) {
      sum += v;
      sum2 += v * v;
      ++n;
    }
  }
  if (n == 0) {
    out.values = Image::Zero(residual.rows(), residual.cols());
    out.threshold_used = 0.0;
    return out;
  }
  const Real mean = sum / n;
  const Real var = std::max(0.0, sum2 / n - mean * mean);
  out.threshold_used = mean + kappa * std::sqrt(var);
  out.values = (residual >= out.threshold_used).select(residual, 0.0);
  return out;
}

AggregateResult aggregate_frames(
    const std::array<std::vector<BodyImage>, kTensorReceivers>& body_images,
    const std::array<std::vector<std::int64_t>, kTensorReceivers>& timestamps_ns) {
  for (int r = 0; r < kTensorReceivers; ++r) {
    if (static_cast<int>(body_images[r].size()) != kTensorFrames)
      throw std::invalid_argument("aggregate_frames: need exactly 15 frames per receiver");
    if (static_cast<int>(timestamps_ns[r].size()) != kTensorFrames)
      throw std::invalid_argument("aggregate_frames: timestamp count mismatch");
  }
  AggregateResult out;
  for (int r = 0; r < kTensorReceivers; ++r) {
    out.composite[r] = Image::Zero(kImageSize, kImageSize);
    for (int t = 0; t < kTensorFrames; ++t) {
      const Image& img = body_images[r][t].values;
      if (img.rows() != kImageSize || img.cols() != kImageSize)
        throw std::invalid_argument("aggregate_frames: frame must be 180 x 180");
      out.tensor.set_slice(t, r, img);
      out.composite[r] = out.composite[r].max(img);
    }
  }
  for (int t = 0; t < kTensorFrames; ++t) out.tensor.frame_timestamps_ns[t] = timestamps_ns[0][t];
  return out;
}

}  // namespace wimesh
