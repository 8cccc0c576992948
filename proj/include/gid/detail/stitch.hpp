#pragma once

#include <algorithm>

namespace gid::nn {

inline std::vector<std::size_t> window_starts(std::size_t frames, std::size_t window, std::size_t stride) {
  std::vector<std::size_t> starts;
  if (frames <= window) return {0};
  for (std::size_t s = 0; s + window <= frames; s += stride) starts.push_back(s);
  if (starts.back() + window < frames) starts.push_back(frames - window);
  return starts;
}

template <typename T, typename Fn>
Tensor<T> stitch_windows(const Tensor<T>& seq, std::size_t window, std::size_t out_channels, Fn&& run_batch) {
  constexpr std::size_t kBatch = 16;
  const std::size_t F = seq.dim(0);
  const std::size_t per_frame = F == 0 ? 0 : seq.size() / F;
  Shape out_shape{F, out_channels};
  if (F == 0) return Tensor<T>(out_shape);
  const auto starts = window_starts(F, window, std::max<std::size_t>(1, window / 2));
  std::vector<double> acc(F * out_channels, 0.0);
  std::vector<double> wsum(F, 0.0);
  for (std::size_t b0 = 0; b0 < starts.size(); b0 += kBatch) {
    const std::size_t nb = std::min(kBatch, starts.size() - b0);
    Shape in_shape = seq.shape();
    in_shape[0] = window;
    in_shape.insert(in_shape.begin(), nb);
    Tensor<T> batch(in_shape);
    for (std::size_t i = 0; i < nb; ++i) {
      for (std::size_t t = 0; t < window; ++t) {
        const std::size_t f = std::min(starts[b0 + i] + t, F - 1);
        std::copy_n(seq.data() + f * per_frame, per_frame, batch.data() + (i * window + t) * per_frame);
      }
    }
    const Tensor<T> y = run_batch(batch);
    if (y.size() != nb * window * out_channels) {
      throw ShapeError("stitch_windows: model returned " + to_string(y.shape()));
    }
    for (std::size_t i = 0; i < nb; ++i) {
      for (std::size_t t = 0; t < window; ++t) {
        const std::size_t f = starts[b0 + i] + t;
        if (f >= F) break;
        const double w = static_cast<double>(std::min(t + 1, window - t));
        wsum[f] += w;
        const T* src = y.data() + (i * window + t) * out_channels;
        for (std::size_t c = 0; c < out_channels; ++c) acc[f * out_channels + c] += w * static_cast<double>(src[c]);
      }
    }
  }
  Tensor<T> out(out_shape);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t c = 0; c < out_channels; ++c)
      out[f * out_channels + c] = static_cast<T>(acc[f * out_channels + c] / wsum[f]);
  return out;
}

}  // namespace gid::nn
