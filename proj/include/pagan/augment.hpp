#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pagan/rng.hpp"
#include "pagan/tensor.hpp"

namespace pagan {

// Stochastic augmenter: reflect-pad each image by a fraction of its shorter
// side, then crop back to the original size at a uniformly random offset.
// This is the conditional y ~ r(y|x) the pair discriminator's real class is
// built from.

struct AugmentConfig {
  double pad_fraction = 0.1;
  std::uint64_t rng_seed = 0;
};

inline int augment_pad(const AugmentConfig& cfg, int H, int W) {
  if (cfg.pad_fraction < 0.0 || cfg.pad_fraction >= 0.5)
    throw std::invalid_argument("augment_pad: pad_fraction must lie in [0, 0.5)");
  if (cfg.pad_fraction == 0.0) return 0;
  const int m = std::min(H, W);
  // Round to nearest but never below 1: a positive fraction must keep the
  // offset distribution non-degenerate.
  return std::max(1, static_cast<int>(std::lround(cfg.pad_fraction * m)));
}

// The crop-offset distribution behind the augmenter: uniform over a
// (2·pad+1)² grid.
struct OffsetDistribution {
  int side = 1;
  double probability = 1.0;
};

inline OffsetDistribution offset_distribution(const AugmentConfig& cfg,
                                              const Shape& image_shape) {
  if (image_shape.size() != 3 && image_shape.size() != 4)
    throw std::invalid_argument(
        "offset_distribution: expected (C,H,W) or (N,C,H,W), got " +
        shape_str(image_shape));
  const int H = image_shape[image_shape.size() - 2];
  const int W = image_shape[image_shape.size() - 1];
  const int pad = augment_pad(cfg, H, W);
  OffsetDistribution d;
  d.side = 2 * pad + 1;
  d.probability = 1.0 / (static_cast<double>(d.side) * d.side);
  return d;
}

// Deterministic core: crop the reflect-padded image at the given per-image
// offsets. Equivalent to slice(reflect_pad(x, pad), ...) per image; computed
// by direct index mirroring. Output is plain data (the augmenter is never
// differentiated through).
template <typename T>
Tensor<T> augment_at(const Tensor<T>& x, int pad,
                     const std::vector<std::pair<int, int>>& offsets) {
  if (x.shape.size() != 4)
    throw std::invalid_argument("augment_at: expected batch (N,C,H,W), got " +
                                shape_str(x.shape));
  const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  if (pad < 0) throw std::invalid_argument("augment_at: pad must be >= 0");
  if (pad == 0) return x.detached();
  if (H < 2 || W < 2 || pad >= std::min(H, W))
    throw std::invalid_argument(
        "augment_at: pad " + std::to_string(pad) +
        " needs images at least 2x2 and larger than the pad, got " +
        shape_str(x.shape));
  if (static_cast<int>(offsets.size()) != N)
    throw std::invalid_argument("augment_at: need one offset pair per image");
  for (const auto& [oh, ow] : offsets) {
    if (oh < 0 || oh > 2 * pad || ow < 0 || ow > 2 * pad)
      throw std::invalid_argument("augment_at: offsets must lie in {0..2*pad}");
  }
  const auto& in = *x.values;
  std::vector<T> out(in.size());
  for (int n = 0; n < N; ++n) {
    const auto [oh, ow] = offsets[static_cast<std::size_t>(n)];
    for (int c = 0; c < C; ++c) {
      const T* src = in.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      T* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
      for (int i = 0; i < H; ++i) {
        const int si = detail::mirror_index(i + oh - pad, H);
        for (int j = 0; j < W; ++j)
          dst[i * W + j] = src[si * W + detail::mirror_index(j + ow - pad, W)];
      }
    }
  }
  return Tensor<T>(x.shape, std::move(out));
}

// Samples one crop offset pair per image (row offset drawn before column
// offset, images in batch order) and applies the crop.
template <typename T>
Tensor<T> augment(const Tensor<T>& x, const AugmentConfig& cfg, Rng& rng,
                  std::vector<std::pair<int, int>>* offsets_out = nullptr) {
  if (x.shape.size() != 4)
    throw std::invalid_argument("augment: expected batch (N,C,H,W), got " +
                                shape_str(x.shape));
  const int N = x.shape[0], H = x.shape[2], W = x.shape[3];
  const int pad = augment_pad(cfg, H, W);
  std::vector<std::pair<int, int>> offsets(static_cast<std::size_t>(N));
  const int side = 2 * pad + 1;
  for (auto& [oh, ow] : offsets) {
    oh = pad > 0 ? rng.uniform_int(side) : 0;
    ow = pad > 0 ? rng.uniform_int(side) : 0;
  }
  if (offsets_out) *offsets_out = offsets;
  return augment_at(x, pad, offsets);
}

}  // namespace pagan
