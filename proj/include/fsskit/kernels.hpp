#pragma once

#include <span>
#include <vector>

#include "fsskit/tensor.hpp"

// Dense kernels, OpenMP-parallel over independent output elements so results
// do not depend on the thread count. Accumulations run in double and are
// cast back to float32 at the interface.

namespace fsskit {

// out[c,y,x] = a[c,y,x] * b[c,y,x]; shapes must match exactly.
Tensor elementwise_mul(const Tensor& a, const Tensor& b);

// out[c,y,x] = a[c,y,x] * m[y,x]; mask broadcasts across the channel axis.
Tensor elementwise_mul(const Tensor& a, const BinaryMask& m);

// Concatenate along the channel axis; spatial extents must agree.
Tensor channel_concat(std::span<const Tensor> parts);

// 1x1 convolution as a matrix product: out[o,y,x] = sum_i w[o,i]*x[i,y,x] + bias[o].
// weights is rank-2 (c_out x c_in); bias may be empty (treated as zeros).
Tensor conv1x1(const Tensor& x, const Tensor& weights, std::span<const float> bias);

// Row-wise softmax over a rank-2 map. -inf entries map to exactly 0; rows are
// stabilized by subtracting the row max. A fully masked row throws
// DegenerateRowError.
Tensor row_softmax(const Tensor& a);

// Bilinear resize of a rank-3 tensor (corner alignment off). Same-size input
// returns a bit-identical copy.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

// Min-max normalize a 1 x h x w map over the active pixels of `region`.
// Active: (v - min) / (max - min), or 0.5 when max == min. Inactive pixels
// are forced to 0. An empty region yields an all-zero map.
Tensor masked_minmax_normalize(const Tensor& values, const BinaryMask& region);

}  // namespace fsskit
