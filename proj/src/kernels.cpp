#include "fsskit/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

namespace fsskit {

namespace {

constexpr std::int64_t kParallelCutoff = 4096;  // skip omp for tiny tensors

void require_rank3(const Tensor& t, const char* what) {
    if (t.rank() != 3)
        throw DimensionError(std::string(what) + ": expected a rank-3 tensor, got " +
                             t.shape().str());
}

void require_spatial(const Tensor& t, const BinaryMask& m, const char* what) {
    if (t.dim(t.rank() - 2) != m.height() || t.dim(t.rank() - 1) != m.width())
        throw DimensionError(std::string(what) + ": tensor " + t.shape().str() +
                             " vs mask " + std::to_string(m.height()) + "x" +
                             std::to_string(m.width()));
}

}  // namespace

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("elementwise_mul: shapes differ, " + a.shape().str() +
                             " vs " + b.shape().str());
    Tensor out(a.shape());
    const std::int64_t n = static_cast<std::int64_t>(a.size());
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* po = out.data().data();
#pragma omp parallel for if (n > kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    return out;
}

Tensor elementwise_mul(const Tensor& a, const BinaryMask& m) {
    require_rank3(a, "elementwise_mul");
    require_spatial(a, m, "elementwise_mul");
    Tensor out(a.shape());
    const std::int64_t c = static_cast<std::int64_t>(a.dim(0));
    const std::size_t hw = a.dim(1) * a.dim(2);
    const float* pa = a.data().data();
    float* po = out.data().data();
#pragma omp parallel for if (c * static_cast<std::int64_t>(hw) > kParallelCutoff)
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const float* src = pa + ch * hw;
        float* dst = po + ch * hw;
        for (std::size_t i = 0; i < hw; ++i)
            dst[i] = m.flat(i) ? src[i] : 0.0f;
    }
    return out;
}

Tensor channel_concat(std::span<const Tensor> parts) {
    if (parts.empty())
        throw ConfigError("channel_concat: need at least one part");
    require_rank3(parts[0], "channel_concat");
    const std::size_t h = parts[0].dim(1), w = parts[0].dim(2);
    std::size_t channels = 0;
    for (const Tensor& p : parts) {
        require_rank3(p, "channel_concat");
        if (p.dim(1) != h || p.dim(2) != w)
            throw DimensionError("channel_concat: spatial extents differ, " +
                                 parts[0].shape().str() + " vs " + p.shape().str());
        channels += p.dim(0);
    }
    Tensor out(Shape{channels, h, w});
    float* dst = out.data().data();
    for (const Tensor& p : parts) {
        std::copy(p.data().begin(), p.data().end(), dst);
        dst += p.size();
    }
    return out;
}

Tensor conv1x1(const Tensor& x, const Tensor& weights, std::span<const float> bias) {
    require_rank3(x, "conv1x1");
    if (weights.rank() != 2)
        throw DimensionError("conv1x1: weights must be rank-2, got " +
                             weights.shape().str());
    const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t c_out = weights.dim(0);
    if (weights.dim(1) != c_in)
        throw DimensionError("conv1x1: weight columns " + std::to_string(weights.dim(1)) +
                             " vs input channels " + std::to_string(c_in));
    if (!bias.empty() && bias.size() != c_out)
        throw DimensionError("conv1x1: bias length " + std::to_string(bias.size()) +
                             " vs output channels " + std::to_string(c_out));

    Tensor out(Shape{c_out, h, w});
    const std::size_t hw = h * w;
    const float* px = x.data().data();
    const float* pw = weights.data().data();
    float* po = out.data().data();
    const std::int64_t total = static_cast<std::int64_t>(c_out * hw);
#pragma omp parallel for if (total > kParallelCutoff)
    for (std::int64_t idx = 0; idx < total; ++idx) {
        const std::size_t o = static_cast<std::size_t>(idx) / hw;
        const std::size_t pix = static_cast<std::size_t>(idx) % hw;
        double acc = bias.empty() ? 0.0 : static_cast<double>(bias[o]);
        const float* wrow = pw + o * c_in;
        for (std::size_t i = 0; i < c_in; ++i)
            acc += static_cast<double>(wrow[i]) * static_cast<double>(px[i * hw + pix]);
        po[idx] = static_cast<float>(acc);
    }
    return out;
}

Tensor row_softmax(const Tensor& a) {
    if (a.rank() != 2)
        throw DimensionError("row_softmax: expected a rank-2 map, got " +
                             a.shape().str());
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    Tensor out(a.shape());
    const float* pa = a.data().data();
    float* po = out.data().data();
    const float neg_inf = -std::numeric_limits<float>::infinity();

    // find degenerate rows first so the error fires before any work is visible
    for (std::size_t r = 0; r < rows; ++r) {
        bool finite = false;
        for (std::size_t c = 0; c < cols; ++c)
            if (pa[r * cols + c] != neg_inf) { finite = true; break; }
        if (!finite)
            throw DegenerateRowError("row_softmax: row " + std::to_string(r) +
                                     " is fully masked");
    }

    const std::int64_t n_rows = static_cast<std::int64_t>(rows);
#pragma omp parallel for if (n_rows * static_cast<std::int64_t>(cols) > kParallelCutoff)
    for (std::int64_t r = 0; r < n_rows; ++r) {
        const float* row = pa + r * cols;
        float m = neg_inf;
        for (std::size_t c = 0; c < cols; ++c)
            if (row[c] > m) m = row[c];
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
            if (row[c] != neg_inf) sum += std::exp(static_cast<double>(row[c]) - m);
        float* orow = po + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            if (row[c] == neg_inf) {
                orow[c] = 0.0f;
            } else {
                orow[c] = static_cast<float>(
                    std::exp(static_cast<double>(row[c]) - m) / sum);
            }
        }
    }
    return out;
}

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank3(x, "resize_bilinear");
    if (out_h == 0 || out_w == 0)
        throw DimensionError("resize_bilinear: target extents must be >= 1");
    const std::size_t c = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
    if (in_h == out_h && in_w == out_w) return x;

    Tensor out(Shape{c, out_h, out_w});
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    const float* px = x.data().data();
    float* po = out.data().data();
    const std::int64_t total = static_cast<std::int64_t>(c * out_h * out_w);
#pragma omp parallel for if (total > kParallelCutoff)
    for (std::int64_t idx = 0; idx < total; ++idx) {
        const std::size_t ch = static_cast<std::size_t>(idx) / (out_h * out_w);
        const std::size_t rest = static_cast<std::size_t>(idx) % (out_h * out_w);
        const std::size_t oy = rest / out_w, ox = rest % out_w;

        double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
        if (fy < 0.0) fy = 0.0;
        if (fx < 0.0) fx = 0.0;
        std::size_t y0 = static_cast<std::size_t>(fy);
        std::size_t x0 = static_cast<std::size_t>(fx);
        if (y0 > in_h - 1) y0 = in_h - 1;
        if (x0 > in_w - 1) x0 = in_w - 1;
        const std::size_t y1 = (y0 + 1 < in_h) ? y0 + 1 : y0;
        const std::size_t x1 = (x0 + 1 < in_w) ? x0 + 1 : x0;
        const double wy = fy - static_cast<double>(y0);
        const double wx = fx - static_cast<double>(x0);

        const float* plane = px + ch * in_h * in_w;
        const double v00 = plane[y0 * in_w + x0];
        const double v01 = plane[y0 * in_w + x1];
        const double v10 = plane[y1 * in_w + x0];
        const double v11 = plane[y1 * in_w + x1];
        const double top = v00 + (v01 - v00) * wx;
        const double bot = v10 + (v11 - v10) * wx;
        po[idx] = static_cast<float>(top + (bot - top) * wy);
    }
    return out;
}

Tensor masked_minmax_normalize(const Tensor& values, const BinaryMask& region) {
    require_rank3(values, "masked_minmax_normalize");
    if (values.dim(0) != 1)
        throw DimensionError("masked_minmax_normalize: expected a 1xHxW map, got " +
                             values.shape().str());
    require_spatial(values, region, "masked_minmax_normalize");

    Tensor out(values.shape());
    const std::size_t hw = region.size();
    const float* pv = values.data().data();
    float* po = out.data().data();

    float lo = 0.0f, hi = 0.0f;
    bool any = false;
    for (std::size_t i = 0; i < hw; ++i) {
        if (!region.flat(i)) continue;
        if (!any) {
            lo = hi = pv[i];
            any = true;
        } else {
            lo = std::min(lo, pv[i]);
            hi = std::max(hi, pv[i]);
        }
    }
    if (!any) return out;  // empty region -> all zeros

    const std::int64_t n = static_cast<std::int64_t>(hw);
    if (hi > lo) {
        const double span = static_cast<double>(hi) - static_cast<double>(lo);
#pragma omp parallel for if (n > kParallelCutoff)
        for (std::int64_t i = 0; i < n; ++i)
            po[i] = region.flat(i)
                        ? static_cast<float>((static_cast<double>(pv[i]) - lo) / span)
                        : 0.0f;
    } else {
        // constant region: neutral prior probability
#pragma omp parallel for if (n > kParallelCutoff)
        for (std::int64_t i = 0; i < n; ++i)
            po[i] = region.flat(i) ? 0.5f : 0.0f;
    }
    return out;
}

}  // namespace fsskit
