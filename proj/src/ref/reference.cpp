#include "fsskit/ref/reference.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fsskit::ref {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clampd(double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace

std::vector<double> elementwise_mul(const Tensor& a, const Tensor& b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = static_cast<double>(a.data()[i]) * static_cast<double>(b.data()[i]);
    return out;
}

std::vector<double> elementwise_mul_mask(const Tensor& a, const BinaryMask& m) {
    const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
    std::vector<double> out(a.size(), 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out[(ch * h + y) * w + x] =
                    static_cast<double>(a(ch, y, x)) * (m.at(y, x) ? 1.0 : 0.0);
    return out;
}

std::vector<double> conv1x1(const Tensor& x, const Tensor& weights,
                            std::span<const float> bias) {
    const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t c_out = weights.dim(0);
    std::vector<double> out(c_out * h * w, 0.0);
    for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
                double acc = bias.empty() ? 0.0 : static_cast<double>(bias[o]);
                for (std::size_t i = 0; i < c_in; ++i)
                    acc += static_cast<double>(weights(o, i)) *
                           static_cast<double>(x(i, y, xx));
                out[(o * h + y) * w + xx] = acc;
            }
    return out;
}

std::vector<double> row_softmax(const Tensor& a) {
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    std::vector<double> out(rows * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double m = -kInf;
        for (std::size_t c = 0; c < cols; ++c)
            m = std::max(m, static_cast<double>(a(r, c)));
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = static_cast<double>(a(r, c));
            if (v != -kInf) sum += std::exp(v - m);
        }
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = static_cast<double>(a(r, c));
            out[r * cols + c] = (v == -kInf) ? 0.0 : std::exp(v - m) / sum;
        }
    }
    return out;
}

std::vector<double> resize_bilinear(const Tensor& x, std::size_t out_h,
                                    std::size_t out_w) {
    const std::size_t c = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
    std::vector<double> out(c * out_h * out_w, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                if (in_h == out_h && in_w == out_w) {
                    out[(ch * out_h + oy) * out_w + ox] =
                        static_cast<double>(x(ch, oy, ox));
                    continue;
                }
                double fy = (static_cast<double>(oy) + 0.5) *
                                (static_cast<double>(in_h) / out_h) -
                            0.5;
                double fx = (static_cast<double>(ox) + 0.5) *
                                (static_cast<double>(in_w) / out_w) -
                            0.5;
                fy = clampd(fy, 0.0, static_cast<double>(in_h - 1));
                fx = clampd(fx, 0.0, static_cast<double>(in_w - 1));
                const std::size_t y0 = static_cast<std::size_t>(fy);
                const std::size_t x0 = static_cast<std::size_t>(fx);
                const std::size_t y1 = std::min(y0 + 1, in_h - 1);
                const std::size_t x1 = std::min(x0 + 1, in_w - 1);
                const double wy = fy - static_cast<double>(y0);
                const double wx = fx - static_cast<double>(x0);
                const double v00 = x(ch, y0, x0), v01 = x(ch, y0, x1);
                const double v10 = x(ch, y1, x0), v11 = x(ch, y1, x1);
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                out[(ch * out_h + oy) * out_w + ox] = top + (bot - top) * wy;
            }
    return out;
}

std::vector<double> masked_minmax_normalize(const Tensor& values,
                                            const BinaryMask& region) {
    const std::size_t hw = region.size();
    std::vector<double> out(hw, 0.0);
    bool any = false;
    float lo = 0.0f, hi = 0.0f;
    for (std::size_t i = 0; i < hw; ++i) {
        if (!region.flat(i)) continue;
        const float v = values.data()[i];
        if (!any) {
            lo = hi = v;
            any = true;
        } else {
            if (v < lo) lo = v;
            if (v > hi) hi = v;
        }
    }
    if (!any) return out;
    for (std::size_t i = 0; i < hw; ++i) {
        if (!region.flat(i)) continue;
        if (hi > lo)
            out[i] = (static_cast<double>(values.data()[i]) - static_cast<double>(lo)) /
                     (static_cast<double>(hi) - static_cast<double>(lo));
        else
            out[i] = 0.5;
    }
    return out;
}

std::optional<std::vector<double>> masked_average_pool(const Tensor& features,
                                                       const BinaryMask& region) {
    const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
    std::size_t active = 0;
    for (std::size_t i = 0; i < region.size(); ++i) active += region.flat(i);
    if (active == 0) return std::nullopt;
    std::vector<double> out(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                if (region.at(y, x)) acc += static_cast<double>(features(ch, y, x));
        out[ch] = acc / static_cast<double>(active);
    }
    return out;
}

namespace {

double cosine_at(const Tensor& feat, std::size_t y, std::size_t x,
                 std::span<const double> proto) {
    const std::size_t c = feat.dim(0);
    double dot = 0.0, xn = 0.0, pn = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = static_cast<double>(feat(ch, y, x));
        dot += v * proto[ch];
        xn += v * v;
        pn += proto[ch] * proto[ch];
    }
    if (xn == 0.0 || pn == 0.0) return 0.0;
    return dot / (std::sqrt(xn) * std::sqrt(pn));
}

void minmax_over(const std::vector<double>& vals, const std::vector<bool>& region,
                 std::vector<double>& out) {
    bool any = false;
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!region[i]) continue;
        if (!any) {
            lo = hi = vals[i];
            any = true;
        } else {
            lo = std::min(lo, vals[i]);
            hi = std::max(hi, vals[i]);
        }
    }
    if (!any) return;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!region[i]) continue;
        out[i] = (hi > lo) ? (vals[i] - lo) / (hi - lo) : 0.5;
    }
}

}  // namespace

std::vector<double> pmgm_prior(const Tensor& support_features,
                               const BinaryMask& support_mask,
                               const Tensor& support_cam,
                               const Tensor& query_features, const Tensor& query_cam,
                               double delta) {
    const std::size_t h = support_mask.height(), w = support_mask.width();
    const std::size_t hw = h * w;
    const std::size_t c = support_features.dim(0);

    std::vector<bool> s_pos(hw), q_pos(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        s_pos[i] = static_cast<double>(support_cam.data()[i]) >= delta;
        q_pos[i] = static_cast<double>(query_cam.data()[i]) >= delta;
    }

    // prototypes by direct accumulation
    std::vector<double> p1(c, 0.0), p2(c, 0.0), p(c, 0.0);
    std::size_t n1 = 0, n2 = 0, np = 0;
    for (std::size_t i = 0; i < hw; ++i) {
        if (!support_mask.flat(i)) continue;
        const std::size_t y = i / w, x = i % w;
        ++np;
        for (std::size_t ch = 0; ch < c; ++ch)
            p[ch] += static_cast<double>(support_features(ch, y, x));
        if (s_pos[i]) {
            ++n1;
            for (std::size_t ch = 0; ch < c; ++ch)
                p1[ch] += static_cast<double>(support_features(ch, y, x));
        } else {
            ++n2;
            for (std::size_t ch = 0; ch < c; ++ch)
                p2[ch] += static_cast<double>(support_features(ch, y, x));
        }
    }
    for (std::size_t ch = 0; ch < c; ++ch) p[ch] /= static_cast<double>(np);
    if (n1)
        for (std::size_t ch = 0; ch < c; ++ch) p1[ch] /= static_cast<double>(n1);
    else
        p1 = p;  // fallback: the whole-mask prototype
    if (n2)
        for (std::size_t ch = 0; ch < c; ++ch) p2[ch] /= static_cast<double>(n2);
    else
        p2 = p;

    std::vector<double> raw(hw, 0.0);
    for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t y = i / w, x = i % w;
        raw[i] = cosine_at(query_features, y, x, q_pos[i] ? p1 : p2);
    }

    std::vector<bool> q_neg(hw);
    for (std::size_t i = 0; i < hw; ++i) q_neg[i] = !q_pos[i];
    std::vector<double> out(hw, 0.0);
    minmax_over(raw, q_pos, out);
    minmax_over(raw, q_neg, out);
    return out;
}

std::vector<double> baseline_prior(const Tensor& query_features,
                                   std::span<const float> prototype) {
    const std::size_t h = query_features.dim(1), w = query_features.dim(2);
    const std::size_t hw = h * w;
    std::vector<double> proto(prototype.begin(), prototype.end());
    std::vector<double> raw(hw, 0.0);
    for (std::size_t i = 0; i < hw; ++i)
        raw[i] = cosine_at(query_features, i / w, i % w, proto);
    std::vector<bool> all(hw, true);
    std::vector<double> out(hw, 0.0);
    minmax_over(raw, all, out);
    return out;
}

std::vector<double> attention_scores(const Tensor& query_feat,
                                     const Tensor& support_feat, const Tensor& wq,
                                     const Tensor& wk) {
    const std::size_t d_k = wq.dim(0);
    const std::size_t cq = wq.dim(1), cs = wk.dim(1);
    const std::size_t n_q = query_feat.dim(1) * query_feat.dim(2);
    const std::size_t n_s = support_feat.dim(1) * support_feat.dim(2);

    std::vector<double> q(d_k * n_q, 0.0), k(d_k * n_s, 0.0);
    for (std::size_t d = 0; d < d_k; ++d)
        for (std::size_t i = 0; i < n_q; ++i) {
            double acc = 0.0;
            for (std::size_t ch = 0; ch < cq; ++ch)
                acc += static_cast<double>(wq(d, ch)) *
                       static_cast<double>(query_feat.data()[ch * n_q + i]);
            q[d * n_q + i] = acc;
        }
    for (std::size_t d = 0; d < d_k; ++d)
        for (std::size_t i = 0; i < n_s; ++i) {
            double acc = 0.0;
            for (std::size_t ch = 0; ch < cs; ++ch)
                acc += static_cast<double>(wk(d, ch)) *
                       static_cast<double>(support_feat.data()[ch * n_s + i]);
            k[d * n_s + i] = acc;
        }

    std::vector<double> scores(n_q * n_s, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    for (std::size_t r = 0; r < n_q; ++r)
        for (std::size_t s = 0; s < n_s; ++s) {
            double acc = 0.0;
            for (std::size_t d = 0; d < d_k; ++d)
                acc += q[d * n_q + r] * k[d * n_s + s];
            scores[r * n_s + s] = acc * scale;
        }
    return scores;
}

std::vector<std::string> verify_dicm(const Tensor& unmasked, const Tensor& masked,
                                     const BinaryMask& support_mask,
                                     const BinaryMask& query_mask) {
    std::vector<std::string> violations;
    const std::size_t n_q = unmasked.dim(0), n_s = unmasked.dim(1);
    const float neg_inf = -std::numeric_limits<float>::infinity();

    for (std::size_t col = 0; col < n_s; ++col) {
        // naive recomputation of the column argmax with lowest-index ties
        std::size_t best = 0;
        for (std::size_t r = 1; r < n_q; ++r)
            if (unmasked(r, col) > unmasked(best, col)) best = r;
        const bool conflict = support_mask.flat(col) != query_mask.flat(best);

        std::size_t masked_in_col = 0;
        for (std::size_t r = 0; r < n_q; ++r) {
            const bool is_masked = masked(r, col) == neg_inf;
            if (is_masked) {
                ++masked_in_col;
                if (r != best)
                    violations.push_back("column " + std::to_string(col) +
                                         ": masked cell is not the column argmax");
                if (support_mask.flat(col) == query_mask.flat(r))
                    violations.push_back("column " + std::to_string(col) +
                                         ": masked cell has consistent masks");
            } else if (masked(r, col) != unmasked(r, col)) {
                violations.push_back("column " + std::to_string(col) +
                                     ": unmasked cell was altered");
            }
        }
        if (masked_in_col > 1)
            violations.push_back("column " + std::to_string(col) +
                                 ": more than one masked cell");
        if (conflict != (masked_in_col == 1))
            violations.push_back("column " + std::to_string(col) +
                                 ": conflict/masking mismatch");
    }
    return violations;
}

std::vector<std::string> verify_cyctr(const Tensor& unmasked, const Tensor& masked,
                                      const BinaryMask& support_mask, bool skipped) {
    std::vector<std::string> violations;
    const std::size_t n_q = unmasked.dim(0), n_s = unmasked.dim(1);
    const float neg_inf = -std::numeric_limits<float>::infinity();

    std::size_t masked_columns = 0;
    for (std::size_t col = 0; col < n_s; ++col) {
        std::size_t max_q = 0;
        for (std::size_t r = 1; r < n_q; ++r)
            if (unmasked(r, col) > unmasked(max_q, col)) max_q = r;
        std::size_t max_s = 0;
        for (std::size_t cc = 1; cc < n_s; ++cc)
            if (unmasked(max_q, cc) > unmasked(max_q, max_s)) max_s = cc;
        const bool conflict = support_mask.flat(col) != support_mask.flat(max_s);

        std::size_t masked_cells = 0;
        for (std::size_t r = 0; r < n_q; ++r) {
            if (masked(r, col) == neg_inf)
                ++masked_cells;
            else if (masked(r, col) != unmasked(r, col))
                violations.push_back("column " + std::to_string(col) +
                                     ": surviving cell was altered");
        }
        if (masked_cells != 0 && masked_cells != n_q)
            violations.push_back("column " + std::to_string(col) +
                                 ": partially masked column");
        const bool is_masked = masked_cells == n_q && n_q > 0;
        if (is_masked) ++masked_columns;
        if (skipped) {
            if (is_masked)
                violations.push_back("column " + std::to_string(col) +
                                     ": masked although masking was skipped");
        } else if (conflict != is_masked) {
            violations.push_back("column " + std::to_string(col) +
                                 ": cycle conflict/masking mismatch");
        }
    }
    if (!skipped && masked_columns == n_s && n_s > 0)
        violations.push_back("all columns masked without the skip flag");
    return violations;
}

double fb_iou_recount(std::span<const std::pair<BinaryMask, BinaryMask>> episodes) {
    std::uint64_t inter = 0, uni = 0;
    for (const auto& [pred, target] : episodes) {
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const bool p = pred.flat(i), t = target.flat(i);
            inter += (p && t) ? 1 : 0;
            uni += (p || t) ? 1 : 0;
            inter += (!p && !t) ? 1 : 0;
            uni += (!p || !t) ? 1 : 0;
        }
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace fsskit::ref
