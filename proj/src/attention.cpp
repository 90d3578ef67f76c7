#include "fsskit/attention.hpp"

#include <cmath>
#include <limits>

#include "fsskit/kernels.hpp"
#include "fsskit/rng.hpp"

namespace fsskit {

namespace {

constexpr float kNegInf = -std::numeric_limits<float>::infinity();

void require_features(const Tensor& t, const char* what) {
    if (t.rank() != 3)
        throw DimensionError(std::string(what) + ": expected c x h x w features, got " +
                             t.shape().str());
}

// flattened feature grid projected through w (+ optional bias), stored
// pixel-major: out[pix * d + row], so downstream dots run over contiguous runs
std::vector<double> project(const Tensor& w,
                            const std::optional<std::vector<float>>& bias,
                            const Tensor& feat, const char* what) {
    const std::size_t d = w.dim(0), c_in = w.dim(1);
    if (feat.dim(0) != c_in)
        throw DimensionError(std::string(what) + ": projection expects " +
                             std::to_string(c_in) + " channels, features have " +
                             std::to_string(feat.dim(0)));
    if (bias && bias->size() != d)
        throw DimensionError(std::string(what) + ": bias length vs d_k");
    const std::size_t n = feat.dim(1) * feat.dim(2);
    const float* pf = feat.data().data();
    const float* pw = w.data().data();
    std::vector<double> out(d * n);
    const std::int64_t pixels = static_cast<std::int64_t>(n);
#pragma omp parallel for if (pixels * static_cast<std::int64_t>(d * c_in) > 4096)
    for (std::int64_t pix = 0; pix < pixels; ++pix) {
        double* orow = out.data() + static_cast<std::size_t>(pix) * d;
        for (std::size_t row = 0; row < d; ++row) {
            double acc = bias ? static_cast<double>((*bias)[row]) : 0.0;
            const float* wrow = pw + row * c_in;
            for (std::size_t i = 0; i < c_in; ++i)
                acc += static_cast<double>(wrow[i]) *
                       static_cast<double>(pf[i * n + static_cast<std::size_t>(pix)]);
            orow[row] = acc;
        }
    }
    return out;
}

std::size_t argmax_column(const Tensor& scores, std::size_t col) {
    const std::size_t rows = scores.dim(0);
    std::size_t best = 0;
    float best_v = scores(std::size_t{0}, col);
    for (std::size_t r = 1; r < rows; ++r) {
        const float v = scores(r, col);
        if (v > best_v) {  // ties keep the lowest row index
            best_v = v;
            best = r;
        }
    }
    return best;
}

std::size_t argmax_row(const Tensor& scores, std::size_t row) {
    const std::size_t cols = scores.dim(1);
    std::size_t best = 0;
    float best_v = scores(row, std::size_t{0});
    for (std::size_t c = 1; c < cols; ++c) {
        const float v = scores(row, c);
        if (v > best_v) {
            best_v = v;
            best = c;
        }
    }
    return best;
}

void require_flat_len(const BinaryMask& m, std::size_t len, const char* what) {
    if (m.size() != len)
        throw DimensionError(std::string(what) + ": mask has " +
                             std::to_string(m.size()) + " pixels, attention map needs " +
                             std::to_string(len));
}

}  // namespace

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::None: return "none";
        case Strategy::Dicm: return "dicm";
        case Strategy::Cyctr: return "cyctr";
    }
    return "none";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "none") return Strategy::None;
    if (name == "dicm") return Strategy::Dicm;
    if (name == "cyctr") return Strategy::Cyctr;
    throw ConfigError("unknown strategy '" + name + "' (expected none|dicm|cyctr)");
}

nlohmann::json to_json(const MaskingReport& r) {
    return nlohmann::json{{"block", r.block_index},
                          {"strategy", strategy_name(r.strategy)},
                          {"total_cells", r.total_cells},
                          {"masked_cells", r.masked_cells},
                          {"masked_columns", r.masked_columns},
                          {"ratio", r.ratio},
                          {"skipped", r.skipped}};
}

ProjectionWeights make_projection_weights(std::uint64_t seed, int block_index,
                                          std::size_t c_query, std::size_t c_support,
                                          std::size_t d_k) {
    Rng rng(derive_seed(seed, 0x417eaful + static_cast<std::uint64_t>(block_index)));
    auto fill = [&rng](std::size_t rows, std::size_t cols) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        Tensor t(Shape{rows, cols});
        for (float& v : t.data())
            v = static_cast<float>(rng.uniform(-bound, bound));
        return t;
    };
    ProjectionWeights w;
    w.wq = fill(d_k, c_query);
    w.wk = fill(d_k, c_support);
    w.wv = fill(d_k, c_support);
    w.block_index = block_index;
    return w;
}

AttentionMap cross_attention_scores(const Tensor& query_feat,
                                    const Tensor& support_feat,
                                    const ProjectionWeights& weights) {
    require_features(query_feat, "cross_attention_scores");
    require_features(support_feat, "cross_attention_scores");
    if (weights.wq.rank() != 2 || weights.wk.rank() != 2 || weights.wv.rank() != 2)
        throw DimensionError("cross_attention_scores: projections must be rank-2");
    const std::size_t d_k = weights.wq.dim(0);
    if (weights.wk.dim(0) != d_k || weights.wv.dim(0) != d_k)
        throw DimensionError("cross_attention_scores: projections must share d_k");

    const std::vector<double> q =
        project(weights.wq, weights.bq, query_feat, "cross_attention_scores(query)");
    const std::vector<double> k =
        project(weights.wk, weights.bk, support_feat, "cross_attention_scores(support)");

    const std::size_t n_q = query_feat.dim(1) * query_feat.dim(2);
    const std::size_t n_s = support_feat.dim(1) * support_feat.dim(2);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));

    Tensor scores(Shape{n_q, n_s});
    float* ps = scores.data().data();
    const std::int64_t rows = static_cast<std::int64_t>(n_q);
#pragma omp parallel for if (rows * static_cast<std::int64_t>(n_s) > 4096)
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* qrow = q.data() + static_cast<std::size_t>(r) * d_k;
        for (std::size_t s = 0; s < n_s; ++s) {
            const double* krow = k.data() + s * d_k;
            double acc = 0.0;
            for (std::size_t d = 0; d < d_k; ++d)
                acc += qrow[d] * krow[d];
            ps[static_cast<std::size_t>(r) * n_s + s] =
                static_cast<float>(acc * inv_sqrt_dk);
        }
    }
    return AttentionMap{std::move(scores), true};
}

std::pair<AttentionMap, MaskingReport> dicm_mask(const AttentionMap& attn,
                                                 const BinaryMask& support_mask,
                                                 const BinaryMask& query_mask) {
    const Tensor& scores = attn.scores;
    if (scores.rank() != 2)
        throw DimensionError("dicm_mask: attention map must be rank-2");
    const std::size_t n_q = scores.dim(0), n_s = scores.dim(1);
    require_flat_len(support_mask, n_s, "dicm_mask(support)");
    require_flat_len(query_mask, n_q, "dicm_mask(query)");

    AttentionMap out{scores, attn.scaled};
    MaskingReport report;
    report.strategy = Strategy::Dicm;
    report.total_cells = n_q * n_s;

    // argmaxes are taken on the input map, matching the algorithm's separate
    // additive mask
    for (std::size_t col = 0; col < n_s; ++col) {
        const std::size_t row = argmax_column(scores, col);
        if (support_mask.flat(col) != query_mask.flat(row)) {
            out.scores(row, col) = kNegInf;
            ++report.masked_cells;
            ++report.masked_columns;
        }
    }
    report.ratio = report.total_cells
                       ? static_cast<double>(report.masked_cells) /
                             static_cast<double>(report.total_cells)
                       : 0.0;
    return {std::move(out), report};
}

std::pair<AttentionMap, MaskingReport> cyctr_mask(const AttentionMap& attn,
                                                  const BinaryMask& support_mask) {
    const Tensor& scores = attn.scores;
    if (scores.rank() != 2)
        throw DimensionError("cyctr_mask: attention map must be rank-2");
    const std::size_t n_q = scores.dim(0), n_s = scores.dim(1);
    require_flat_len(support_mask, n_s, "cyctr_mask(support)");

    std::vector<std::size_t> doomed;
    for (std::size_t col = 0; col < n_s; ++col) {
        const std::size_t max_q = argmax_column(scores, col);
        const std::size_t max_s = argmax_row(scores, max_q);
        if (support_mask.flat(col) != support_mask.flat(max_s))
            doomed.push_back(col);
    }

    AttentionMap out{scores, attn.scaled};
    MaskingReport report;
    report.strategy = Strategy::Cyctr;
    report.total_cells = n_q * n_s;

    if (doomed.size() == n_s) {
        // a fully -inf map is undefined under softmax; leave it unmasked
        report.skipped = true;
        return {std::move(out), report};
    }
    for (std::size_t col : doomed)
        for (std::size_t r = 0; r < n_q; ++r)
            out.scores(r, col) = kNegInf;
    report.masked_columns = doomed.size();
    report.masked_cells = doomed.size() * n_q;
    report.ratio = report.total_cells
                       ? static_cast<double>(report.masked_cells) /
                             static_cast<double>(report.total_cells)
                       : 0.0;
    return {std::move(out), report};
}

std::pair<Tensor, MaskingReport> attention_forward(const Tensor& query_feat,
                                                   const Tensor& support_feat,
                                                   const ProjectionWeights& weights,
                                                   Strategy strategy,
                                                   const BinaryMask* support_mask,
                                                   const BinaryMask* query_mask) {
    if (strategy == Strategy::Dicm && (support_mask == nullptr || query_mask == nullptr))
        throw ModeError(
            "attention_forward: DICM masking needs support and query masks "
            "(training mode); at inference run with strategy none");
    if (strategy == Strategy::Cyctr && support_mask == nullptr)
        throw ModeError("attention_forward: CyCTR masking needs the support mask");

    AttentionMap attn = cross_attention_scores(query_feat, support_feat, weights);
    MaskingReport report;
    report.strategy = strategy;
    report.total_cells = attn.scores.size();
    if (strategy == Strategy::Dicm) {
        auto [masked, rep] = dicm_mask(attn, *support_mask, *query_mask);
        attn = std::move(masked);
        report = rep;
    } else if (strategy == Strategy::Cyctr) {
        auto [masked, rep] = cyctr_mask(attn, *support_mask);
        attn = std::move(masked);
        report = rep;
    }

    const Tensor probs = row_softmax(attn.scores);

    const std::vector<double> v =
        project(weights.wv, weights.bv, support_feat, "attention_forward(value)");
    const std::size_t d_k = weights.wv.dim(0);
    const std::size_t n_q = query_feat.dim(1) * query_feat.dim(2);
    const std::size_t n_s = support_feat.dim(1) * support_feat.dim(2);

    Tensor out(Shape{d_k, query_feat.dim(1), query_feat.dim(2)});
    float* po = out.data().data();
    const float* pp = probs.data().data();
    const std::int64_t rows = static_cast<std::int64_t>(n_q);
#pragma omp parallel for if (rows * static_cast<std::int64_t>(n_s) > 4096)
    for (std::int64_t r = 0; r < rows; ++r) {
        std::vector<double> acc(d_k, 0.0);
        const float* prow = pp + static_cast<std::size_t>(r) * n_s;
        for (std::size_t s = 0; s < n_s; ++s) {
            const double p = static_cast<double>(prow[s]);
            if (p == 0.0) continue;
            const double* vrow = v.data() + s * d_k;
            for (std::size_t d = 0; d < d_k; ++d)
                acc[d] += p * vrow[d];
        }
        for (std::size_t d = 0; d < d_k; ++d)
            po[d * n_q + static_cast<std::size_t>(r)] = static_cast<float>(acc[d]);
    }
    return {std::move(out), report};
}

std::pair<Tensor, std::vector<MaskingReport>> decoder_chain(
    const Tensor& query_feat, const Tensor& support_feat,
    std::span<const ProjectionWeights> blocks, Strategy strategy,
    const BinaryMask* support_mask, const BinaryMask* query_mask) {
    if (blocks.empty())
        throw ConfigError("decoder_chain: need at least one block");

    Tensor current = query_feat;
    std::vector<MaskingReport> reports;
    reports.reserve(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (blocks[b].wq.dim(1) != current.dim(0))
            throw DimensionError("decoder_chain: block " + std::to_string(b) +
                                 " expects " + std::to_string(blocks[b].wq.dim(1)) +
                                 " query channels, got " +
                                 std::to_string(current.dim(0)));
        auto [next, report] = attention_forward(current, support_feat, blocks[b],
                                                strategy, support_mask, query_mask);
        report.block_index = static_cast<int>(b);
        reports.push_back(report);
        current = std::move(next);
    }
    return {std::move(current), std::move(reports)};
}

}  // namespace fsskit
