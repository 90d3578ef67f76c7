#include "fsskit/pmgm.hpp"

#include <cmath>
#include <cstdint>

#include "fsskit/kernels.hpp"

namespace fsskit {

namespace {

void require_1hw(const Tensor& t, const char* what) {
    if (t.rank() != 3 || t.dim(0) != 1)
        throw DimensionError(std::string(what) + ": expected a 1xHxW map, got " +
                             t.shape().str());
}

void require_feature_grid(const Tensor& f, const BinaryMask& m, const char* what) {
    if (f.rank() != 3)
        throw DimensionError(std::string(what) + ": expected c x h x w features, got " +
                             f.shape().str());
    if (f.dim(1) != m.height() || f.dim(2) != m.width())
        throw DimensionError(std::string(what) + ": features " + f.shape().str() +
                             " vs mask " + std::to_string(m.height()) + "x" +
                             std::to_string(m.width()));
}

}  // namespace

CamHeatmap::CamHeatmap(Tensor grid, int class_id)
    : grid_(std::move(grid)), class_id_(class_id) {
    require_1hw(grid_, "CamHeatmap");
    for (float& v : grid_.data()) {
        if (!(v >= 0.0f)) v = 0.0f;  // also catches NaN
        if (v > 1.0f) v = 1.0f;
    }
}

std::pair<BinaryMask, BinaryMask> threshold_cam(const CamHeatmap& heatmap, float delta) {
    if (!(delta > 0.0f && delta < 1.0f))
        throw ConfigError("threshold_cam: delta must lie in (0,1), got " +
                          std::to_string(delta));
    const std::size_t h = heatmap.height(), w = heatmap.width();
    BinaryMask pos(h, w), neg(h, w);
    const float* pv = heatmap.grid().data().data();
    for (std::size_t i = 0; i < h * w; ++i) {
        const bool on = pv[i] >= delta;
        if (on)
            pos.set(i / w, i % w, true);
        else
            neg.set(i / w, i % w, true);
    }
    return {std::move(pos), std::move(neg)};
}

RegionMasks decompose_regions(const BinaryMask& support_mask,
                              const BinaryMask& cam_pos,
                              const BinaryMask& cam_neg) {
    require_same_grid(support_mask, cam_pos, "decompose_regions");
    require_same_grid(support_mask, cam_neg, "decompose_regions");
    const std::size_t h = support_mask.height(), w = support_mask.width();
    RegionMasks out{cam_pos, cam_neg, BinaryMask(h, w), BinaryMask(h, w)};
    for (std::size_t i = 0; i < h * w; ++i) {
        if (support_mask.flat(i) && cam_pos.flat(i)) out.a1.set(i / w, i % w, true);
        if (support_mask.flat(i) && cam_neg.flat(i)) out.a2.set(i / w, i % w, true);
    }
    return out;
}

std::optional<std::vector<float>> masked_average_pool(const Tensor& features,
                                                      const BinaryMask& region) {
    require_feature_grid(features, region, "masked_average_pool");
    const std::size_t active = region.count();
    if (active == 0) return std::nullopt;

    const std::size_t c = features.dim(0);
    const std::size_t hw = region.size();
    const float* pf = features.data().data();
    std::vector<float> out(c);
    const std::int64_t nc = static_cast<std::int64_t>(c);
#pragma omp parallel for if (nc * static_cast<std::int64_t>(hw) > 4096)
    for (std::int64_t ch = 0; ch < nc; ++ch) {
        double acc = 0.0;
        const float* plane = pf + ch * hw;
        for (std::size_t i = 0; i < hw; ++i)
            if (region.flat(i)) acc += static_cast<double>(plane[i]);
        out[static_cast<std::size_t>(ch)] =
            static_cast<float>(acc / static_cast<double>(active));
    }
    return out;
}

PrototypeSet build_prototypes(const Tensor& support_features,
                              const RegionMasks& regions,
                              const BinaryMask& support_mask) {
    require_feature_grid(support_features, support_mask, "build_prototypes");
    if (support_mask.empty_region())
        throw InvalidEpisodeError("build_prototypes: support mask has no foreground");
    PrototypeSet out;
    out.p1 = masked_average_pool(support_features, regions.a1);
    out.p2 = masked_average_pool(support_features, regions.a2);
    out.p = masked_average_pool(support_features, support_mask);
    return out;
}

PriorMap region_cosine_prior(const Tensor& query_features,
                             const PrototypeSet& prototypes,
                             const BinaryMask& query_cam_pos,
                             const BinaryMask& query_cam_neg) {
    require_feature_grid(query_features, query_cam_pos, "region_cosine_prior");
    require_same_grid(query_cam_pos, query_cam_neg, "region_cosine_prior");
    if (!prototypes.p.has_value())
        throw InvariantError("region_cosine_prior: whole-mask prototype undefined");

    const std::size_t c = query_features.dim(0);
    const std::size_t h = query_features.dim(1), w = query_features.dim(2);
    const std::size_t hw = h * w;

    const std::vector<float>& p1 = prototypes.p1 ? *prototypes.p1 : *prototypes.p;
    const std::vector<float>& p2 = prototypes.p2 ? *prototypes.p2 : *prototypes.p;
    if (p1.size() != c || p2.size() != c)
        throw DimensionError("region_cosine_prior: prototype length vs channels");

    auto proto_norm = [](const std::vector<float>& p) {
        double n = 0.0;
        for (float v : p) n += static_cast<double>(v) * static_cast<double>(v);
        return std::sqrt(n);
    };
    const double n1 = proto_norm(p1), n2 = proto_norm(p2);

    Tensor raw(Shape{1, h, w});
    const float* pf = query_features.data().data();
    float* pr = raw.data().data();
    const std::int64_t n = static_cast<std::int64_t>(hw);
#pragma omp parallel for if (n * static_cast<std::int64_t>(c) > 4096)
    for (std::int64_t i = 0; i < n; ++i) {
        const bool pos = query_cam_pos.flat(static_cast<std::size_t>(i)) != 0;
        const std::vector<float>& proto = pos ? p1 : p2;
        const double pn = pos ? n1 : n2;
        double dot = 0.0, xn = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double xv = pf[ch * hw + static_cast<std::size_t>(i)];
            dot += xv * static_cast<double>(proto[ch]);
            xn += xv * xv;
        }
        xn = std::sqrt(xn);
        pr[i] = (xn == 0.0 || pn == 0.0) ? 0.0f : static_cast<float>(dot / (xn * pn));
    }

    Tensor pos_norm = masked_minmax_normalize(raw, query_cam_pos);
    Tensor neg_norm = masked_minmax_normalize(raw, query_cam_neg);
    Tensor merged(Shape{1, h, w});
    for (std::size_t i = 0; i < hw; ++i)
        merged.data()[i] = pos_norm.data()[i] + neg_norm.data()[i];
    return PriorMap{std::move(merged)};
}

std::pair<Tensor, Tensor> expand_prototypes(const PrototypeSet& prototypes,
                                            const BinaryMask& region_pos,
                                            const BinaryMask& region_neg,
                                            std::size_t channels) {
    require_same_grid(region_pos, region_neg, "expand_prototypes");
    const std::size_t h = region_pos.height(), w = region_pos.width();
    const std::size_t hw = h * w;
    for (std::size_t i = 0; i < hw; ++i)
        if (region_pos.flat(i) && region_neg.flat(i))
            throw InvariantError("expand_prototypes: regions overlap at pixel " +
                                 std::to_string(i));
    if (!prototypes.p.has_value())
        throw InvariantError("expand_prototypes: whole-mask prototype undefined");
    if (prototypes.p->size() != channels)
        throw DimensionError("expand_prototypes: prototype length " +
                             std::to_string(prototypes.p->size()) + " vs channels " +
                             std::to_string(channels));

    Tensor x_p(Shape{channels, h, w});
    Tensor x_c(Shape{channels, h, w});
    for (std::size_t ch = 0; ch < channels; ++ch) {
        const float pv = (*prototypes.p)[ch];
        const float v1 = prototypes.p1 ? (*prototypes.p1)[ch] : 0.0f;
        const float v2 = prototypes.p2 ? (*prototypes.p2)[ch] : 0.0f;
        float* pp = x_p.data().data() + ch * hw;
        float* pc = x_c.data().data() + ch * hw;
        for (std::size_t i = 0; i < hw; ++i) {
            pp[i] = pv;
            pc[i] = region_pos.flat(i) ? v1 : (region_neg.flat(i) ? v2 : 0.0f);
        }
    }
    return {std::move(x_p), std::move(x_c)};
}

Tensor fuse_features(const Tensor& branch_features, const Tensor& x_p,
                     const Tensor& x_c, const PriorMap& prior,
                     const Tensor& weights, std::span<const float> bias) {
    require_1hw(prior.grid, "fuse_features");
    const std::size_t c = branch_features.dim(0);
    const Tensor parts[] = {branch_features, x_p, x_c, prior.grid};
    Tensor stacked = channel_concat(parts);
    if (weights.rank() != 2 || weights.dim(1) != stacked.dim(0))
        throw DimensionError("fuse_features: weights " + weights.shape().str() +
                             " vs concatenated channels " +
                             std::to_string(stacked.dim(0)));
    if (weights.dim(0) != c)
        throw DimensionError("fuse_features: fusion must map back to " +
                             std::to_string(c) + " channels, weights give " +
                             std::to_string(weights.dim(0)));
    return conv1x1(stacked, weights, bias);
}

std::pair<PriorMap, PrototypeSet> kshot_average(std::span<const PriorMap> priors,
                                                std::span<const PrototypeSet> prototypes) {
    if (priors.empty() || prototypes.empty())
        throw ConfigError("kshot_average: need at least one shot");
    if (priors.size() != prototypes.size())
        throw ConfigError("kshot_average: prior/prototype shot counts differ");

    const Shape shape = priors[0].grid.shape();
    for (const PriorMap& p : priors)
        if (p.grid.shape() != shape)
            throw DimensionError("kshot_average: prior extents differ, " + shape.str() +
                                 " vs " + p.grid.shape().str());

    const std::size_t k = priors.size();
    Tensor mean(shape);
    const std::size_t n = mean.size();
    std::vector<double> acc(n, 0.0);
    for (const PriorMap& p : priors)
        for (std::size_t i = 0; i < n; ++i)
            acc[i] += static_cast<double>(p.grid.data()[i]);
    for (std::size_t i = 0; i < n; ++i)
        mean.data()[i] = static_cast<float>(acc[i] / static_cast<double>(k));

    auto average_slot = [&](auto getter) -> std::optional<std::vector<float>> {
        std::size_t defined = 0, channels = 0;
        for (const PrototypeSet& ps : prototypes) {
            const auto& slot = getter(ps);
            if (slot.has_value()) {
                if (defined && slot->size() != channels)
                    throw DimensionError("kshot_average: prototype lengths differ");
                channels = slot->size();
                ++defined;
            }
        }
        if (defined == 0) return std::nullopt;
        std::vector<double> sum(channels, 0.0);
        for (const PrototypeSet& ps : prototypes) {
            const auto& slot = getter(ps);
            if (!slot.has_value()) continue;
            for (std::size_t i = 0; i < channels; ++i)
                sum[i] += static_cast<double>((*slot)[i]);
        }
        std::vector<float> out(channels);
        for (std::size_t i = 0; i < channels; ++i)
            out[i] = static_cast<float>(sum[i] / static_cast<double>(defined));
        return out;
    };

    PrototypeSet avg;
    avg.p1 = average_slot([](const PrototypeSet& ps) -> const auto& { return ps.p1; });
    avg.p2 = average_slot([](const PrototypeSet& ps) -> const auto& { return ps.p2; });
    avg.p = average_slot([](const PrototypeSet& ps) -> const auto& { return ps.p; });
    return {PriorMap{std::move(mean)}, std::move(avg)};
}

}  // namespace fsskit
