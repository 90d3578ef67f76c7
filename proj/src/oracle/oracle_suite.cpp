#include "oracle_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "fsskit/episode.hpp"
#include "fsskit/kernels.hpp"
#include "fsskit/metrics.hpp"
#include "fsskit/pmgm.hpp"
#include "fsskit/ref/reference.hpp"
#include "fsskit/rng.hpp"

namespace fsskit::oracle {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (float& v : t.data())
        v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

BinaryMask random_mask(Rng& rng, std::size_t h, std::size_t w, double p = 0.5) {
    BinaryMask m(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            m.set(y, x, rng.uniform() < p);
    return m;
}

double max_diff(const std::vector<float>& got, const std::vector<double>& want) {
    double m = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(got[i]) - want[i]));
    return m;
}

SuiteResult finish(std::string name, std::size_t cases, double diff, double tol) {
    return SuiteResult{std::move(name), cases, diff, tol, diff <= tol};
}

SuiteResult suite_elementwise(std::uint64_t seed, bool inject_fault) {
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        Rng rng(derive_seed(seed, 100 + k));
        Tensor a = random_tensor(rng, Shape{3, 4, 4});
        BinaryMask m = random_mask(rng, 4, 4);
        Tensor got = elementwise_mul(a, m);
        if (inject_fault && k == 17) got.data()[5] += 1e-3f;
        worst = std::max(worst, max_diff(got.data(), ref::elementwise_mul_mask(a, m)));

        Tensor b = random_tensor(rng, Shape{3, 4, 4});
        Tensor got2 = elementwise_mul(a, b);
        worst = std::max(worst, max_diff(got2.data(), ref::elementwise_mul(a, b)));
    }
    return finish("elementwise_mul", 200, worst, 1e-6);
}

SuiteResult suite_conv1x1(std::uint64_t seed) {
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        Rng rng(derive_seed(seed, 200 + k));
        Tensor x = random_tensor(rng, Shape{4, 5, 6});
        Tensor w = random_tensor(rng, Shape{2, 4});
        std::vector<float> bias = {static_cast<float>(rng.uniform(-1, 1)),
                                   static_cast<float>(rng.uniform(-1, 1))};
        Tensor got = conv1x1(x, w, bias);
        worst = std::max(worst, max_diff(got.data(), ref::conv1x1(x, w, bias)));
    }
    return finish("conv1x1", 100, worst, 1e-6);
}

SuiteResult suite_row_softmax(std::uint64_t seed) {
    const float neg_inf = -std::numeric_limits<float>::infinity();
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        Rng rng(derive_seed(seed, 300 + k));
        Tensor a = random_tensor(rng, Shape{6, 7}, -4.0f, 4.0f);
        // sprinkle mask sentinels, keeping at least one finite entry per row
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 6; ++c)
                if (rng.uniform() < 0.25) a(r, c) = neg_inf;
        Tensor got = row_softmax(a);
        worst = std::max(worst, max_diff(got.data(), ref::row_softmax(a)));
    }
    return finish("row_softmax", 50, worst, 1e-6);
}

SuiteResult suite_resize(std::uint64_t seed) {
    double worst = 0.0;
    std::size_t cases = 0;
    const std::pair<std::size_t, std::size_t> sizes[] = {{2, 4}, {4, 4}, {3, 7}, {8, 5}};
    for (int k = 0; k < 25; ++k) {
        Rng rng(derive_seed(seed, 400 + k));
        Tensor x = random_tensor(
            rng, Shape{2, static_cast<std::size_t>(2 + k % 3),
                       static_cast<std::size_t>(3 + k % 4)});
        for (auto [oh, ow] : sizes) {
            Tensor got = resize_bilinear(x, oh, ow);
            worst = std::max(worst, max_diff(got.data(), ref::resize_bilinear(x, oh, ow)));
            ++cases;
        }
    }
    return finish("resize_bilinear", cases, worst, 1e-6);
}

SuiteResult suite_minmax(std::uint64_t seed) {
    // exact: the reference's doubles must round to the very floats we produce
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        Rng rng(derive_seed(seed, 500 + k));
        Tensor v = random_tensor(rng, Shape{1, 8, 8});
        BinaryMask region = random_mask(rng, 8, 8, k % 10 == 0 ? 0.0 : 0.4);
        Tensor got = masked_minmax_normalize(v, region);
        const std::vector<double> want = ref::masked_minmax_normalize(v, region);
        for (std::size_t i = 0; i < want.size(); ++i) {
            const double d = std::fabs(static_cast<double>(got.data()[i]) -
                                       static_cast<double>(static_cast<float>(want[i])));
            worst = std::max(worst, d);
        }
    }
    return finish("masked_minmax_normalize", 100, worst, 0.0);
}

SuiteResult suite_map(std::uint64_t seed) {
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        Rng rng(derive_seed(seed, 600 + k));
        Tensor f = random_tensor(rng, Shape{16, 8, 8});
        BinaryMask region = random_mask(rng, 8, 8, 0.35);
        auto got = masked_average_pool(f, region);
        auto want = ref::masked_average_pool(f, region);
        if (got.has_value() != want.has_value()) {
            worst = std::numeric_limits<double>::infinity();
            continue;
        }
        if (got)
            worst = std::max(worst, max_diff(*got, *want));
    }
    return finish("masked_average_pool", 100, worst, 1e-5);
}

SuiteResult suite_pmgm_forward(std::uint64_t seed) {
    double worst = 0.0;
    SyntheticConfig cfg;
    cfg.seed = seed;
    cfg.distractor = true;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const SyntheticEpisode se = generate_synthetic_episode(cfg, i);
        const Episode& ep = se.episode;
        const Shot& shot = ep.shots[0];

        auto [s_pos, s_neg] = threshold_cam(shot.cam, 0.7f);
        auto [q_pos, q_neg] = threshold_cam(ep.query_cam, 0.7f);
        const RegionMasks regions = decompose_regions(shot.mask, s_pos, s_neg);
        const PrototypeSet protos = build_prototypes(shot.features, regions, shot.mask);
        const PriorMap got =
            region_cosine_prior(ep.query_features, protos, q_pos, q_neg);

        const std::vector<double> want =
            ref::pmgm_prior(shot.features, shot.mask, shot.cam.grid(),
                            ep.query_features, ep.query_cam.grid(), 0.7);
        worst = std::max(worst, max_diff(got.grid.data(), want));
    }
    return finish("pmgm_prior_forward", 50, worst, 1e-5);
}

SuiteResult suite_attention_scores(std::uint64_t seed) {
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        Rng rng(derive_seed(seed, 700 + k));
        Tensor q = random_tensor(rng, Shape{6, 2, 2});
        Tensor s = random_tensor(rng, Shape{6, 2, 3});
        ProjectionWeights w = make_projection_weights(seed + k, 0, 6, 6, 4);
        AttentionMap got = cross_attention_scores(q, s, w);
        worst = std::max(worst,
                         max_diff(got.scores.data(),
                                  ref::attention_scores(q, s, w.wq, w.wk)));
    }
    return finish("cross_attention_scores", 50, worst, 1e-5);
}

SuiteResult suite_baseline(std::uint64_t seed) {
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        Rng rng(derive_seed(seed, 800 + k));
        Tensor q = random_tensor(rng, Shape{8, 6, 6});
        std::vector<float> proto(8);
        for (float& v : proto) v = static_cast<float>(rng.uniform(-1, 1));
        if (std::all_of(proto.begin(), proto.end(), [](float v) { return v == 0.0f; }))
            proto[0] = 1.0f;
        PriorMap got = baseline_prior(q, proto);
        worst = std::max(worst, max_diff(got.grid.data(), ref::baseline_prior(q, proto)));
    }
    return finish("baseline_prior", 50, worst, 1e-5);
}

SuiteResult suite_fb_iou(std::uint64_t seed) {
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        Rng rng(derive_seed(seed, 900 + k));
        std::vector<std::pair<BinaryMask, BinaryMask>> eps;
        const std::size_t n = 1 + rng.below(5);
        for (std::size_t i = 0; i < n; ++i)
            eps.emplace_back(random_mask(rng, 6, 6), random_mask(rng, 6, 6));
        worst = std::max(worst, std::fabs(fb_iou(eps) - ref::fb_iou_recount(eps)));
    }
    return finish("fb_iou_recount", 50, worst, 0.0);
}

SuiteResult suite_aggregate(std::uint64_t seed) {
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        Rng rng(derive_seed(seed, 1000 + k));
        std::vector<EpisodeMetrics> recs;
        const std::size_t n = 1 + rng.below(8);
        for (std::size_t i = 0; i < n; ++i) {
            EpisodeMetrics e;
            e.class_id = static_cast<int>(rng.below(3));
            BinaryMask pred = random_mask(rng, 5, 5), target = random_mask(rng, 5, 5);
            e.fg = confusion(pred, target);
            e.bg = confusion_background(pred, target);
            e.prior_ce = rng.uniform(0.0, 2.0);
            recs.push_back(e);
        }
        const MetricSummary s = aggregate(recs);
        // independent recomputation of mean and population std
        double mean = 0.0;
        for (const auto& e : recs) mean += e.prior_ce;
        mean /= static_cast<double>(recs.size());
        double var = 0.0;
        for (const auto& e : recs) var += (e.prior_ce - mean) * (e.prior_ce - mean);
        const double stddev = std::sqrt(var / static_cast<double>(recs.size()));
        worst = std::max(worst, std::fabs(s.prior_ce_mean - mean));
        worst = std::max(worst, std::fabs(s.prior_ce_std - stddev));
    }
    return finish("aggregate_recompute", 50, worst, 1e-9);
}

}  // namespace

std::vector<SuiteResult> run_all(const Options& opts) {
    std::vector<SuiteResult> out;
    out.push_back(suite_elementwise(opts.seed, opts.inject_fault));
    out.push_back(suite_conv1x1(opts.seed));
    out.push_back(suite_row_softmax(opts.seed));
    out.push_back(suite_resize(opts.seed));
    out.push_back(suite_minmax(opts.seed));
    out.push_back(suite_map(opts.seed));
    out.push_back(suite_pmgm_forward(opts.seed));
    out.push_back(suite_attention_scores(opts.seed));
    out.push_back(suite_baseline(opts.seed));
    out.push_back(suite_fb_iou(opts.seed));
    out.push_back(suite_aggregate(opts.seed));
    return out;
}

}  // namespace fsskit::oracle
