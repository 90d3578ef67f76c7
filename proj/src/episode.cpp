#include "fsskit/episode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fsskit/fst.hpp"
#include "fsskit/kernels.hpp"
#include "fsskit/rng.hpp"

namespace fsskit {

namespace {

constexpr float kCamDelta = 0.7f;  // carving threshold used by the generator

[[maybe_unused]] void require_grid(const Tensor& t, std::size_t h, std::size_t w,
                                   const char* what) {
    if (t.rank() != 3 || t.dim(1) != h || t.dim(2) != w)
        throw DimensionError(std::string(what) + ": expected spatial " +
                             std::to_string(h) + "x" + std::to_string(w) + ", got " +
                             t.shape().str());
}

// 3x3 binomial blur of a {0,1} grid, zero padded; output stays in [0,1]
std::vector<float> blur3(const std::vector<std::uint8_t>& bits, std::size_t h,
                         std::size_t w) {
    std::vector<float> tmp(h * w, 0.0f), out(h * w, 0.0f);
    auto get = [&](const auto& v, std::ptrdiff_t y, std::ptrdiff_t x) -> float {
        if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) ||
            x >= static_cast<std::ptrdiff_t>(w))
            return 0.0f;
        return static_cast<float>(v[static_cast<std::size_t>(y) * w +
                                    static_cast<std::size_t>(x)]);
    };
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const auto sy = static_cast<std::ptrdiff_t>(y);
            const auto sx = static_cast<std::ptrdiff_t>(x);
            tmp[y * w + x] = 0.25f * get(bits, sy, sx - 1) + 0.5f * get(bits, sy, sx) +
                             0.25f * get(bits, sy, sx + 1);
        }
    auto getf = [&](std::ptrdiff_t y, std::ptrdiff_t x) -> float {
        if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) ||
            x >= static_cast<std::ptrdiff_t>(w))
            return 0.0f;
        return tmp[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
    };
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const auto sy = static_cast<std::ptrdiff_t>(y);
            const auto sx = static_cast<std::ptrdiff_t>(x);
            out[y * w + x] = 0.25f * getf(sy - 1, sx) + 0.5f * getf(sy, sx) +
                             0.25f * getf(sy + 1, sx);
        }
    return out;
}

BinaryMask random_rect(Rng& rng, std::size_t h, std::size_t w, std::size_t min_side,
                       std::size_t max_side) {
    min_side = std::min(min_side, std::min(h, w));
    max_side = std::max(min_side, std::min(max_side, std::min(h, w)));
    const std::size_t rh = min_side + rng.below(max_side - min_side + 1);
    const std::size_t rw = min_side + rng.below(max_side - min_side + 1);
    const std::size_t y0 = rng.below(h - rh + 1);
    const std::size_t x0 = rng.below(w - rw + 1);
    BinaryMask m(h, w);
    for (std::size_t y = y0; y < y0 + rh; ++y)
        for (std::size_t x = x0; x < x0 + rw; ++x)
            m.set(y, x, true);
    return m;
}

bool disjoint(const BinaryMask& a, const BinaryMask& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.flat(i) && b.flat(i)) return false;
    return true;
}

std::vector<float> unit_gaussian(Rng& rng, std::size_t c) {
    std::vector<float> v(c);
    double norm = 0.0;
    for (float& x : v) {
        x = static_cast<float>(rng.normal());
        norm += static_cast<double>(x) * static_cast<double>(x);
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        v[0] = 1.0f;
        return v;
    }
    for (float& x : v) x = static_cast<float>(x / norm);
    return v;
}

// orthonormal to d
std::vector<float> unit_orthogonal(Rng& rng, std::span<const float> d) {
    const std::size_t c = d.size();
    std::vector<float> u(c);
    for (;;) {
        double dot = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            u[i] = static_cast<float>(rng.normal());
            dot += static_cast<double>(u[i]) * static_cast<double>(d[i]);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            u[i] = static_cast<float>(static_cast<double>(u[i]) -
                                      dot * static_cast<double>(d[i]));
            norm += static_cast<double>(u[i]) * static_cast<double>(u[i]);
        }
        norm = std::sqrt(norm);
        if (norm > 1e-6) {
            for (float& x : u) x = static_cast<float>(x / norm);
            return u;
        }
    }
}

// CAM = blurred foreground indicator; corruption adds plain-background
// intruders so that the fraction of CAM+ pixels covering true foreground
// equals the fidelity. The distractor stays CAM-cold: the CAM is
// class-specific and the distractor is not the class.
Tensor make_cam(Rng& rng, const BinaryMask& mask, float fidelity,
                const BinaryMask* exclude) {
    const std::size_t h = mask.height(), w = mask.width();
    std::vector<float> heat = blur3(mask.bits(), h, w);

    std::size_t n_pos = 0;
    for (float v : heat) n_pos += (v >= kCamDelta);
    if (fidelity < 1.0f && n_pos > 0) {
        const double need = static_cast<double>(n_pos) *
                            (1.0 - static_cast<double>(fidelity)) /
                            static_cast<double>(fidelity);
        std::size_t n_add = static_cast<std::size_t>(std::ceil(need - 1e-12));
        std::vector<std::size_t> plain;
        for (std::size_t i = 0; i < h * w; ++i)
            if (!mask.flat(i) && heat[i] < kCamDelta &&
                (exclude == nullptr || !exclude->flat(i)))
                plain.push_back(i);
        n_add = std::min(n_add, plain.size());
        // Fisher-Yates prefix for a deterministic sample without replacement
        for (std::size_t i = 0; i < n_add; ++i) {
            const std::size_t j = i + rng.below(plain.size() - i);
            std::swap(plain[i], plain[j]);
            heat[plain[i]] = kCamDelta + 0.25f * (1.0f - kCamDelta);
        }
    }
    for (float& v : heat) v = std::clamp(v, 0.0f, 1.0f);
    return Tensor(Shape{1, h, w}, std::move(heat));
}

struct ImageDraw {
    BinaryMask fg;
    BinaryMask dist;  // empty mask when no distractor
    bool has_dist = false;
};

ImageDraw draw_regions(Rng& rng, std::size_t h, std::size_t w, bool distractor) {
    const std::size_t fg_min = 3;
    const std::size_t fg_max = std::max<std::size_t>(3, 5 * std::min(h, w) / 8);
    const std::size_t d_min = 3;
    const std::size_t d_max = std::max<std::size_t>(3, 3 * std::min(h, w) / 8);

    if (!distractor)
        return ImageDraw{random_rect(rng, h, w, fg_min, fg_max), BinaryMask(h, w), false};
    ImageDraw out{BinaryMask(h, w), BinaryMask(h, w), false};
    for (int tries = 0; tries < 200; ++tries) {
        BinaryMask fg = random_rect(rng, h, w, fg_min, fg_max);
        BinaryMask dist = random_rect(rng, h, w, d_min, d_max);
        out.fg = std::move(fg);
        if (disjoint(out.fg, dist)) {
            out.dist = std::move(dist);
            out.has_dist = true;
            return out;
        }
    }
    return out;  // grid too cramped: keep the last foreground, skip the distractor
}

// Foreground interior (same blur+threshold carving the CAM uses) carries the
// class direction; the boundary ring carries the class's boundary style; the
// distractor carries the pure class direction.
Tensor synth_features(Rng& rng, const ImageDraw& draw, std::size_t c, float signal,
                      float noise, std::span<const float> class_dir,
                      std::span<const float> boundary_style) {
    const std::size_t h = draw.fg.height(), w = draw.fg.width();
    const std::size_t hw = h * w;
    const std::vector<float> heat = blur3(draw.fg.bits(), h, w);

    Tensor x(Shape{c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i)
            x.data()[ch * hw + i] = static_cast<float>(rng.normal()) * noise;

    for (std::size_t i = 0; i < hw; ++i) {
        const float* add = nullptr;
        if (draw.fg.flat(i))
            add = (heat[i] >= kCamDelta) ? class_dir.data() : boundary_style.data();
        else if (draw.has_dist && draw.dist.flat(i))
            add = class_dir.data();
        if (add == nullptr) continue;
        for (std::size_t ch = 0; ch < c; ++ch)
            x.data()[ch * hw + i] += signal * add[ch];
    }
    return x;
}

void check_config(const SyntheticConfig& cfg) {
    if (cfg.channels == 0 || cfg.height == 0 || cfg.width == 0)
        throw ConfigError("synthetic episode: extents must be >= 1");
    if (cfg.height < 3 || cfg.width < 3)
        throw ConfigError("synthetic episode: grid must be at least 3x3");
    if (cfg.noise < 0.0f)
        throw ConfigError("synthetic episode: noise scale must be >= 0");
    if (!(cfg.cam_fidelity >= 0.0f && cfg.cam_fidelity <= 1.0f))
        throw ConfigError("synthetic episode: cam fidelity must lie in [0,1]");
    if (cfg.shots == 0)
        throw ConfigError("synthetic episode: need at least one shot");
}

}  // namespace

void validate_episode(const Episode& e) {
    if (e.shots.empty())
        throw InvalidEpisodeError("episode has no support shots");
    const std::size_t h = e.query_features.dim(1), w = e.query_features.dim(2);
    const std::size_t c = e.query_features.dim(0);
    // cam grids may come at a different resolution; the pipeline aligns them
    // by bilinear resize before thresholding
    if (e.query_mask)
        require_same_grid(*e.query_mask, BinaryMask(h, w), "query mask vs features");
    for (const Shot& s : e.shots) {
        require_grid(s.features, h, w, "support features");
        if (s.features.dim(0) != c)
            throw DimensionError("support/query channel counts differ");
        require_same_grid(s.mask, BinaryMask(h, w), "support mask vs features");
        if (s.mask.empty_region())
            throw InvalidEpisodeError("support mask has no foreground");
    }
}

SyntheticEpisode generate_synthetic_episode(const SyntheticConfig& cfg,
                                            std::uint64_t episode_index) {
    check_config(cfg);
    Rng rng(derive_seed(cfg.seed, episode_index));
    const std::size_t c = cfg.channels, h = cfg.height, w = cfg.width;

    const std::vector<float> class_dir = unit_gaussian(rng, c);
    const std::vector<float> boundary_style = unit_orthogonal(rng, class_dir);

    SyntheticEpisode out{Episode{}, BinaryMask(h, w), {}};
    Episode& ep = out.episode;
    ep.class_id = 1 + static_cast<int>(episode_index % 5);
    ep.distractor = cfg.distractor;

    for (std::size_t s = 0; s < cfg.shots; ++s) {
        ImageDraw draw = draw_regions(rng, h, w, cfg.distractor);
        Tensor feats = synth_features(rng, draw, c, cfg.signal, cfg.noise, class_dir,
                                      boundary_style);
        Tensor cam = make_cam(rng, draw.fg, cfg.cam_fidelity,
                              draw.has_dist ? &draw.dist : nullptr);
        ep.shots.push_back(Shot{std::move(feats), draw.fg,
                                CamHeatmap(std::move(cam), ep.class_id),
                                static_cast<int>(s)});
        out.support_distractors.push_back(draw.dist);
    }

    ImageDraw qdraw = draw_regions(rng, h, w, cfg.distractor);
    ep.query_features = synth_features(rng, qdraw, c, cfg.signal, cfg.noise, class_dir,
                                       boundary_style);
    Tensor qcam = make_cam(rng, qdraw.fg, cfg.cam_fidelity,
                           qdraw.has_dist ? &qdraw.dist : nullptr);
    ep.query_cam = CamHeatmap(std::move(qcam), ep.class_id);
    ep.query_mask = qdraw.fg;
    out.query_distractor = qdraw.dist;

    validate_episode(ep);
    return out;
}

PriorMap baseline_prior(const Tensor& query_features,
                        std::span<const float> support_prototype) {
    if (query_features.rank() != 3)
        throw DimensionError("baseline_prior: expected c x h x w features");
    const std::size_t c = query_features.dim(0);
    if (support_prototype.size() != c)
        throw DimensionError("baseline_prior: prototype length vs channels");
    double pn = 0.0;
    for (float v : support_prototype)
        pn += static_cast<double>(v) * static_cast<double>(v);
    pn = std::sqrt(pn);
    if (pn == 0.0)
        throw ConfigError("baseline_prior: prototype has zero norm");

    const std::size_t h = query_features.dim(1), w = query_features.dim(2);
    const std::size_t hw = h * w;
    Tensor raw(Shape{1, h, w});
    const float* pf = query_features.data().data();
    for (std::size_t i = 0; i < hw; ++i) {
        double dot = 0.0, xn = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double xv = pf[ch * hw + i];
            dot += xv * static_cast<double>(support_prototype[ch]);
            xn += xv * xv;
        }
        xn = std::sqrt(xn);
        raw.data()[i] = (xn == 0.0) ? 0.0f : static_cast<float>(dot / (xn * pn));
    }
    return PriorMap{masked_minmax_normalize(raw, BinaryMask::ones(h, w))};
}

namespace {

FusionWeights seeded_fusion(std::uint64_t seed, std::size_t c) {
    const std::size_t c_in = 3 * c + 1;
    Rng rng(derive_seed(seed, 0xF05Eull));
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in));
    Tensor w(Shape{c, c_in});
    for (float& v : w.data())
        v = static_cast<float>(rng.uniform(-bound, bound));
    return FusionWeights{std::move(w), std::vector<float>(c, 0.0f)};
}

std::vector<ProjectionWeights> seeded_blocks(std::uint64_t seed, int cab, std::size_t c,
                                             std::size_t d_k) {
    std::vector<ProjectionWeights> blocks;
    blocks.reserve(static_cast<std::size_t>(cab));
    for (int b = 0; b < cab; ++b) {
        const std::size_t c_query = (b == 0) ? c : d_k;
        blocks.push_back(make_projection_weights(seed, b, c_query, c, d_k));
    }
    return blocks;
}

template <typename F>
auto stage(const char* label, F&& f) {
    try {
        return f();
    } catch (DimensionError& e) {
        throw DimensionError(std::string(label) + ": " + e.what());
    } catch (InvalidEpisodeError& e) {
        throw InvalidEpisodeError(std::string(label) + ": " + e.what());
    } catch (InvariantError& e) {
        throw InvariantError(std::string(label) + ": " + e.what());
    }
}

}  // namespace

PipelineResult run_pipeline(const Episode& episode, const PipelineConfig& config) {
    validate_episode(episode);
    if (config.strategy == Strategy::Dicm && !episode.query_mask.has_value())
        throw ModeError(
            "run_pipeline: DICM masking is training-only and needs the query mask; "
            "this episode has none (inference mode)");
    if (config.cab < 1)
        throw ConfigError("run_pipeline: need at least one cross-attention block");

    const std::size_t c = episode.query_features.dim(0);
    const std::size_t h = episode.query_features.dim(1);
    const std::size_t w = episode.query_features.dim(2);
    const std::size_t d_k = config.d_k == 0 ? c : config.d_k;

    const FusionWeights fusion =
        config.fusion ? *config.fusion : seeded_fusion(config.weight_seed, c);
    const std::vector<ProjectionWeights> blocks =
        config.blocks ? *config.blocks
                      : seeded_blocks(config.weight_seed, config.cab, c, d_k);

    // query CAM partition, shared across shots
    auto [q_pos, q_neg] = stage("threshold_cam(query)", [&] {
        CamHeatmap cam = episode.query_cam;
        if (cam.height() != h || cam.width() != w)
            cam = CamHeatmap(resize_bilinear(cam.grid(), h, w), cam.class_id());
        return threshold_cam(cam, config.delta);
    });

    std::vector<PriorMap> shot_priors;
    std::vector<PrototypeSet> shot_protos;
    std::vector<Tensor> shot_fused_support;
    BinaryMask support_union(h, w);

    for (std::size_t s = 0; s < episode.shots.size(); ++s) {
        const Shot& shot = episode.shots[s];
        const std::string tag = "shot " + std::to_string(s);

        auto [s_pos, s_neg] = stage("threshold_cam(support)", [&] {
            CamHeatmap cam = shot.cam;
            if (cam.height() != h || cam.width() != w)
                cam = CamHeatmap(resize_bilinear(cam.grid(), h, w), cam.class_id());
            return threshold_cam(cam, config.delta);
        });
        const RegionMasks regions = stage("decompose_regions", [&] {
            return decompose_regions(shot.mask, s_pos, s_neg);
        });
        PrototypeSet protos = stage("build_prototypes", [&] {
            return build_prototypes(shot.features, regions, shot.mask);
        });

        shot_priors.push_back(stage("region_cosine_prior(query)", [&] {
            return region_cosine_prior(episode.query_features, protos, q_pos, q_neg);
        }));

        // support branch: the shot matched against its own prototypes
        const PriorMap support_prior = stage("region_cosine_prior(support)", [&] {
            return region_cosine_prior(shot.features, protos, s_pos, s_neg);
        });
        auto [xp_s, xc_s] = stage("expand_prototypes(support)", [&] {
            return expand_prototypes(protos, regions.a1, regions.a2, c);
        });
        shot_fused_support.push_back(stage("fuse_features(support)", [&] {
            return fuse_features(shot.features, xp_s, xc_s, support_prior,
                                 fusion.weights, fusion.bias);
        }));

        for (std::size_t i = 0; i < support_union.size(); ++i)
            if (shot.mask.flat(i)) support_union.set(i / w, i % w, true);
        shot_protos.push_back(std::move(protos));
    }

    auto [avg_prior, avg_protos] = kshot_average(shot_priors, shot_protos);

    auto [xp_q, xc_q] = stage("expand_prototypes(query)", [&] {
        return expand_prototypes(avg_protos, q_pos, q_neg, c);
    });
    Tensor fused_query = stage("fuse_features(query)", [&] {
        return fuse_features(episode.query_features, xp_q, xc_q, avg_prior,
                             fusion.weights, fusion.bias);
    });

    // unified support branch: shot-averaged fused features
    Tensor fused_support(Shape{c, h, w});
    {
        std::vector<double> acc(fused_support.size(), 0.0);
        for (const Tensor& t : shot_fused_support)
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc[i] += static_cast<double>(t.data()[i]);
        const double k = static_cast<double>(shot_fused_support.size());
        for (std::size_t i = 0; i < acc.size(); ++i)
            fused_support.data()[i] = static_cast<float>(acc[i] / k);
    }

    auto [decoder_output, reports] = decoder_chain(
        fused_query, fused_support, blocks, config.strategy, &support_union,
        episode.query_mask ? &*episode.query_mask : nullptr);

    return PipelineResult{std::move(avg_prior),   std::move(avg_protos),
                          std::move(fused_query), std::move(fused_support),
                          std::move(decoder_output), std::move(reports)};
}

void write_episode(const std::filesystem::path& dir, const Episode& episode) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create episode directory " + dir.string() + ": " +
                      ec.message());

    nlohmann::json manifest;
    manifest["class_id"] = episode.class_id;
    manifest["k"] = episode.k();
    manifest["distractor"] = episode.distractor;

    nlohmann::json shots = nlohmann::json::array();
    for (const Shot& s : episode.shots) {
        const std::string idx = std::to_string(s.shot_index);
        const std::string f = "support_features_" + idx + ".fst";
        const std::string m = "support_mask_" + idx + ".fst";
        const std::string camf = "support_cam_" + idx + ".fst";
        write_fst(dir / f, s.features);
        write_fst(dir / m, s.mask);
        write_fst(dir / camf, s.cam.grid());
        shots.push_back({{"shot_index", s.shot_index},
                         {"features", f},
                         {"mask", m},
                         {"cam", camf}});
    }
    manifest["shots"] = shots;

    write_fst(dir / "query_features.fst", episode.query_features);
    write_fst(dir / "query_cam.fst", episode.query_cam.grid());
    nlohmann::json query{{"features", "query_features.fst"},
                         {"cam", "query_cam.fst"}};
    if (episode.query_mask) {
        write_fst(dir / "query_mask.fst", *episode.query_mask);
        query["mask"] = "query_mask.fst";
    } else {
        query["mask"] = nullptr;
    }
    manifest["query"] = query;

    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(2) << "\n";
}

Episode read_episode(const std::filesystem::path& dir) {
    const std::filesystem::path mpath = dir / "manifest.json";
    std::ifstream is(mpath);
    if (!is)
        throw IoError("cannot open " + mpath.string());
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(mpath.string() + ": " + e.what(),
                          static_cast<std::size_t>(e.byte));
    }

    Episode ep;
    try {
        ep.class_id = manifest.at("class_id").get<int>();
        ep.distractor = manifest.value("distractor", false);
        for (const auto& js : manifest.at("shots")) {
            Shot s;
            s.shot_index = js.at("shot_index").get<int>();
            s.features = read_fst_tensor(dir / js.at("features").get<std::string>());
            s.mask = read_fst_mask(dir / js.at("mask").get<std::string>());
            s.cam = CamHeatmap(read_fst_tensor(dir / js.at("cam").get<std::string>()),
                               ep.class_id);
            ep.shots.push_back(std::move(s));
        }
        const auto& jq = manifest.at("query");
        ep.query_features = read_fst_tensor(dir / jq.at("features").get<std::string>());
        ep.query_cam = CamHeatmap(read_fst_tensor(dir / jq.at("cam").get<std::string>()),
                                  ep.class_id);
        if (!jq.at("mask").is_null())
            ep.query_mask = read_fst_mask(dir / jq.at("mask").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(mpath.string() + ": " + e.what(), 0);
    }
    validate_episode(ep);
    return ep;
}

}  // namespace fsskit
