#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fsskit/attention.hpp"
#include "fsskit/pmgm.hpp"
#include "fsskit/tensor.hpp"

namespace fsskit {

struct Shot {
    Tensor features;  // c x h x w
    BinaryMask mask;  // nonempty foreground
    CamHeatmap cam;
    int shot_index = 0;
};

// One support/query task. The query mask is optional: absent at inference.
struct Episode {
    std::vector<Shot> shots;
    Tensor query_features;
    std::optional<BinaryMask> query_mask;
    CamHeatmap query_cam;
    int class_id = 0;
    bool distractor = false;

    std::size_t k() const { return shots.size(); }
};

void validate_episode(const Episode& e);

struct SyntheticConfig {
    std::uint64_t seed = 42;
    std::size_t channels = 16;
    std::size_t height = 8;
    std::size_t width = 8;
    float signal = 1.0f;        // class-signal strength
    float noise = 0.2f;         // iid gaussian scale
    float cam_fidelity = 0.9f;  // probability a CAM+ pixel truly covers foreground
    bool distractor = false;    // plant a background region with the class signature
    std::size_t shots = 1;
};

// Episode plus the generator's ground-truth distractor regions, which tests
// and diagnostics need but the episode contract does not carry.
struct SyntheticEpisode {
    Episode episode;
    BinaryMask query_distractor;                 // empty when distractor off
    std::vector<BinaryMask> support_distractors;  // per shot
};

// Deterministic in (config.seed, episode_index); episodes are independent
// streams so generation order does not matter.
SyntheticEpisode generate_synthetic_episode(const SyntheticConfig& config,
                                            std::uint64_t episode_index = 0);

// Single-prototype prior: cosine of every query pixel against the whole-mask
// prototype, min-max normalized over the whole image.
PriorMap baseline_prior(const Tensor& query_features,
                        std::span<const float> support_prototype);

struct FusionWeights {
    Tensor weights;           // c x (3c+1)
    std::vector<float> bias;  // length c, may be empty
};

struct PipelineConfig {
    float delta = 0.7f;
    Strategy strategy = Strategy::None;
    std::size_t d_k = 0;          // 0 -> feature channel count
    int decoder_blocks = 5;       // recorded; attention work is driven by cab
    int cab = 4;                  // cross-attention block count
    std::uint64_t weight_seed = 1234;
    std::optional<FusionWeights> fusion;                    // else seeded
    std::optional<std::vector<ProjectionWeights>> blocks;   // else seeded
};

struct PipelineResult {
    PriorMap prior;               // k-shot averaged query prior
    PrototypeSet prototypes;      // k-shot averaged
    Tensor fused_query;           // c x h x w
    Tensor fused_support;         // c x h x w (shot-averaged support branch)
    Tensor decoder_output;        // d_k x h x w
    std::vector<MaskingReport> reports;
};

// threshold -> regions -> prototypes -> prior -> expand -> fuse (both
// branches) -> decoder chain; k-shot averaging before fusion.
PipelineResult run_pipeline(const Episode& episode, const PipelineConfig& config);

// Episode directory layout: FST files plus manifest.json.
void write_episode(const std::filesystem::path& dir, const Episode& episode);
Episode read_episode(const std::filesystem::path& dir);

}  // namespace fsskit
