#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fsskit/pmgm.hpp"
#include "fsskit/tensor.hpp"

namespace fsskit {

struct ConfusionCounts {
    std::uint64_t intersection = 0;
    std::uint64_t union_count = 0;
    std::uint64_t pred_area = 0;
    std::uint64_t target_area = 0;
};

// Foreground confusion counts of one prediction/target pair.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& target);
// Same pair, counting the background class.
ConfusionCounts confusion_background(const BinaryMask& pred, const BinaryMask& target);

// |pred AND target| / |pred OR target|; 1.0 when both masks are empty.
double iou(const BinaryMask& pred, const BinaryMask& target);

// Foreground and background each pooled as a class across the batch (Eq. of
// summed intersections over summed unions).
double fb_iou(std::span<const std::pair<BinaryMask, BinaryMask>> episodes);

// Mean binary cross-entropy of the prior against the mask, prior clamped to
// [epsilon, 1-epsilon]. Natural log, computed in double.
double prior_cross_entropy(const PriorMap& prior, const BinaryMask& target,
                           double epsilon = 1e-6);

struct EpisodeMetrics {
    int class_id = 0;
    ConfusionCounts fg;
    ConfusionCounts bg;
    double prior_ce = 0.0;
};

struct MetricSummary {
    double miou = 0.0;
    double fb_iou = 0.0;
    double prior_ce_mean = 0.0;
    double prior_ce_std = 0.0;  // population std
    std::size_t episode_count = 0;
};

// Per-class pooled IoU averaged over classes; FB-IoU over pooled fg+bg
// counts; mean and population std of the CE values.
MetricSummary aggregate(std::span<const EpisodeMetrics> per_episode);

nlohmann::json to_json(const MetricSummary& s);
// fold,miou,fb_iou,ce_mean,ce_std,n
std::string to_csv_row(const MetricSummary& s, const std::string& fold);

}  // namespace fsskit
