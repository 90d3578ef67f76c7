#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fsskit/tensor.hpp"

// Prior Map Generation Module: partition support and query grids into CAM+
// and CAM- regions, pool dual prototypes from the support, and match query
// pixels region-by-region into a merged prior map.

namespace fsskit {

// CAM heatmap aligned with the feature grid; values clamped to [0,1] on load.
class CamHeatmap {
public:
    CamHeatmap() = default;
    CamHeatmap(Tensor grid, int class_id);

    const Tensor& grid() const { return grid_; }
    int class_id() const { return class_id_; }
    std::size_t height() const { return grid_.dim(1); }
    std::size_t width() const { return grid_.dim(2); }

private:
    Tensor grid_;
    int class_id_ = 0;
};

// CAM partition and its intersection with the support ground truth.
struct RegionMasks {
    BinaryMask cam_pos;  // pixels at/above the threshold
    BinaryMask cam_neg;  // exact complement
    BinaryMask a1;       // mask AND cam_pos
    BinaryMask a2;       // mask AND cam_neg
};

// The three support prototypes. A region with no active pixels leaves its
// prototype undefined; the whole-mask prototype is defined whenever the
// support mask has foreground.
struct PrototypeSet {
    std::optional<std::vector<float>> p1;  // CAM+ & mask
    std::optional<std::vector<float>> p2;  // CAM- & mask
    std::optional<std::vector<float>> p;   // mask only
};

// Merged per-pixel foreground prior, values in [0,1].
struct PriorMap {
    Tensor grid;  // 1 x h x w
};

std::pair<BinaryMask, BinaryMask> threshold_cam(const CamHeatmap& heatmap, float delta);

RegionMasks decompose_regions(const BinaryMask& support_mask,
                              const BinaryMask& cam_pos,
                              const BinaryMask& cam_neg);

// Per-channel mean over the active pixels; empty region -> nullopt.
std::optional<std::vector<float>> masked_average_pool(const Tensor& features,
                                                      const BinaryMask& region);

PrototypeSet build_prototypes(const Tensor& support_features,
                              const RegionMasks& regions,
                              const BinaryMask& support_mask);

// Cosine similarity of each query pixel against its region's prototype,
// min-max normalized independently per region, merged by disjoint-support
// sum. Undefined region prototypes fall back to the whole-mask prototype;
// zero-norm vectors yield similarity 0.
PriorMap region_cosine_prior(const Tensor& query_features,
                             const PrototypeSet& prototypes,
                             const BinaryMask& query_cam_pos,
                             const BinaryMask& query_cam_neg);

// x_p: whole-mask prototype broadcast to c x h x w.
// x_c: p1 filled into region_pos, p2 into region_neg, zero elsewhere.
std::pair<Tensor, Tensor> expand_prototypes(const PrototypeSet& prototypes,
                                            const BinaryMask& region_pos,
                                            const BinaryMask& region_neg,
                                            std::size_t channels);

// concat(branch, x_p, x_c, prior) -> 1x1 conv back to the branch's channel count.
Tensor fuse_features(const Tensor& branch_features, const Tensor& x_p,
                     const Tensor& x_c, const PriorMap& prior,
                     const Tensor& weights, std::span<const float> bias);

// Arithmetic mean across shots. Prototypes undefined in some shots average
// over the shots where they are defined.
std::pair<PriorMap, PrototypeSet> kshot_average(std::span<const PriorMap> priors,
                                                std::span<const PrototypeSet> prototypes);

}  // namespace fsskit
