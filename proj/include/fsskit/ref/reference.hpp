#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fsskit/tensor.hpp"

// Serial reference implementations: naive loops, double precision, no OpenMP.
// These are the independent oracles the optimized kernels are tested against
// and the baseline side of the benchmark comparisons. They share only the
// container types with the main library, never its kernel code.

namespace fsskit::ref {

std::vector<double> elementwise_mul(const Tensor& a, const Tensor& b);
std::vector<double> elementwise_mul_mask(const Tensor& a, const BinaryMask& m);

std::vector<double> conv1x1(const Tensor& x, const Tensor& weights,
                            std::span<const float> bias);

// -inf entries map to 0; rows assumed to have at least one finite entry
std::vector<double> row_softmax(const Tensor& a);

std::vector<double> resize_bilinear(const Tensor& x, std::size_t out_h,
                                    std::size_t out_w);

std::vector<double> masked_minmax_normalize(const Tensor& values,
                                            const BinaryMask& region);

std::optional<std::vector<double>> masked_average_pool(const Tensor& features,
                                                       const BinaryMask& region);

// Full PMGM forward in one naive pass: threshold -> regions -> prototypes ->
// per-pixel cosine -> per-region min-max -> disjoint merge.
std::vector<double> pmgm_prior(const Tensor& support_features,
                               const BinaryMask& support_mask,
                               const Tensor& support_cam,
                               const Tensor& query_features, const Tensor& query_cam,
                               double delta);

std::vector<double> baseline_prior(const Tensor& query_features,
                                   std::span<const float> prototype);

std::vector<double> attention_scores(const Tensor& query_feat,
                                     const Tensor& support_feat, const Tensor& wq,
                                     const Tensor& wk);

// Post-hoc structural verifiers for the masking algorithms. They recompute
// the argmaxes naively from the unmasked scores and check every property the
// algorithms guarantee. Returns the list of violated properties (empty = ok).
std::vector<std::string> verify_dicm(const Tensor& unmasked, const Tensor& masked,
                                     const BinaryMask& support_mask,
                                     const BinaryMask& query_mask);
std::vector<std::string> verify_cyctr(const Tensor& unmasked, const Tensor& masked,
                                      const BinaryMask& support_mask, bool skipped);

// FB-IoU by direct recount over concatenated pixels.
double fb_iou_recount(
    std::span<const std::pair<BinaryMask, BinaryMask>> episodes);

}  // namespace fsskit::ref
