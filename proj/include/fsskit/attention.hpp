#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fsskit/tensor.hpp"

// Query-over-support cross-attention with two masking strategies:
//  - DICM: per support column, if the column's best-matching query row
//    disagrees with it on the masks, that single cell becomes -inf.
//  - CyCTR: per support column, follow the support->query->support cycle;
//    a mask-inconsistent landing suppresses the whole column.

namespace fsskit {

enum class Strategy { None, Dicm, Cyctr };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct ProjectionWeights {
    Tensor wq;  // d_k x c_query
    Tensor wk;  // d_k x c_support
    Tensor wv;  // d_k x c_support
    std::optional<std::vector<float>> bq, bk, bv;
    int block_index = 0;
};

// Flattened (h_q*w_q) x (h_s*w_s) score map; entries are finite or exactly
// -inf where masked, and the 1/sqrt(d_k) scale is already applied.
struct AttentionMap {
    Tensor scores;
    bool scaled = true;
};

struct MaskingReport {
    std::size_t total_cells = 0;
    std::size_t masked_cells = 0;
    std::size_t masked_columns = 0;
    double ratio = 0.0;
    Strategy strategy = Strategy::None;
    int block_index = 0;
    // CyCTR only: every column was cycle-inconsistent, so masking was skipped
    // to keep softmax well defined.
    bool skipped = false;
};

nlohmann::json to_json(const MaskingReport& r);

// Uniform(-1/sqrt(c_in), 1/sqrt(c_in)) projections, deterministic in
// (seed, block_index); biases unset.
ProjectionWeights make_projection_weights(std::uint64_t seed, int block_index,
                                          std::size_t c_query, std::size_t c_support,
                                          std::size_t d_k);

AttentionMap cross_attention_scores(const Tensor& query_feat,
                                    const Tensor& support_feat,
                                    const ProjectionWeights& weights);

std::pair<AttentionMap, MaskingReport> dicm_mask(const AttentionMap& attn,
                                                 const BinaryMask& support_mask,
                                                 const BinaryMask& query_mask);

std::pair<AttentionMap, MaskingReport> cyctr_mask(const AttentionMap& attn,
                                                  const BinaryMask& support_mask);

// scores -> strategy mask -> row softmax -> weighted sum of values,
// reshaped to d_k x h_q x w_q.
std::pair<Tensor, MaskingReport> attention_forward(const Tensor& query_feat,
                                                   const Tensor& support_feat,
                                                   const ProjectionWeights& weights,
                                                   Strategy strategy,
                                                   const BinaryMask* support_mask,
                                                   const BinaryMask* query_mask);

// Chain of attention blocks; each block's output feeds the next block's
// query side. Returns the final features and one report per block.
std::pair<Tensor, std::vector<MaskingReport>> decoder_chain(
    const Tensor& query_feat, const Tensor& support_feat,
    std::span<const ProjectionWeights> blocks, Strategy strategy,
    const BinaryMask* support_mask, const BinaryMask* query_mask);

}  // namespace fsskit
