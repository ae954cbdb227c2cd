#pragma once
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "adshot/kvpool.hpp"

namespace adshot {

// Post-RoPE query projections of a standalone query pass, [L][H][Tq][d].
struct QueryVectors {
    int layers = 0;
    int heads = 0;
    int tokens = 0;
    int dim = 0;
    std::vector<float> data;

    std::span<const float> at(int layer, int head, int token) const {
        return std::span<const float>(data).subspan(
            ((static_cast<std::size_t>(layer) * heads + head) * tokens + token) * dim, dim);
    }
};

// Forward pass on the query alone at positions 0..Tq-1, capturing the query
// projections at every layer and head. Throws on empty or over-long queries.
QueryVectors encode_query(const Model& model, std::string_view query_text);

// Token-level attention matrix [Tq x Ti] between the query and one cached
// block at (layer, head): softmax rows over the block's keys, scaled by
// 1/sqrt(d). Exposed for tests; score_example averages it.
std::vector<float> attention_matrix(const QueryVectors& queries, const KvBlock& block,
                                    int layer, int head);

// Mean of all Tq x Ti attention entries, averaged over heads unless a single
// head is requested. Accumulated in double, rounded to float, so equal-length
// blocks tie exactly and ranking stays deterministic.
float score_example(const QueryVectors& queries, const KvBlock& block, int layer,
                    std::optional<int> head = std::nullopt);

// Example ids in descending relevance with their scores (non-increasing).
struct ActiveSet {
    std::vector<std::uint64_t> ranked_ids;
    std::vector<float> scores;
};

// Scores every pool example against the query at the given layer and sorts
// descending; ties break by ascending example id.
ActiveSet rank(const Model& model, const CachePool& pool, std::string_view query_text, int layer);

} // namespace adshot
