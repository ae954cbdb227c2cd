#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "adshot/tokenizer.hpp"

namespace adshot {

struct ModelConfig {
    int num_layers = 2;
    int num_heads = 4;
    int head_dim = 8;
    int hidden_dim = 32; // must equal num_heads * head_dim
    int vocab_size = kVocabSize;
    double rope_base = 10000.0;
    std::uint64_t weight_seed = 0;
    int max_position = 4096;

    int ffn_dim() const { return 4 * hidden_dim; }

    // Throws std::invalid_argument on violated invariants
    // (odd head_dim, hidden_dim != num_heads*head_dim, non-positive sizes).
    void validate() const;
};

// Square boolean matrix; rows are attending tokens, columns attended tokens.
// Every token may attend to itself (diagonal true).
class AttentionMask {
public:
    AttentionMask() = default;
    explicit AttentionMask(int n); // diagonal-only mask of size n

    static AttentionMask causal(int n);

    int size() const { return n_; }
    bool at(int row, int col) const { return allowed_[static_cast<std::size_t>(row) * n_ + col] != 0; }
    void set(int row, int col, bool v) { allowed_[static_cast<std::size_t>(row) * n_ + col] = v ? 1 : 0; }
    void allow_range(int row, int col_begin, int col_end); // [col_begin, col_end)

    // Checks squareness bookkeeping and the diagonal invariant.
    void validate() const;

private:
    int n_ = 0;
    std::vector<std::uint8_t> allowed_;
};

// Per-layer key/value tensors, token-major: index (t*H + h)*d + i.
struct LayerKv {
    std::vector<float> keys;
    std::vector<float> values;
    int tokens = 0;
};

// Cached context for incremental forward passes. Keys are stored already
// rotated at the positions they were computed (or re-encoded to); values
// carry no rotation.
struct PastKv {
    std::vector<LayerKv> layers;
    std::vector<int> positions;

    int tokens() const { return static_cast<int>(positions.size()); }
    bool empty() const { return positions.empty(); }
    void append(const PastKv& present);
};

struct ForwardOutput {
    std::vector<float> logits; // [T x vocab] row-major
    PastKv present;            // KV of the newly processed tokens
    // Post-RoPE query projections, [L][H][T][d]; filled only when
    // ForwardOptions::capture_queries is set.
    std::vector<float> queries;
};

struct ForwardOptions {
    bool capture_queries = false;
};

// Minimal deterministic pre-norm decoder: RMSNorm, multi-head attention with
// RoPE on Q/K, two-layer feed-forward (4x expansion, SiLU), tied nothing.
//
// Weight reproducibility contract: every parameter tensor is filled from one
// SplitMix64 stream seeded with weight_seed, each draw mapped to
// [-1/sqrt(hidden_dim), +1/sqrt(hidden_dim)] via (2u-1)*bound with u the
// 53-bit unit draw (see rng.hpp), in this traversal order:
//   1. token embedding        [vocab][hidden], token-major
//   2. per layer l = 0..L-1:
//        attn_norm [hidden]
//        wq, wk, wv, wo       [hidden][hidden] each, row-major (out, in)
//        ffn_norm  [hidden]
//        w1 [ffn][hidden], w2 [hidden][ffn], row-major (out, in)
//   3. final_norm [hidden]
//   4. unembedding [vocab][hidden], token-major
// Matrices act as y = W x with W[out][in].
class Model {
public:
    static Model init(const ModelConfig& config);

    const ModelConfig& config() const { return cfg_; }

    // Hash of the config fields plus every weight bit; identifies the model
    // a cache was built for.
    std::uint64_t fingerprint() const { return fingerprint_; }

    // Runs the decoder over `input` given an optional cached past. The mask
    // must be square over past+input tokens and is taken literally: the
    // causal() factory encodes ordinary causality. Keys and queries are
    // rotated at each input token's logical position.
    ForwardOutput forward(const TokenSequence& input, const AttentionMask& mask,
                          const PastKv* past = nullptr,
                          const ForwardOptions& opts = {}) const;

    // Weight views for tests and checksums.
    std::span<const float> embedding() const { return embed_; }
    std::span<const float> unembedding() const { return unembed_; }

private:
    struct LayerWeights {
        std::vector<float> attn_norm, wq, wk, wv, wo, ffn_norm, w1, w2;
    };

    ModelConfig cfg_;
    std::vector<float> embed_;
    std::vector<LayerWeights> layers_;
    std::vector<float> final_norm_;
    std::vector<float> unembed_;
    std::uint64_t fingerprint_ = 0;
};

// FNV-1a 64-bit over a byte range; the hash behind Model::fingerprint and
// pool integrity checks.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);

} // namespace adshot
