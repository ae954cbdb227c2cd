#pragma once
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adshot/model.hpp"

namespace adshot {

// Per-example KV tensors, prefilled independently at origin positions
// 0..T-1. Keys carry the origin RoPE rotation; values carry none.
struct KvBlock {
    std::uint64_t example_id = 0;
    int token_count = 0;
    std::vector<LayerKv> layers; // token-major per layer, same layout as PastKv

    std::span<const float> key_at(int layer, int head, int token, int head_dim, int num_heads) const {
        return std::span<const float>(layers[layer].keys)
            .subspan((static_cast<std::size_t>(token) * num_heads + head) * head_dim, head_dim);
    }
    std::span<const float> value_at(int layer, int head, int token, int head_dim, int num_heads) const {
        return std::span<const float>(layers[layer].values)
            .subspan((static_cast<std::size_t>(token) * num_heads + head) * head_dim, head_dim);
    }
};

// The global example repository: one block per example plus the original
// texts, all tied to the model that prefilled them.
struct CachePool {
    ModelConfig config;
    std::uint64_t fingerprint = 0;
    std::map<std::uint64_t, KvBlock> blocks;
    std::map<std::uint64_t, std::string> texts;

    struct Instruction {
        KvBlock block;
        std::string text;
    };
    std::optional<Instruction> instruction;

    std::size_t size() const { return blocks.size(); }
    void add_example(std::uint64_t id, KvBlock block, std::string text);
};

// Runs the model over `text` alone (causal mask, positions from 0) and
// captures its KV. Throws on empty text or text longer than max_position.
KvBlock prefill_example(const Model& model, std::string_view text);

// One-time offline prefill of every example; ids are assigned sequentially
// from 0. Prefill errors are rethrown with the offending index. Examples are
// prefilled in parallel where hardware allows; blocks are independent, so the
// result does not depend on scheduling.
CachePool build_pool(const Model& model, const std::vector<std::string>& texts,
                     const std::optional<std::string>& instruction = std::nullopt);

// ADSHPOOL binary format, version 1, little-endian throughout:
//   magic "ADSHPOOL" | u32 version | u64 fingerprint | u64 block_count
//   per block (ascending id): u64 id | u64 token_count |
//     f32 keys then f32 values in (layer, head, token, dim) order |
//     u64 text_len | text bytes
//   u8 has_instruction | [u64 token_count | keys | values | u64 len | text]
// Round trips are bit-exact.
void save_pool(const CachePool& pool, const std::string& path);

// Parsing needs the tensor shapes, so the caller supplies the model config;
// the stored fingerprint must equal `expected_fingerprint`.
// Throws IoError, FormatError (bad magic/version/truncation, with offset),
// or FingerprintMismatch.
CachePool load_pool(const std::string& path, const ModelConfig& config,
                    std::uint64_t expected_fingerprint);

} // namespace adshot
