#include "adshot/reposition.hpp"

#include <stdexcept>
#include <string>

namespace adshot {

namespace {

// Appends a block's KV at start position `delta`, rotating keys in place.
void append_block(const KvBlock& block, int delta, const ModelConfig& cfg, PastKv& past) {
    const int H = cfg.num_heads;
    const int d = cfg.head_dim;
    const RotationFactors f = (delta != 0) ? rotation_factors(delta, d, cfg.rope_base)
                                           : RotationFactors{};
    for (int l = 0; l < cfg.num_layers; ++l) {
        const LayerKv& src = block.layers[l];
        LayerKv& dst = past.layers[l];
        const std::size_t old_size = dst.keys.size();
        dst.keys.insert(dst.keys.end(), src.keys.begin(), src.keys.end());
        dst.values.insert(dst.values.end(), src.values.begin(), src.values.end());
        dst.tokens += src.tokens;
        if (delta != 0) {
            for (int t = 0; t < src.tokens; ++t) {
                for (int h = 0; h < H; ++h) {
                    apply_rotation(std::span<float>(dst.keys)
                                       .subspan(old_size + (static_cast<std::size_t>(t) * H + h) * d, d),
                                   f);
                }
            }
        }
    }
    for (int t = 0; t < block.token_count; ++t) {
        past.positions.push_back(delta + t);
    }
}

} // namespace

AssembledContext assemble_context(const CachePool& pool,
                                  std::span<const std::uint64_t> active_ids, int up_to) {
    if (up_to < 0 || up_to > static_cast<int>(active_ids.size())) {
        throw std::invalid_argument("assemble_context: up_to out of range");
    }
    AssembledContext ctx;
    ctx.past.layers.resize(pool.config.num_layers);

    int offset = 0;
    if (pool.instruction.has_value()) {
        append_block(pool.instruction->block, 0, pool.config, ctx.past);
        offset = pool.instruction->block.token_count;
        ctx.instruction_length = offset;
    }
    for (int i = 0; i < up_to; ++i) {
        const std::uint64_t id = active_ids[i];
        auto it = pool.blocks.find(id);
        if (it == pool.blocks.end()) {
            throw std::invalid_argument("assemble_context: unknown example id " + std::to_string(id));
        }
        ctx.ordered_blocks.emplace_back(id, offset);
        append_block(it->second, offset, pool.config, ctx.past);
        offset += it->second.token_count;
    }
    ctx.total_length = offset;
    if (ctx.total_length > pool.config.max_position) {
        throw std::invalid_argument("assemble_context: assembled length " +
                                    std::to_string(ctx.total_length) + " exceeds max_position " +
                                    std::to_string(pool.config.max_position));
    }
    return ctx;
}

} // namespace adshot
