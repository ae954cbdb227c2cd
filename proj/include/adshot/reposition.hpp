#pragma once
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "adshot/kvpool.hpp"
#include "adshot/rope.hpp"

namespace adshot {

// A relevance-ordered concatenation of cached blocks with keys rotated to
// their assigned logical positions. Assigned start positions tile
// [instruction_length, total_length) with no gaps; values are byte-identical
// to the cached originals.
struct AssembledContext {
    std::vector<std::pair<std::uint64_t, int>> ordered_blocks; // (example_id, start position)
    int instruction_length = 0;
    int total_length = 0;
    PastKv past; // positions 0..total_length-1
};

// Places the pool's instruction block (if any) at position 0, then the first
// `up_to` ids of `active_ids` in order. Each block's keys get one rotation by
// delta = assigned start (all tokens of a block share it, since cached
// origins start at 0). up_to == 0 assembles instruction only (or nothing).
// Throws on unknown ids, up_to out of range, or total length > max_position.
AssembledContext assemble_context(const CachePool& pool,
                                  std::span<const std::uint64_t> active_ids, int up_to);

} // namespace adshot
