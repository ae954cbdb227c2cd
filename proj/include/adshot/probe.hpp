#pragma once
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adshot/kvpool.hpp"
#include "adshot/retrieval.hpp"
#include "adshot/tokenizer.hpp"

namespace adshot {

struct ProbeConfig {
    double tau = 0.65;           // entropy threshold, in (0, ln 2]
    int step = 4;                // shots added per candidate
    int probes_per_round = 4;
    int max_shots = 32;
    std::string probe_prompt = "Are you confident enough to answer? ";
    int yes_token = kYesToken;
    int no_token = kNoToken;

    void validate() const; // throws std::invalid_argument
};

// Two-class entropy (natural log) of the renormalized {yes, no} distribution:
// softmax over exactly the two logits. Result clamped to [0, ln 2].
double probe_entropy(std::span<const float> logits_row, int yes_token, int no_token);

// One parallel probe round packed as
//   [instruction, shot_1..shot_{n1}, probe_1, shot_{n1+1}..shot_{n2}, probe_2, ...]
// where each probe segment is query ++ probe_prompt. Shots take consecutive
// logical positions as if no probes were present; probe_k's segment continues
// from the end of shot n_k, so every probe sees exactly the positions of a
// standalone run with n_k shots. The mask lets probe_k attend to the
// instruction, shots 1..n_k and itself (causally) and nothing else; shots
// attend causally to the instruction and earlier shots only.
struct ProbePlan {
    std::vector<int> candidate_counts;
    TokenSequence packed_tokens;
    AttentionMask mask;
    std::vector<int> probe_positions; // packed index of each probe's final token

    // segment structure (packed index ranges)
    int instruction_tokens = 0;
    std::vector<int> shot_token_counts;                 // per shot, in packed order
    std::vector<std::pair<int, int>> probe_spans;       // [begin, end) per probe
};

ProbePlan build_probe_plan(std::span<const std::uint64_t> sorted_ids, std::span<const int> counts,
                           std::string_view query_text, std::string_view probe_prompt,
                           const CachePool& pool);

// Runs one probe round against the cached pool: shots enter as re-encoded
// cached KV, only the probe segments are freshly prefilled under the tree
// mask. Returns each probe's final-token logits row.
std::vector<std::vector<float>> probe_round_logits(const Model& model, const CachePool& pool,
                                                   std::span<const std::uint64_t> sorted_ids,
                                                   std::span<const int> counts,
                                                   std::string_view query_text,
                                                   std::string_view probe_prompt);

struct ProbeRoundRecord {
    std::vector<int> counts;
    std::vector<double> entropies;
};

struct EntropyTrace {
    std::vector<ProbeRoundRecord> rounds;
    int chosen_count = 0;
    bool fallback = false; // no probe passed; chosen_count is the cap
};

// Candidate counts step, 2*step, ... chunked into rounds of probes_per_round,
// clipped to cap (the cap itself is appended when the sequence would skip it).
std::vector<std::vector<int>> schedule_rounds(int step, int probes_per_round, int cap);

// The selection loop with the entropy source abstracted: stops at the first
// round containing any H <= tau and picks the smallest such count; otherwise
// falls back to the cap. Lets tests drive the selector with recorded
// entropies.
using RoundEvaluator = std::function<std::vector<double>(const std::vector<int>& counts)>;
EntropyTrace run_adaptive_selection(int step, int probes_per_round, int cap, double tau,
                                    const RoundEvaluator& evaluate);

// Full probe-based selection over the ranked active set, reusing cached KV.
EntropyTrace adaptive_select(const Model& model, const CachePool& pool, const ActiveSet& active,
                             std::string_view query_text, const ProbeConfig& config);

} // namespace adshot
