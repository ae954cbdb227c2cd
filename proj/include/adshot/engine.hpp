#pragma once
#include <optional>
#include <string>
#include <vector>

#include "adshot/kvpool.hpp"
#include "adshot/probe.hpp"
#include "adshot/retrieval.hpp"

namespace adshot {

struct PhaseTimings {
    double rank_ms = 0.0;
    double probe_ms = 0.0;
    double assemble_ms = 0.0;
    double decode_ms = 0.0; // query prefill + token generation
    double total_ms = 0.0;
};

// Tokens the engine actually pushed through the model, by phase. In cached
// mode no shot token is ever forwarded after pool build.
struct TokenAccounting {
    long long shot_prefill_tokens = 0;
    long long probe_tokens = 0;
    long long query_tokens = 0;
    long long decoded_tokens = 0;
};

struct InferenceReport {
    std::string query_text;
    int chosen_shots = 0;
    EntropyTrace entropy_trace;
    ActiveSet active;
    std::string answer;
    PhaseTimings timing;
    std::optional<double> baseline_total_ms; // full-prefill run over the same shot set
    TokenAccounting tokens;
};

struct EngineOptions {
    int max_new_tokens = 32;
    int score_layer = -1;              // -1 = last layer
    bool with_baseline = false;        // also time a full contiguous prefill
    std::optional<int> force_shots;    // bypass probing; 0 = zero-shot
};

// rank -> adaptive_select -> assemble -> greedy decode. Probe-segment KV is
// discarded before decoding; the answer context is instruction + chosen shots
// + query only.
InferenceReport answer(const Model& model, const CachePool& pool, std::string_view query_text,
                       const ProbeConfig& probe_config, const EngineOptions& options = {});

struct BenchRow {
    std::string query;
    int chosen_shots = 0;
    double cached_ms = 0.0;
    double full_ms = 0.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    double cached_mean_ms = 0.0;
    double full_mean_ms = 0.0;
    double speedup = 0.0; // full_mean / cached_mean
};

// Times the cached pipeline against recomputing the identical reordered
// context from tokens, per query and on average.
BenchReport bench(const Model& model, const CachePool& pool, const std::vector<std::string>& queries,
                  const ProbeConfig& probe_config, const EngineOptions& options = {});

// Greedy decode over a full contiguous prefill of (instruction + ordered
// shots + query) recomputed from tokens — the no-reuse reference path.
std::string full_prefill_answer(const Model& model, const CachePool& pool,
                                std::span<const std::uint64_t> ordered_ids,
                                std::string_view query_text, int max_new_tokens);

} // namespace adshot
