#include "adshot/probe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "adshot/reposition.hpp"

namespace adshot {

namespace {

const double kLn2 = std::log(2.0);

void validate_counts(std::span<const int> counts, std::size_t available) {
    if (counts.empty()) {
        throw std::invalid_argument("probe: empty candidate counts");
    }
    int prev = 0;
    for (int c : counts) {
        if (c <= prev) {
            throw std::invalid_argument("probe: candidate counts must be strictly increasing");
        }
        prev = c;
    }
    if (static_cast<std::size_t>(counts.back()) > available) {
        throw std::invalid_argument("probe: candidate count " + std::to_string(counts.back()) +
                                    " exceeds available shots " + std::to_string(available));
    }
}

} // namespace

void ProbeConfig::validate() const {
    if (!(tau > 0.0) || tau > kLn2 + 1e-12) {
        throw std::invalid_argument("ProbeConfig: tau must lie in (0, ln 2]");
    }
    if (step <= 0 || probes_per_round <= 0 || max_shots <= 0) {
        throw std::invalid_argument("ProbeConfig: step, probes_per_round, max_shots must be positive");
    }
    if (step * probes_per_round > max_shots) {
        throw std::invalid_argument("ProbeConfig: step*probes_per_round exceeds max_shots");
    }
    if (yes_token == no_token) {
        throw std::invalid_argument("ProbeConfig: yes and no tokens must differ");
    }
    if (yes_token < 0 || yes_token >= kVocabSize || no_token < 0 || no_token >= kVocabSize) {
        throw std::invalid_argument("ProbeConfig: yes/no token out of vocabulary");
    }
}

double probe_entropy(std::span<const float> logits_row, int yes_token, int no_token) {
    if (yes_token == no_token) {
        throw std::invalid_argument("probe_entropy: yes and no tokens must differ");
    }
    if (yes_token < 0 || no_token < 0 ||
        yes_token >= static_cast<int>(logits_row.size()) ||
        no_token >= static_cast<int>(logits_row.size())) {
        throw std::invalid_argument("probe_entropy: token id outside logits row");
    }
    const double gap = static_cast<double>(logits_row[yes_token]) -
                       static_cast<double>(logits_row[no_token]);
    // Renormalized two-class softmax; p -> {0,1} contributes zero entropy.
    if (std::abs(gap) > 40.0) return 0.0;
    const double p = 1.0 / (1.0 + std::exp(-gap));
    if (p <= 0.0 || p >= 1.0) return 0.0;
    const double h = -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
    return std::clamp(h, 0.0, kLn2);
}

ProbePlan build_probe_plan(std::span<const std::uint64_t> sorted_ids, std::span<const int> counts,
                           std::string_view query_text, std::string_view probe_prompt,
                           const CachePool& pool) {
    validate_counts(counts, sorted_ids.size());
    if (query_text.empty()) {
        throw std::invalid_argument("build_probe_plan: empty query");
    }

    ProbePlan plan;
    plan.candidate_counts.assign(counts.begin(), counts.end());

    const int n_max = counts.back();
    TokenSequence instr_toks;
    if (pool.instruction.has_value()) {
        instr_toks = tokenize(pool.instruction->text);
    }
    std::vector<TokenSequence> shot_toks(n_max);
    for (int i = 0; i < n_max; ++i) {
        auto it = pool.texts.find(sorted_ids[i]);
        if (it == pool.texts.end()) {
            throw std::invalid_argument("build_probe_plan: unknown example id " +
                                        std::to_string(sorted_ids[i]));
        }
        shot_toks[i] = tokenize(it->second);
    }
    TokenSequence probe_seg = tokenize(query_text);
    append_tokens(probe_seg, tokenize(std::string(probe_prompt)));

    plan.instruction_tokens = instr_toks.size();
    for (const auto& s : shot_toks) plan.shot_token_counts.push_back(s.size());

    // Shot logical positions ignore probes: shot i starts at
    // instruction + sum of earlier shot lengths.
    std::vector<int> shot_logical_start(n_max + 1);
    shot_logical_start[0] = plan.instruction_tokens;
    for (int i = 0; i < n_max; ++i) {
        shot_logical_start[i + 1] = shot_logical_start[i] + shot_toks[i].size();
    }
    const int longest = shot_logical_start[n_max] + probe_seg.size();
    if (longest > pool.config.max_position) {
        throw std::invalid_argument("build_probe_plan: longest candidate context of " +
                                    std::to_string(longest) + " tokens exceeds max_position");
    }

    // Packed layout, tracking each component's packed index range.
    TokenSequence& packed = plan.packed_tokens;
    auto emit = [&packed](const TokenSequence& seg, int logical_start) {
        for (int i = 0; i < seg.size(); ++i) {
            packed.tokens.push_back(seg.tokens[i]);
            packed.positions.push_back(logical_start + i);
        }
    };

    emit(instr_toks, 0);
    std::vector<std::pair<int, int>> shot_spans(n_max);
    int next_shot = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        for (; next_shot < counts[k]; ++next_shot) {
            const int begin = packed.size();
            emit(shot_toks[next_shot], shot_logical_start[next_shot]);
            shot_spans[next_shot] = {begin, packed.size()};
        }
        const int begin = packed.size();
        emit(probe_seg, shot_logical_start[counts[k]]);
        plan.probe_spans.emplace_back(begin, packed.size());
        plan.probe_positions.push_back(packed.size() - 1);
    }

    const int N = packed.size();
    plan.mask = AttentionMask(N);
    // Instruction: causal within itself.
    for (int i = 0; i < plan.instruction_tokens; ++i) {
        plan.mask.allow_range(i, 0, i + 1);
    }
    // Shots: instruction, earlier shots, own prefix. Shot spans are packed
    // consecutively except where probe segments interrupt, so allow every
    // non-probe index up to self.
    for (int s = 0; s < n_max; ++s) {
        const auto [begin, end] = shot_spans[s];
        for (int i = begin; i < end; ++i) {
            plan.mask.allow_range(i, 0, plan.instruction_tokens);
            for (int e = 0; e < s; ++e) {
                plan.mask.allow_range(i, shot_spans[e].first, shot_spans[e].second);
            }
            plan.mask.allow_range(i, begin, i + 1);
        }
    }
    // Probe k: instruction, shots 1..n_k, own segment causally.
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const auto [begin, end] = plan.probe_spans[k];
        for (int i = begin; i < end; ++i) {
            plan.mask.allow_range(i, 0, plan.instruction_tokens);
            for (int e = 0; e < counts[k]; ++e) {
                plan.mask.allow_range(i, shot_spans[e].first, shot_spans[e].second);
            }
            plan.mask.allow_range(i, begin, i + 1);
        }
    }
    return plan;
}

std::vector<std::vector<float>> probe_round_logits(const Model& model, const CachePool& pool,
                                                   std::span<const std::uint64_t> sorted_ids,
                                                   std::span<const int> counts,
                                                   std::string_view query_text,
                                                   std::string_view probe_prompt) {
    validate_counts(counts, sorted_ids.size());
    const int n_max = counts.back();
    const AssembledContext ctx = assemble_context(pool, sorted_ids, n_max);
    const int P = ctx.past.tokens();

    // Shot boundary prefix lengths: end of shot n = instruction + blocks 1..n.
    std::vector<int> prefix_len(n_max + 1);
    prefix_len[0] = ctx.instruction_length;
    for (int i = 0; i < n_max; ++i) {
        prefix_len[i + 1] = prefix_len[i] +
                            pool.blocks.at(sorted_ids[i]).token_count;
    }

    TokenSequence probe_seg = tokenize(query_text);
    append_tokens(probe_seg, tokenize(std::string(probe_prompt)));
    const int seg_len = probe_seg.size();

    // Input = concatenated probe segments; probe k's positions continue from
    // the end of shot n_k.
    TokenSequence input;
    std::vector<int> final_index(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        for (int i = 0; i < seg_len; ++i) {
            input.tokens.push_back(probe_seg.tokens[i]);
            input.positions.push_back(prefix_len[counts[k]] + i);
        }
        final_index[k] = input.size() - 1;
    }
    const int max_pos_used = prefix_len[n_max] + seg_len;
    if (max_pos_used > pool.config.max_position) {
        throw std::invalid_argument("probe_round_logits: probe context exceeds max_position");
    }

    const int total = P + input.size();
    AttentionMask mask(total);
    for (int j = 0; j < P; ++j) {
        mask.allow_range(j, 0, j + 1); // past rows are not attended from; keep them causal
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const int seg_begin = P + static_cast<int>(k) * seg_len;
        for (int i = 0; i < seg_len; ++i) {
            const int row = seg_begin + i;
            mask.allow_range(row, 0, prefix_len[counts[k]]); // instruction + shots 1..n_k
            mask.allow_range(row, seg_begin, row + 1);       // own segment, causal
        }
    }

    const ForwardOutput out = model.forward(input, mask, &ctx.past);
    const int V = model.config().vocab_size;
    std::vector<std::vector<float>> rows;
    rows.reserve(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const auto* base = out.logits.data() + static_cast<std::size_t>(final_index[k]) * V;
        rows.emplace_back(base, base + V);
    }
    return rows;
}

std::vector<std::vector<int>> schedule_rounds(int step, int probes_per_round, int cap) {
    if (step <= 0 || probes_per_round <= 0 || cap <= 0) {
        throw std::invalid_argument("schedule_rounds: arguments must be positive");
    }
    std::vector<int> counts;
    for (int c = step; c <= cap; c += step) counts.push_back(c);
    if (counts.empty() || counts.back() != cap) counts.push_back(cap);

    std::vector<std::vector<int>> rounds;
    for (std::size_t i = 0; i < counts.size(); i += probes_per_round) {
        rounds.emplace_back(counts.begin() + i,
                            counts.begin() + std::min(counts.size(), i + probes_per_round));
    }
    return rounds;
}

EntropyTrace run_adaptive_selection(int step, int probes_per_round, int cap, double tau,
                                    const RoundEvaluator& evaluate) {
    EntropyTrace trace;
    for (const auto& counts : schedule_rounds(step, probes_per_round, cap)) {
        ProbeRoundRecord record;
        record.counts = counts;
        record.entropies = evaluate(counts);
        if (record.entropies.size() != counts.size()) {
            throw std::logic_error("run_adaptive_selection: evaluator returned wrong arity");
        }
        trace.rounds.push_back(record);
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (record.entropies[i] <= tau) {
                trace.chosen_count = counts[i];
                return trace;
            }
        }
    }
    trace.chosen_count = cap;
    trace.fallback = true;
    return trace;
}

EntropyTrace adaptive_select(const Model& model, const CachePool& pool, const ActiveSet& active,
                             std::string_view query_text, const ProbeConfig& config) {
    config.validate();
    if (active.ranked_ids.empty()) {
        throw std::invalid_argument("adaptive_select: empty active set");
    }
    const int cap = std::min<int>(config.max_shots, static_cast<int>(active.ranked_ids.size()));
    const RoundEvaluator evaluate = [&](const std::vector<int>& counts) {
        const auto rows = probe_round_logits(model, pool, active.ranked_ids, counts, query_text,
                                             config.probe_prompt);
        std::vector<double> entropies;
        entropies.reserve(rows.size());
        for (const auto& row : rows) {
            entropies.push_back(probe_entropy(row, config.yes_token, config.no_token));
        }
        return entropies;
    };
    return run_adaptive_selection(config.step, config.probes_per_round, cap, config.tau, evaluate);
}

} // namespace adshot
