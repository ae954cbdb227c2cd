#include "adshot/engine.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "adshot/reposition.hpp"

namespace adshot {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

int argmax_token(std::span<const float> logits) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

struct DecodeResult {
    std::vector<int> generated;
    long long forwarded_tokens = 0;
};

// Greedy decode of the query against an existing context, then token by
// token until EOS or the cap. Past grows in place.
DecodeResult decode_greedy(const Model& model, PastKv past, const TokenSequence& query,
                           int max_new_tokens) {
    DecodeResult res;
    const int V = model.config().vocab_size;

    const int total0 = past.tokens() + query.size();
    ForwardOutput out = model.forward(query, AttentionMask::causal(total0),
                                      past.empty() ? nullptr : &past);
    res.forwarded_tokens += query.size();
    past.append(out.present);

    int next = argmax_token(
        std::span<const float>(out.logits).subspan(static_cast<std::size_t>(query.size() - 1) * V, V));
    int next_pos = query.positions.back() + 1;

    for (int i = 0; i < max_new_tokens; ++i) {
        if (next == kEosToken) break;
        res.generated.push_back(next);
        if (i + 1 == max_new_tokens) break;
        if (next_pos >= model.config().max_position) break;

        TokenSequence step;
        step.tokens = {next};
        step.positions = {next_pos};
        out = model.forward(step, AttentionMask::causal(past.tokens() + 1), &past);
        res.forwarded_tokens += 1;
        past.append(out.present);
        next = argmax_token(std::span<const float>(out.logits).subspan(0, V));
        ++next_pos;
    }
    return res;
}

// Contiguous full prefill of the same reordered context text, for the
// baseline timing and the single-layer equivalence oracle.
double full_prefill_run(const Model& model, const CachePool& pool,
                        std::span<const std::uint64_t> ordered_ids, std::string_view query_text,
                        int max_new_tokens, std::vector<int>* generated_out) {
    const auto start = Clock::now();

    std::string context_text;
    if (pool.instruction.has_value()) context_text += pool.instruction->text;
    for (std::uint64_t id : ordered_ids) context_text += pool.texts.at(id);

    PastKv past;
    int query_start = 0;
    if (!context_text.empty()) {
        const TokenSequence ctx_toks = tokenize(context_text);
        ForwardOutput prefill = model.forward(ctx_toks, AttentionMask::causal(ctx_toks.size()));
        past = std::move(prefill.present);
        query_start = ctx_toks.size();
    }
    const TokenSequence query = tokenize(std::string(query_text), query_start);
    const DecodeResult res = decode_greedy(model, std::move(past), query, max_new_tokens);
    if (generated_out != nullptr) *generated_out = res.generated;
    return ms_since(start);
}

} // namespace

InferenceReport answer(const Model& model, const CachePool& pool, std::string_view query_text,
                       const ProbeConfig& probe_config, const EngineOptions& options) {
    if (pool.fingerprint != model.fingerprint()) {
        throw std::invalid_argument("answer: pool fingerprint does not match model");
    }
    const int layer = options.score_layer < 0 ? model.config().num_layers - 1 : options.score_layer;
    const auto t_total = Clock::now();

    InferenceReport report;
    report.query_text = std::string(query_text);

    const bool forced = options.force_shots.has_value();
    if (!forced || *options.force_shots > 0) {
        const auto t = Clock::now();
        report.active = rank(model, pool, query_text, layer);
        report.timing.rank_ms = ms_since(t);
    }

    if (forced) {
        report.chosen_shots = std::min<int>(*options.force_shots,
                                            static_cast<int>(report.active.ranked_ids.size()));
        report.entropy_trace.chosen_count = report.chosen_shots;
    } else {
        const auto t = Clock::now();
        report.entropy_trace =
            adaptive_select(model, pool, report.active, query_text, probe_config);
        report.timing.probe_ms = ms_since(t);
        report.chosen_shots = report.entropy_trace.chosen_count;
        const int seg_tokens = static_cast<int>(query_text.size()) +
                               static_cast<int>(probe_config.probe_prompt.size());
        for (const auto& round : report.entropy_trace.rounds) {
            report.tokens.probe_tokens += static_cast<long long>(round.counts.size()) * seg_tokens;
        }
    }

    const auto t_asm = Clock::now();
    const AssembledContext ctx =
        assemble_context(pool, report.active.ranked_ids, report.chosen_shots);
    report.timing.assemble_ms = ms_since(t_asm);

    const auto t_dec = Clock::now();
    const TokenSequence query = tokenize(std::string(query_text), ctx.total_length);
    if (ctx.total_length + query.size() > model.config().max_position) {
        throw std::invalid_argument("answer: context plus query exceeds max_position");
    }
    const DecodeResult res = decode_greedy(model, ctx.past, query, options.max_new_tokens);
    report.timing.decode_ms = ms_since(t_dec);
    report.tokens.query_tokens = query.size();
    report.tokens.decoded_tokens = static_cast<long long>(res.generated.size());
    report.answer = detokenize(res.generated);
    report.timing.total_ms = ms_since(t_total);

    if (options.with_baseline) {
        std::vector<std::uint64_t> ordered(report.active.ranked_ids.begin(),
                                           report.active.ranked_ids.begin() + report.chosen_shots);
        report.baseline_total_ms =
            full_prefill_run(model, pool, ordered, query_text, options.max_new_tokens, nullptr);
    }
    return report;
}

BenchReport bench(const Model& model, const CachePool& pool, const std::vector<std::string>& queries,
                  const ProbeConfig& probe_config, const EngineOptions& options) {
    if (queries.empty()) {
        throw std::invalid_argument("bench: no queries");
    }
    BenchReport report;
    double cached_sum = 0.0;
    double full_sum = 0.0;
    for (const auto& q : queries) {
        EngineOptions opts = options;
        opts.with_baseline = true;
        const InferenceReport r = answer(model, pool, q, probe_config, opts);
        BenchRow row;
        row.query = q;
        row.chosen_shots = r.chosen_shots;
        row.cached_ms = r.timing.total_ms;
        row.full_ms = *r.baseline_total_ms;
        cached_sum += row.cached_ms;
        full_sum += row.full_ms;
        report.rows.push_back(std::move(row));
    }
    report.cached_mean_ms = cached_sum / static_cast<double>(queries.size());
    report.full_mean_ms = full_sum / static_cast<double>(queries.size());
    report.speedup = report.full_mean_ms / report.cached_mean_ms;
    return report;
}

std::string full_prefill_answer(const Model& model, const CachePool& pool,
                                std::span<const std::uint64_t> ordered_ids,
                                std::string_view query_text, int max_new_tokens) {
    std::vector<int> generated;
    full_prefill_run(model, pool, ordered_ids, query_text, max_new_tokens, &generated);
    return detokenize(generated);
}

} // namespace adshot
