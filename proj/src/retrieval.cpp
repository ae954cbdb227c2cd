#include "adshot/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace adshot {

QueryVectors encode_query(const Model& model, std::string_view query_text) {
    if (query_text.empty()) {
        throw std::invalid_argument("encode_query: empty query");
    }
    const TokenSequence toks = tokenize(query_text);
    if (toks.size() > model.config().max_position) {
        throw std::invalid_argument("encode_query: query exceeds max_position");
    }
    ForwardOptions opts;
    opts.capture_queries = true;
    ForwardOutput out = model.forward(toks, AttentionMask::causal(toks.size()), nullptr, opts);

    QueryVectors qv;
    qv.layers = model.config().num_layers;
    qv.heads = model.config().num_heads;
    qv.tokens = toks.size();
    qv.dim = model.config().head_dim;
    qv.data = std::move(out.queries);
    return qv;
}

std::vector<float> attention_matrix(const QueryVectors& queries, const KvBlock& block,
                                    int layer, int head) {
    if (layer < 0 || layer >= queries.layers) {
        throw std::invalid_argument("attention_matrix: layer out of range");
    }
    if (head < 0 || head >= queries.heads) {
        throw std::invalid_argument("attention_matrix: head out of range");
    }
    const int d = queries.dim;
    const int H = queries.heads;
    const int Ti = block.token_count;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    std::vector<float> a(static_cast<std::size_t>(queries.tokens) * Ti);
    std::vector<double> row(Ti);
    for (int qt = 0; qt < queries.tokens; ++qt) {
        const auto q = queries.at(layer, head, qt);
        double max_score = -std::numeric_limits<double>::infinity();
        for (int kt = 0; kt < Ti; ++kt) {
            const auto k = block.key_at(layer, head, kt, d, H);
            double s = 0.0;
            for (int i = 0; i < d; ++i) s += static_cast<double>(q[i]) * k[i];
            s *= inv_sqrt_d;
            row[kt] = s;
            max_score = std::max(max_score, s);
        }
        double sum = 0.0;
        for (int kt = 0; kt < Ti; ++kt) {
            row[kt] = std::exp(row[kt] - max_score);
            sum += row[kt];
        }
        for (int kt = 0; kt < Ti; ++kt) {
            a[static_cast<std::size_t>(qt) * Ti + kt] = static_cast<float>(row[kt] / sum);
        }
    }
    return a;
}

float score_example(const QueryVectors& queries, const KvBlock& block, int layer,
                    std::optional<int> head) {
    if (layer < 0 || layer >= queries.layers) {
        throw std::invalid_argument("score_example: layer out of range");
    }
    if (head.has_value() && (*head < 0 || *head >= queries.heads)) {
        throw std::invalid_argument("score_example: head out of range");
    }
    const int d = queries.dim;
    const int H = queries.heads;
    const int Ti = block.token_count;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const int first = head.value_or(0);
    const int last = head.has_value() ? *head + 1 : queries.heads;

    // All in double until the final rounding, so equal-length blocks produce
    // bit-identical float scores and ties resolve by id deterministically.
    std::vector<double> row(Ti);
    double total = 0.0;
    for (int hh = first; hh < last; ++hh) {
        double entry_sum = 0.0;
        for (int qt = 0; qt < queries.tokens; ++qt) {
            const auto q = queries.at(layer, hh, qt);
            double max_score = -std::numeric_limits<double>::infinity();
            for (int kt = 0; kt < Ti; ++kt) {
                const auto k = block.key_at(layer, hh, kt, d, H);
                double s = 0.0;
                for (int i = 0; i < d; ++i) s += static_cast<double>(q[i]) * k[i];
                s *= inv_sqrt_d;
                row[kt] = s;
                max_score = std::max(max_score, s);
            }
            double z = 0.0;
            for (int kt = 0; kt < Ti; ++kt) {
                row[kt] = std::exp(row[kt] - max_score);
                z += row[kt];
            }
            for (int kt = 0; kt < Ti; ++kt) entry_sum += row[kt] / z;
        }
        total += entry_sum / (static_cast<double>(queries.tokens) * Ti);
    }
    return static_cast<float>(total / static_cast<double>(last - first));
}

ActiveSet rank(const Model& model, const CachePool& pool, std::string_view query_text, int layer) {
    if (pool.blocks.empty()) {
        throw std::invalid_argument("rank: empty pool");
    }
    if (pool.fingerprint != model.fingerprint()) {
        throw std::invalid_argument("rank: pool was built for a different model");
    }
    if (layer < 0 || layer >= model.config().num_layers) {
        throw std::invalid_argument("rank: layer out of range");
    }
    const QueryVectors qv = encode_query(model, query_text);

    struct Entry {
        std::uint64_t id;
        float score;
    };
    std::vector<Entry> entries;
    entries.reserve(pool.blocks.size());
    for (const auto& [id, block] : pool.blocks) {
        entries.push_back({id, score_example(qv, block, layer)});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });

    ActiveSet set;
    set.ranked_ids.reserve(entries.size());
    set.scores.reserve(entries.size());
    for (const auto& e : entries) {
        set.ranked_ids.push_back(e.id);
        set.scores.push_back(e.score);
    }
    return set;
}

} // namespace adshot
