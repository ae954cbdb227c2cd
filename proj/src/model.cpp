#include "adshot/model.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

#include "adshot/rng.hpp"
#include "adshot/rope.hpp"

namespace adshot {

namespace {

constexpr float kRmsEps = 1e-5f;

void rms_norm(std::span<const float> x, std::span<const float> weight, std::span<float> out) {
    float ss = 0.0f;
    for (float v : x) ss += v * v;
    const float scale = 1.0f / std::sqrt(ss / static_cast<float>(x.size()) + kRmsEps);
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] * scale * weight[i];
    }
}

// y = W x, W row-major [rows][cols].
void matvec(std::span<const float> w, std::span<const float> x, std::span<float> y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const float* wr = w.data() + static_cast<std::size_t>(r) * cols;
        float acc = 0.0f;
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

float silu(float x) { return x / (1.0f + std::exp(-x)); }

} // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void ModelConfig::validate() const {
    if (num_layers <= 0 || num_heads <= 0 || head_dim <= 0 || vocab_size <= 0 ||
        max_position <= 0 || hidden_dim <= 0) {
        throw std::invalid_argument("ModelConfig: all sizes must be positive");
    }
    if (head_dim % 2 != 0) {
        throw std::invalid_argument("ModelConfig: head_dim must be even");
    }
    if (hidden_dim != num_heads * head_dim) {
        throw std::invalid_argument("ModelConfig: hidden_dim must equal num_heads*head_dim");
    }
    if (!(rope_base > 0.0)) {
        throw std::invalid_argument("ModelConfig: rope_base must be positive");
    }
}

AttentionMask::AttentionMask(int n) : n_(n), allowed_(static_cast<std::size_t>(n) * n, 0) {
    for (int i = 0; i < n; ++i) set(i, i, true);
}

AttentionMask AttentionMask::causal(int n) {
    AttentionMask m(n);
    for (int i = 0; i < n; ++i) m.allow_range(i, 0, i + 1);
    return m;
}

void AttentionMask::allow_range(int row, int col_begin, int col_end) {
    auto* base = allowed_.data() + static_cast<std::size_t>(row) * n_;
    for (int c = col_begin; c < col_end; ++c) base[c] = 1;
}

void AttentionMask::validate() const {
    if (allowed_.size() != static_cast<std::size_t>(n_) * n_) {
        throw std::invalid_argument("AttentionMask: storage does not match size");
    }
    for (int i = 0; i < n_; ++i) {
        if (!at(i, i)) {
            throw std::invalid_argument("AttentionMask: diagonal must be true (row " +
                                        std::to_string(i) + ")");
        }
    }
}

void PastKv::append(const PastKv& present) {
    if (layers.empty()) {
        layers = present.layers;
        positions = present.positions;
        return;
    }
    if (layers.size() != present.layers.size()) {
        throw std::invalid_argument("PastKv::append: layer count mismatch");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].keys.insert(layers[l].keys.end(), present.layers[l].keys.begin(),
                              present.layers[l].keys.end());
        layers[l].values.insert(layers[l].values.end(), present.layers[l].values.begin(),
                                present.layers[l].values.end());
        layers[l].tokens += present.layers[l].tokens;
    }
    positions.insert(positions.end(), present.positions.begin(), present.positions.end());
}

Model Model::init(const ModelConfig& config) {
    config.validate();

    Model m;
    m.cfg_ = config;

    const int h = config.hidden_dim;
    const int ffn = config.ffn_dim();
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    SplitMix64 rng(config.weight_seed);

    auto fill = [&](std::vector<float>& v, std::size_t n) {
        v.resize(n);
        for (auto& w : v) w = rng.next_uniform(bound);
    };

    fill(m.embed_, static_cast<std::size_t>(config.vocab_size) * h);
    m.layers_.resize(config.num_layers);
    for (auto& lw : m.layers_) {
        fill(lw.attn_norm, h);
        fill(lw.wq, static_cast<std::size_t>(h) * h);
        fill(lw.wk, static_cast<std::size_t>(h) * h);
        fill(lw.wv, static_cast<std::size_t>(h) * h);
        fill(lw.wo, static_cast<std::size_t>(h) * h);
        fill(lw.ffn_norm, h);
        fill(lw.w1, static_cast<std::size_t>(ffn) * h);
        fill(lw.w2, static_cast<std::size_t>(h) * ffn);
    }
    fill(m.final_norm_, h);
    fill(m.unembed_, static_cast<std::size_t>(config.vocab_size) * h);

    // Fingerprint: canonical config fields, then every weight in traversal order.
    std::uint64_t fp = 0xcbf29ce484222325ULL;
    auto mix = [&fp](const void* p, std::size_t n) { fp = fnv1a64(p, n, fp); };
    const std::uint32_t ints[5] = {
        static_cast<std::uint32_t>(config.num_layers), static_cast<std::uint32_t>(config.num_heads),
        static_cast<std::uint32_t>(config.head_dim), static_cast<std::uint32_t>(config.vocab_size),
        static_cast<std::uint32_t>(config.max_position)};
    mix(ints, sizeof(ints));
    mix(&config.rope_base, sizeof(config.rope_base));
    mix(&config.weight_seed, sizeof(config.weight_seed));
    auto mix_weights = [&](const std::vector<float>& v) { mix(v.data(), v.size() * sizeof(float)); };
    mix_weights(m.embed_);
    for (const auto& lw : m.layers_) {
        mix_weights(lw.attn_norm);
        mix_weights(lw.wq);
        mix_weights(lw.wk);
        mix_weights(lw.wv);
        mix_weights(lw.wo);
        mix_weights(lw.ffn_norm);
        mix_weights(lw.w1);
        mix_weights(lw.w2);
    }
    mix_weights(m.final_norm_);
    mix_weights(m.unembed_);
    m.fingerprint_ = fp;

    return m;
}

ForwardOutput Model::forward(const TokenSequence& input, const AttentionMask& mask,
                             const PastKv* past, const ForwardOptions& opts) const {
    const int T = input.size();
    const int P = (past != nullptr) ? past->tokens() : 0;
    const int total = P + T;
    const int h = cfg_.hidden_dim;
    const int H = cfg_.num_heads;
    const int d = cfg_.head_dim;
    const int ffn = cfg_.ffn_dim();
    const int L = cfg_.num_layers;

    if (T == 0) {
        throw std::invalid_argument("forward: empty input");
    }
    if (input.tokens.size() != input.positions.size()) {
        throw std::invalid_argument("forward: tokens/positions length mismatch");
    }
    if (mask.size() != total) {
        throw std::invalid_argument("forward: mask size " + std::to_string(mask.size()) +
                                    " does not match past+input length " + std::to_string(total));
    }
    if (past != nullptr && static_cast<int>(past->layers.size()) != L) {
        throw std::invalid_argument("forward: past layer count mismatch");
    }
    for (int t = 0; t < T; ++t) {
        if (input.tokens[t] < 0 || input.tokens[t] >= cfg_.vocab_size) {
            throw std::invalid_argument("forward: token id out of vocabulary");
        }
        if (input.positions[t] < 0 || input.positions[t] >= cfg_.max_position) {
            throw std::invalid_argument("forward: position " + std::to_string(input.positions[t]) +
                                        " outside [0, max_position)");
        }
        if (!mask.at(P + t, P + t)) {
            throw std::invalid_argument("forward: mask diagonal must be true for every input token");
        }
    }

    // One set of rotation factors per input token, shared across layers/heads.
    std::vector<RotationFactors> rot(T);
    for (int t = 0; t < T; ++t) {
        rot[t] = rotation_factors(input.positions[t], d, cfg_.rope_base);
    }

    ForwardOutput out;
    out.present.layers.resize(L);
    out.present.positions = input.positions;
    if (opts.capture_queries) {
        out.queries.resize(static_cast<std::size_t>(L) * H * T * d);
    }

    std::vector<float> x(static_cast<std::size_t>(T) * h);
    for (int t = 0; t < T; ++t) {
        std::memcpy(x.data() + static_cast<std::size_t>(t) * h,
                    embed_.data() + static_cast<std::size_t>(input.tokens[t]) * h,
                    sizeof(float) * h);
    }

    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));
    std::vector<float> xn(static_cast<std::size_t>(T) * h);
    std::vector<float> q(static_cast<std::size_t>(T) * h);
    std::vector<float> attn(static_cast<std::size_t>(T) * h);
    std::vector<float> proj(h);
    std::vector<float> h1(ffn);
    std::vector<float> scores(total);

    for (int l = 0; l < L; ++l) {
        const LayerWeights& lw = layers_[l];
        LayerKv& present = out.present.layers[l];
        present.tokens = T;
        present.keys.resize(static_cast<std::size_t>(T) * h);
        present.values.resize(static_cast<std::size_t>(T) * h);

        for (int t = 0; t < T; ++t) {
            auto row = std::span<const float>(x).subspan(static_cast<std::size_t>(t) * h, h);
            rms_norm(row, lw.attn_norm, std::span<float>(xn).subspan(static_cast<std::size_t>(t) * h, h));
        }
        for (int t = 0; t < T; ++t) {
            auto in = std::span<const float>(xn).subspan(static_cast<std::size_t>(t) * h, h);
            matvec(lw.wq, in, std::span<float>(q).subspan(static_cast<std::size_t>(t) * h, h), h, h);
            matvec(lw.wk, in, std::span<float>(present.keys).subspan(static_cast<std::size_t>(t) * h, h), h, h);
            matvec(lw.wv, in, std::span<float>(present.values).subspan(static_cast<std::size_t>(t) * h, h), h, h);
            // RoPE on queries and keys, per head, at this token's logical position.
            for (int hh = 0; hh < H; ++hh) {
                apply_rotation(std::span<float>(q).subspan(static_cast<std::size_t>(t) * h + hh * d, d), rot[t]);
                apply_rotation(std::span<float>(present.keys).subspan(static_cast<std::size_t>(t) * h + hh * d, d), rot[t]);
            }
        }
        if (opts.capture_queries) {
            for (int hh = 0; hh < H; ++hh) {
                for (int t = 0; t < T; ++t) {
                    std::memcpy(out.queries.data() +
                                    ((static_cast<std::size_t>(l) * H + hh) * T + t) * d,
                                q.data() + static_cast<std::size_t>(t) * h + hh * d,
                                sizeof(float) * d);
                }
            }
        }

        const LayerKv* past_kv = (P > 0) ? &past->layers[l] : nullptr;
        for (int t = 0; t < T; ++t) {
            const int row = P + t;
            for (int hh = 0; hh < H; ++hh) {
                const float* qv = q.data() + static_cast<std::size_t>(t) * h + hh * d;
                float max_score = -std::numeric_limits<float>::infinity();
                for (int j = 0; j < total; ++j) {
                    if (!mask.at(row, j)) {
                        scores[j] = -std::numeric_limits<float>::infinity();
                        continue;
                    }
                    const float* kv = (j < P)
                        ? past_kv->keys.data() + (static_cast<std::size_t>(j) * H + hh) * d
                        : present.keys.data() + (static_cast<std::size_t>(j - P) * H + hh) * d;
                    float s = 0.0f;
                    for (int i = 0; i < d; ++i) s += qv[i] * kv[i];
                    s *= inv_sqrt_d;
                    scores[j] = s;
                    if (s > max_score) max_score = s;
                }
                float sum = 0.0f;
                for (int j = 0; j < total; ++j) {
                    const float e = (scores[j] == -std::numeric_limits<float>::infinity())
                        ? 0.0f
                        : std::exp(scores[j] - max_score);
                    scores[j] = e;
                    sum += e;
                }
                const float inv_sum = 1.0f / sum;
                float* dst = attn.data() + static_cast<std::size_t>(t) * h + hh * d;
                std::memset(dst, 0, sizeof(float) * d);
                for (int j = 0; j < total; ++j) {
                    const float w = scores[j];
                    if (w == 0.0f) continue;
                    const float* vv = (j < P)
                        ? past_kv->values.data() + (static_cast<std::size_t>(j) * H + hh) * d
                        : present.values.data() + (static_cast<std::size_t>(j - P) * H + hh) * d;
                    for (int i = 0; i < d; ++i) dst[i] += w * vv[i];
                }
                for (int i = 0; i < d; ++i) dst[i] *= inv_sum;
            }
        }
        for (int t = 0; t < T; ++t) {
            auto in = std::span<const float>(attn).subspan(static_cast<std::size_t>(t) * h, h);
            matvec(lw.wo, in, proj, h, h);
            float* xr = x.data() + static_cast<std::size_t>(t) * h;
            for (int i = 0; i < h; ++i) xr[i] += proj[i];
        }
        for (int t = 0; t < T; ++t) {
            float* xr = x.data() + static_cast<std::size_t>(t) * h;
            rms_norm(std::span<const float>(xr, h), lw.ffn_norm,
                     std::span<float>(xn).subspan(static_cast<std::size_t>(t) * h, h));
            auto in = std::span<const float>(xn).subspan(static_cast<std::size_t>(t) * h, h);
            matvec(lw.w1, in, h1, ffn, h);
            for (int i = 0; i < ffn; ++i) h1[i] = silu(h1[i]);
            matvec(lw.w2, h1, proj, h, ffn);
            for (int i = 0; i < h; ++i) xr[i] += proj[i];
        }
    }

    out.logits.resize(static_cast<std::size_t>(T) * cfg_.vocab_size);
    std::vector<float> xf(h);
    for (int t = 0; t < T; ++t) {
        rms_norm(std::span<const float>(x).subspan(static_cast<std::size_t>(t) * h, h), final_norm_, xf);
        matvec(unembed_, xf,
               std::span<float>(out.logits).subspan(static_cast<std::size_t>(t) * cfg_.vocab_size, cfg_.vocab_size),
               cfg_.vocab_size, h);
    }
    return out;
}

} // namespace adshot
