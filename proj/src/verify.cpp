#include "adshot/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "adshot/engine.hpp"
#include "adshot/errors.hpp"
#include "adshot/kvpool.hpp"
#include "adshot/probe.hpp"
#include "adshot/reposition.hpp"
#include "adshot/retrieval.hpp"
#include "adshot/rope.hpp"

namespace adshot {

namespace {

using Clock = std::chrono::steady_clock;

std::string format_err(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

std::vector<float> random_vector(std::mt19937& rng, int n, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    std::vector<float> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

std::string random_text(std::mt19937& rng, int len) {
    std::uniform_int_distribution<int> dist('a', 'z');
    std::string s(len, ' ');
    for (auto& c : s) c = static_cast<char>(dist(rng));
    return s;
}

// Re-encoding moves a key to its target position exactly (up to fp noise).
PropertyResult check_rope_reencode() {
    PropertyResult r{"rope_reencode", true, ""};
    const auto start = Clock::now();
    std::mt19937 rng(20260801);
    std::uniform_int_distribution<long long> pos_dist(0, 2048);
    double worst = 0.0;
    for (int d : {8, 32, 64}) {
        for (int trial = 0; trial < 10000; ++trial) {
            const auto key = random_vector(rng, d);
            const long long p_old = pos_dist(rng);
            const long long delta = pos_dist(rng);
            const auto cached = apply_rope(key, p_old, 10000.0);
            const auto moved = reencode_key(cached, delta, 10000.0);
            const auto fresh = apply_rope(key, p_old + delta, 10000.0);
            for (int i = 0; i < d; ++i) {
                worst = std::max(worst, static_cast<double>(std::abs(moved[i] - fresh[i])));
            }
        }
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    r.pass = worst <= 1e-5 && secs < 5.0;
    r.detail = "max_err=" + format_err(worst) + " time=" + format_err(secs) + "s";
    return r;
}

// Attention logits from re-encoded cached keys equal logits from freshly
// rotated keys, over 2-block assemblies.
PropertyResult check_score_equivalence() {
    PropertyResult r{"score_equivalence", true, ""};
    std::mt19937 rng(20260802);
    std::uniform_int_distribution<int> len_dist(1, 12);
    const int d = 32;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int ta = len_dist(rng);
        const int tb = len_dist(rng);
        const auto query = apply_rope(random_vector(rng, d), ta + tb + 3, 10000.0);
        // block A at start 0, block B at start ta
        for (int t = 0; t < ta + tb; ++t) {
            const bool in_b = t >= ta;
            const long long origin = in_b ? t - ta : t;
            const long long target = t;
            const auto raw = random_vector(rng, d);
            const auto cached = apply_rope(raw, origin, 10000.0);
            const auto reenc = reencode_key(cached, target - origin, 10000.0);
            const auto fresh = apply_rope(raw, target, 10000.0);
            double logit_cached = 0.0, logit_fresh = 0.0;
            for (int i = 0; i < d; ++i) {
                logit_cached += static_cast<double>(query[i]) * reenc[i];
                logit_fresh += static_cast<double>(query[i]) * fresh[i];
            }
            worst = std::max(worst, std::abs(logit_cached - logit_fresh) * inv_sqrt_d);
        }
    }
    r.pass = worst <= 1e-5;
    r.detail = "max_logit_err=" + format_err(worst);
    return r;
}

// One masked pass over cached shots reproduces per-count sequential runs.
PropertyResult check_parallel_probe() {
    PropertyResult r{"parallel_probe", true, ""};
    const std::vector<int> counts = {2, 4, 6, 8};
    const std::string prompt = "Are you confident enough to answer? ";
    double worst = 0.0;
    for (int seed = 0; seed < 50; ++seed) {
        ModelConfig cfg;
        cfg.num_layers = 2;
        cfg.num_heads = 4;
        cfg.head_dim = 32;
        cfg.hidden_dim = 128;
        cfg.weight_seed = 1000 + static_cast<std::uint64_t>(seed);
        const Model model = Model::init(cfg);

        std::mt19937 rng(777 + seed);
        std::uniform_int_distribution<int> len_dist(3, 9);
        std::vector<std::string> texts;
        for (int i = 0; i < 8; ++i) texts.push_back(random_text(rng, len_dist(rng)));
        const CachePool pool = build_pool(model, texts);
        std::vector<std::uint64_t> ids;
        for (const auto& [id, _] : pool.blocks) ids.push_back(id);
        const std::string query = random_text(rng, 6);

        const auto parallel = probe_round_logits(model, pool, ids, counts, query, prompt);

        for (std::size_t k = 0; k < counts.size(); ++k) {
            const AssembledContext ctx = assemble_context(pool, ids, counts[k]);
            TokenSequence seg = tokenize(query, ctx.total_length);
            append_tokens(seg, tokenize(prompt));
            const ForwardOutput out = model.forward(
                seg, AttentionMask::causal(ctx.past.tokens() + seg.size()), &ctx.past);
            const int V = model.config().vocab_size;
            const float* sequential =
                out.logits.data() + static_cast<std::size_t>(seg.size() - 1) * V;
            for (int v = 0; v < V; ++v) {
                worst = std::max(worst,
                                 static_cast<double>(std::abs(parallel[k][v] - sequential[v])));
            }
        }
    }
    r.pass = worst <= 1e-4;
    r.detail = "max_logit_err=" + format_err(worst);
    return r;
}

PropertyResult check_entropy() {
    PropertyResult r{"entropy", true, ""};
    const double ln2 = std::log(2.0);
    std::vector<float> row(kVocabSize, 0.0f);

    row[kYesToken] = 1.5f;
    row[kNoToken] = 1.5f;
    const double h_equal = probe_entropy(row, kYesToken, kNoToken);

    row[kYesToken] = 31.0f;
    row[kNoToken] = 1.0f;
    const double h_gap30 = probe_entropy(row, kYesToken, kNoToken);

    bool bounds_ok = true;
    std::mt19937 rng(20260804);
    std::uniform_real_distribution<float> dist(-20.0f, 20.0f);
    for (int i = 0; i < 10000; ++i) {
        row[kYesToken] = dist(rng);
        row[kNoToken] = dist(rng);
        const double h = probe_entropy(row, kYesToken, kNoToken);
        if (!(h >= 0.0 && h <= ln2 + 1e-9)) bounds_ok = false;
    }

    r.pass = std::abs(h_equal - ln2) <= 1e-9 && h_gap30 < 1e-9 && bounds_ok;
    r.detail = "H(equal)=" + std::to_string(h_equal) + " H(gap30)=" + format_err(h_gap30);
    return r;
}

// Replay of a recorded two-round entropy sequence through the selector.
PropertyResult check_selector_replay() {
    PropertyResult r{"selector_replay", true, ""};
    const std::vector<std::vector<double>> rounds = {
        {0.6731, 0.7023, 0.7044, 0.6671},
        {0.6862, 0.6884, 0.6232, 0.6450},
    };
    std::size_t round_idx = 0;
    const RoundEvaluator evaluate = [&](const std::vector<int>&) {
        return rounds.at(round_idx++);
    };
    const EntropyTrace trace = run_adaptive_selection(4, 4, 32, 0.65, evaluate);
    r.pass = trace.chosen_count == 28 && !trace.fallback && trace.rounds.size() == 2;
    r.detail = "chosen=" + std::to_string(trace.chosen_count);
    return r;
}

// Loop-based rescoring must reproduce rank() exactly; softmax rows sum to 1.
PropertyResult check_ranking_oracle() {
    PropertyResult r{"ranking_oracle", true, ""};
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.num_heads = 4;
    cfg.head_dim = 16;
    cfg.hidden_dim = 64;
    cfg.weight_seed = 99;
    const Model model = Model::init(cfg);

    std::mt19937 rng(20260806);
    std::uniform_int_distribution<int> len_dist(2, 10);
    double worst_row_sum_err = 0.0;
    bool order_ok = true;

    for (int pool_size : {1, 7, 32}) {
        std::vector<std::string> texts;
        for (int i = 0; i < pool_size; ++i) texts.push_back(random_text(rng, len_dist(rng)));
        const CachePool pool = build_pool(model, texts);
        const std::string query = random_text(rng, 5);
        const int layer = cfg.num_layers - 1;
        const ActiveSet ranked = rank(model, pool, query, layer);

        const QueryVectors qv = encode_query(model, query);

        // The implementation's softmax rows must sum to 1.
        for (const auto& [id, block] : pool.blocks) {
            for (int h = 0; h < cfg.num_heads; ++h) {
                const auto a = attention_matrix(qv, block, layer, h);
                for (int qt = 0; qt < qv.tokens; ++qt) {
                    double row_sum = 0.0;
                    for (int kt = 0; kt < block.token_count; ++kt) {
                        row_sum += a[static_cast<std::size_t>(qt) * block.token_count + kt];
                    }
                    worst_row_sum_err = std::max(worst_row_sum_err, std::abs(row_sum - 1.0));
                }
            }
        }

        // Independent recomputation: explicit loops over raw tensors.
        std::vector<std::pair<float, std::uint64_t>> brute;
        for (const auto& [id, block] : pool.blocks) {
            double head_sum = 0.0;
            for (int h = 0; h < cfg.num_heads; ++h) {
                double mean_sum = 0.0;
                for (int qt = 0; qt < qv.tokens; ++qt) {
                    const auto q = qv.at(layer, h, qt);
                    std::vector<double> e(block.token_count);
                    double mx = -1e300;
                    for (int kt = 0; kt < block.token_count; ++kt) {
                        const auto kk = block.key_at(layer, h, kt, cfg.head_dim, cfg.num_heads);
                        double s = 0.0;
                        for (int i = 0; i < cfg.head_dim; ++i) s += static_cast<double>(q[i]) * kk[i];
                        e[kt] = s / std::sqrt(static_cast<double>(cfg.head_dim));
                        mx = std::max(mx, e[kt]);
                    }
                    double z = 0.0;
                    for (auto& x : e) {
                        x = std::exp(x - mx);
                        z += x;
                    }
                    double row_sum = 0.0;
                    for (double x : e) {
                        mean_sum += x / z;
                        row_sum += x / z;
                    }
                    worst_row_sum_err = std::max(worst_row_sum_err, std::abs(row_sum - 1.0));
                }
                head_sum += mean_sum / (static_cast<double>(qv.tokens) * block.token_count);
            }
            brute.emplace_back(static_cast<float>(head_sum / cfg.num_heads), id);
        }
        std::sort(brute.begin(), brute.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t i = 0; i < brute.size(); ++i) {
            if (brute[i].second != ranked.ranked_ids[i]) order_ok = false;
        }
    }
    r.pass = order_ok && worst_row_sum_err <= 1e-6;
    r.detail = std::string("order=") + (order_ok ? "exact" : "MISMATCH") +
               " row_sum_err=" + format_err(worst_row_sum_err);
    return r;
}

PropertyResult check_serialization() {
    PropertyResult r{"serialization", true, ""};
    ModelConfig cfg;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.head_dim = 8;
    cfg.hidden_dim = 16;
    cfg.weight_seed = 7;
    const Model model = Model::init(cfg);
    const CachePool pool = build_pool(model, {"alpha", "beta", "gamma"}, std::string("instr: "));

    const auto path = std::filesystem::temp_directory_path() / "adshot_verify_pool.bin";
    save_pool(pool, path.string());

    bool round_trip = true;
    const CachePool loaded = load_pool(path.string(), cfg, model.fingerprint());
    round_trip = loaded.blocks.size() == pool.blocks.size() &&
                 loaded.instruction.has_value();
    for (const auto& [id, block] : pool.blocks) {
        const KvBlock& other = loaded.blocks.at(id);
        for (int l = 0; l < cfg.num_layers; ++l) {
            if (block.layers[l].keys != other.layers[l].keys ||
                block.layers[l].values != other.layers[l].values) {
                round_trip = false;
            }
        }
        if (loaded.texts.at(id) != pool.texts.at(id)) round_trip = false;
    }

    bool mismatch_rejected = false;
    try {
        load_pool(path.string(), cfg, model.fingerprint() + 1);
    } catch (const FingerprintMismatch&) {
        mismatch_rejected = true;
    }

    bool truncation_rejected = false;
    const auto trunc_path = std::filesystem::temp_directory_path() / "adshot_verify_trunc.bin";
    const auto full_size = std::filesystem::file_size(path);
    std::filesystem::copy_file(path, trunc_path, std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(trunc_path, full_size / 2);
    try {
        load_pool(trunc_path.string(), cfg, model.fingerprint());
    } catch (const FormatError&) {
        truncation_rejected = true;
    }

    std::filesystem::remove(path);
    std::filesystem::remove(trunc_path);

    r.pass = round_trip && mismatch_rejected && truncation_rejected;
    r.detail = std::string("round_trip=") + (round_trip ? "ok" : "FAIL") +
               " mismatch=" + (mismatch_rejected ? "rejected" : "MISSED") +
               " truncation=" + (truncation_rejected ? "rejected" : "MISSED");
    return r;
}

} // namespace

std::vector<PropertyResult> run_verification() {
    return {
        check_rope_reencode(),   check_score_equivalence(), check_parallel_probe(),
        check_entropy(),         check_selector_replay(),   check_ranking_oracle(),
        check_serialization(),
    };
}

} // namespace adshot
