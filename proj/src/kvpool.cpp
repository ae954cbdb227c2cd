#include "adshot/kvpool.hpp"

#include <array>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "binio.hpp"

namespace adshot {

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'D', 'S', 'H', 'P', 'O', 'O', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

// File tensor order is (layer, head, token, dim); memory is token-major.
void gather_file_order(const std::vector<LayerKv>& layers, bool keys, int H, int d,
                       std::vector<float>& out) {
    out.clear();
    for (const auto& layer : layers) {
        const std::vector<float>& src = keys ? layer.keys : layer.values;
        for (int hh = 0; hh < H; ++hh) {
            for (int t = 0; t < layer.tokens; ++t) {
                const float* p = src.data() + (static_cast<std::size_t>(t) * H + hh) * d;
                out.insert(out.end(), p, p + d);
            }
        }
    }
}

void scatter_file_order(const std::vector<float>& in, bool keys, int L, int H, int T, int d,
                        std::vector<LayerKv>& layers) {
    layers.resize(L);
    std::size_t idx = 0;
    for (int l = 0; l < L; ++l) {
        LayerKv& layer = layers[l];
        layer.tokens = T;
        std::vector<float>& dst = keys ? layer.keys : layer.values;
        dst.resize(static_cast<std::size_t>(T) * H * d);
        for (int hh = 0; hh < H; ++hh) {
            for (int t = 0; t < T; ++t) {
                std::memcpy(dst.data() + (static_cast<std::size_t>(t) * H + hh) * d,
                            in.data() + idx, sizeof(float) * d);
                idx += d;
            }
        }
    }
}

void write_block_tensors(detail::BinWriter& w, const KvBlock& block, int H, int d) {
    std::vector<float> staged;
    gather_file_order(block.layers, true, H, d, staged);
    w.f32_array(staged);
    gather_file_order(block.layers, false, H, d, staged);
    w.f32_array(staged);
}

KvBlock read_block_tensors(detail::BinReader& r, const ModelConfig& cfg, std::uint64_t token_count) {
    if (token_count == 0 || token_count > static_cast<std::uint64_t>(cfg.max_position)) {
        throw FormatError("invalid block token count at offset " + std::to_string(r.offset()),
                          r.offset());
    }
    const int T = static_cast<int>(token_count);
    const std::size_t n = static_cast<std::size_t>(cfg.num_layers) * cfg.num_heads * T * cfg.head_dim;
    KvBlock block;
    block.token_count = T;
    std::vector<float> staged;
    r.f32_array(staged, n);
    scatter_file_order(staged, true, cfg.num_layers, cfg.num_heads, T, cfg.head_dim, block.layers);
    r.f32_array(staged, n);
    scatter_file_order(staged, false, cfg.num_layers, cfg.num_heads, T, cfg.head_dim, block.layers);
    return block;
}

std::string read_text(detail::BinReader& r) {
    const std::uint64_t len = r.u64();
    std::string text(len, '\0');
    if (len > 0) r.bytes(text.data(), len);
    return text;
}

} // namespace

void CachePool::add_example(std::uint64_t id, KvBlock block, std::string text) {
    block.example_id = id;
    blocks[id] = std::move(block);
    texts[id] = std::move(text);
}

KvBlock prefill_example(const Model& model, std::string_view text) {
    if (text.empty()) {
        throw std::invalid_argument("prefill_example: empty example");
    }
    const TokenSequence toks = tokenize(text);
    if (toks.size() > model.config().max_position) {
        throw std::invalid_argument("prefill_example: example of " + std::to_string(toks.size()) +
                                    " tokens exceeds max_position " +
                                    std::to_string(model.config().max_position));
    }
    ForwardOutput out = model.forward(toks, AttentionMask::causal(toks.size()));
    KvBlock block;
    block.token_count = toks.size();
    block.layers = std::move(out.present.layers);
    return block;
}

CachePool build_pool(const Model& model, const std::vector<std::string>& texts,
                     const std::optional<std::string>& instruction) {
    if (texts.empty()) {
        throw std::invalid_argument("build_pool: no examples");
    }
    CachePool pool;
    pool.config = model.config();
    pool.fingerprint = model.fingerprint();

    const std::size_t n = texts.size();
    std::vector<KvBlock> built(n);
    std::vector<std::string> errors(n);

    const unsigned workers =
        std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()), static_cast<unsigned>(n));
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                built[i] = prefill_example(model, texts[i]);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    if (workers <= 1) {
        run(0, n);
    } else {
        std::vector<std::thread> pool_threads;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (unsigned w = 0; w + 1 < workers; ++w) {
            pool_threads.emplace_back(run, w * chunk, std::min(n, (w + 1) * chunk));
        }
        run((workers - 1) * chunk, n);
        for (auto& t : pool_threads) t.join();
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            throw std::invalid_argument("build_pool: example " + std::to_string(i) + ": " + errors[i]);
        }
        pool.add_example(i, std::move(built[i]), texts[i]);
    }

    if (instruction.has_value()) {
        CachePool::Instruction instr;
        instr.block = prefill_example(model, *instruction);
        instr.text = *instruction;
        pool.instruction = std::move(instr);
    }
    return pool;
}

void save_pool(const CachePool& pool, const std::string& path) {
    const int H = pool.config.num_heads;
    const int d = pool.config.head_dim;

    detail::BinWriter w(path);
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(kFormatVersion);
    w.u64(pool.fingerprint);
    w.u64(pool.blocks.size());
    for (const auto& [id, block] : pool.blocks) {
        w.u64(id);
        w.u64(static_cast<std::uint64_t>(block.token_count));
        write_block_tensors(w, block, H, d);
        const std::string& text = pool.texts.at(id);
        w.u64(text.size());
        w.bytes(text.data(), text.size());
    }
    w.u8(pool.instruction.has_value() ? 1 : 0);
    if (pool.instruction.has_value()) {
        w.u64(static_cast<std::uint64_t>(pool.instruction->block.token_count));
        write_block_tensors(w, pool.instruction->block, H, d);
        w.u64(pool.instruction->text.size());
        w.bytes(pool.instruction->text.data(), pool.instruction->text.size());
    }
    w.close();
}

CachePool load_pool(const std::string& path, const ModelConfig& config,
                    std::uint64_t expected_fingerprint) {
    config.validate();
    detail::BinReader r(path);

    std::array<char, 8> magic{};
    r.bytes(magic.data(), magic.size());
    if (magic != kMagic) {
        throw FormatError("bad magic: not an ADSHPOOL file", 0);
    }
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw FormatError("unsupported format version " + std::to_string(version), 8);
    }
    const std::uint64_t fingerprint = r.u64();
    if (fingerprint != expected_fingerprint) {
        throw FingerprintMismatch(expected_fingerprint, fingerprint);
    }

    CachePool pool;
    pool.config = config;
    pool.fingerprint = fingerprint;

    const std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint64_t id = r.u64();
        const std::uint64_t token_count = r.u64();
        KvBlock block = read_block_tensors(r, config, token_count);
        std::string text = read_text(r);
        pool.add_example(id, std::move(block), std::move(text));
    }
    if (r.u8() != 0) {
        CachePool::Instruction instr;
        const std::uint64_t token_count = r.u64();
        instr.block = read_block_tensors(r, config, token_count);
        instr.text = read_text(r);
        pool.instruction = std::move(instr);
    }
    return pool;
}

} // namespace adshot
