#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "adshot/errors.hpp"
#include "adshot/kvpool.hpp"
#include "adshot/rope.hpp"
#include "helpers.hpp"

using namespace adshot;
using testutil::max_abs_diff;
using testutil::tiny_config;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

bool blocks_equal(const KvBlock& a, const KvBlock& b) {
    if (a.token_count != b.token_count || a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].keys != b.layers[l].keys) return false;
        if (a.layers[l].values != b.layers[l].values) return false;
    }
    return true;
}

// Pool with synthetic tensors; exercises serialization without a model.
CachePool synthetic_pool(std::mt19937& rng, const ModelConfig& cfg, int examples) {
    CachePool pool;
    pool.config = cfg;
    pool.fingerprint = rng();
    std::uniform_int_distribution<int> len_dist(1, 9);
    for (int i = 0; i < examples; ++i) {
        KvBlock block;
        block.token_count = len_dist(rng);
        block.layers.resize(cfg.num_layers);
        const std::size_t n =
            static_cast<std::size_t>(block.token_count) * cfg.num_heads * cfg.head_dim;
        for (auto& layer : block.layers) {
            layer.tokens = block.token_count;
            layer.keys = testutil::random_vec(rng, static_cast<int>(n));
            layer.values = testutil::random_vec(rng, static_cast<int>(n));
        }
        pool.add_example(i, std::move(block), testutil::random_text(rng, 6));
    }
    return pool;
}

} // namespace

TEST_CASE("single-token block stores unrotated keys at origin") {
    // At position 0 RoPE is the identity, so re-encoding the cached key by p
    // must reproduce a fresh pass of that token at position p.
    const Model model = Model::init(tiny_config(2, 2, 8, 11));
    const KvBlock block = prefill_example(model, "k");
    CHECK(block.token_count == 1);

    TokenSequence at_p = tokenize("k");
    at_p.positions = {9};
    const ForwardOutput fresh = model.forward(at_p, AttentionMask::causal(1));
    for (int l = 0; l < 2; ++l) {
        for (int h = 0; h < 2; ++h) {
            const auto cached = block.key_at(l, h, 0, 8, 2);
            const auto moved = reencode_key(cached, 9, model.config().rope_base);
            const auto target_head = std::span<const float>(fresh.present.layers[l].keys)
                                         .subspan(static_cast<std::size_t>(h) * 8, 8);
            CHECK(max_abs_diff(moved, target_head) <= 1e-5);
        }
    }
}

TEST_CASE("prefill is deterministic") {
    const Model model = Model::init(tiny_config());
    const KvBlock a = prefill_example(model, "same text");
    const KvBlock b = prefill_example(model, "same text");
    CHECK(blocks_equal(a, b));
}

TEST_CASE("layer-1 keys of a block match any longer contiguous prefill") {
    const Model model = Model::init(tiny_config(3, 4, 8, 23));
    const std::string prefix = "first example ";
    const std::string text = "second one";

    const KvBlock block = prefill_example(model, text);
    const TokenSequence joint = tokenize(prefix + text);
    const ForwardOutput contiguous = model.forward(joint, AttentionMask::causal(joint.size()));

    const int offset = static_cast<int>(prefix.size());
    const int H = 4, d = 8;
    for (int t = 0; t < block.token_count; ++t) {
        for (int h = 0; h < H; ++h) {
            const auto cached = block.key_at(0, h, t, d, H);
            const auto moved = reencode_key(cached, offset, model.config().rope_base);
            const auto joint_key = std::span<const float>(contiguous.present.layers[0].keys)
                                       .subspan((static_cast<std::size_t>(offset + t) * H + h) * d, d);
            CHECK(max_abs_diff(moved, joint_key) <= 1e-5);
        }
    }
}

TEST_CASE("build_pool assigns sequential ids") {
    const Model model = Model::init(tiny_config());
    const CachePool pool = build_pool(model, {"one", "two", "three"});
    CHECK(pool.size() == 3);
    CHECK(pool.blocks.count(0) == 1);
    CHECK(pool.blocks.count(1) == 1);
    CHECK(pool.blocks.count(2) == 1);
    CHECK(pool.texts.at(1) == "two");
    CHECK(pool.fingerprint == model.fingerprint());
    CHECK(!pool.instruction.has_value());
}

TEST_CASE("empty input and over-long examples are rejected with the index") {
    const Model model = Model::init(tiny_config());
    CHECK_THROWS_AS(build_pool(model, {}), std::invalid_argument);

    ModelConfig small = tiny_config();
    small.max_position = 4;
    const Model tiny = Model::init(small);
    try {
        build_pool(tiny, {"ok", "this line is far too long", "ok"});
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("example 1") != std::string::npos);
    }
}

TEST_CASE("storage accounting over 256 examples of 32 tokens") {
    const ModelConfig cfg = tiny_config(1, 2, 8, 31);
    const Model model = Model::init(cfg);
    std::mt19937 rng(512);
    std::vector<std::string> texts;
    for (int i = 0; i < 256; ++i) texts.push_back(testutil::random_text(rng, 32));
    const CachePool pool = build_pool(model, texts);

    std::size_t key_values = 0;
    for (const auto& [id, block] : pool.blocks) {
        for (const auto& layer : block.layers) key_values += layer.keys.size();
    }
    CHECK(key_values == 256ull * cfg.num_layers * cfg.num_heads * 32 * cfg.head_dim);
}

TEST_CASE("parallel pool build equals one-by-one prefill") {
    const Model model = Model::init(tiny_config(2, 2, 8, 77));
    std::mt19937 rng(7);
    std::vector<std::string> texts;
    for (int i = 0; i < 20; ++i) texts.push_back(testutil::random_text(rng, 8));
    const CachePool pool = build_pool(model, texts);
    for (int i = 0; i < 20; ++i) {
        CHECK(blocks_equal(pool.blocks.at(i), prefill_example(model, texts[i])));
    }
}

TEST_CASE("save/load round trip is bit-exact") {
    const Model model = Model::init(tiny_config(2, 4, 8, 3));
    const CachePool pool = build_pool(model, {"alpha", "bete", "gamma"}, std::string("instr "));
    const auto path = temp_file("adshot_test_pool.bin");
    save_pool(pool, path.string());

    const CachePool loaded = load_pool(path.string(), pool.config, pool.fingerprint);
    REQUIRE(loaded.blocks.size() == pool.blocks.size());
    for (const auto& [id, block] : pool.blocks) {
        CHECK(blocks_equal(block, loaded.blocks.at(id)));
        CHECK(loaded.texts.at(id) == pool.texts.at(id));
    }
    REQUIRE(loaded.instruction.has_value());
    CHECK(blocks_equal(loaded.instruction->block, pool.instruction->block));
    CHECK(loaded.instruction->text == pool.instruction->text);
    std::filesystem::remove(path);
}

TEST_CASE("wrong fingerprint is rejected as a mismatch") {
    const Model model = Model::init(tiny_config());
    const CachePool pool = build_pool(model, {"a", "b"});
    const auto path = temp_file("adshot_test_fp.bin");
    save_pool(pool, path.string());
    CHECK_THROWS_AS(load_pool(path.string(), pool.config, pool.fingerprint + 1),
                    FingerprintMismatch);
    std::filesystem::remove(path);
}

TEST_CASE("bad magic and bad version are format errors") {
    const auto path = temp_file("adshot_test_magic.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTMAGIC" << std::string(64, '\0');
    }
    CHECK_THROWS_AS(load_pool(path.string(), tiny_config(), 0), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("truncation at random offsets names the failing offset") {
    std::mt19937 rng(404);
    const ModelConfig cfg = tiny_config(1, 2, 4, 0);
    const CachePool pool = synthetic_pool(rng, cfg, 4);
    const auto path = temp_file("adshot_test_trunc_src.bin");
    save_pool(pool, path.string());
    const auto full_size = std::filesystem::file_size(path);

    std::uniform_int_distribution<std::uintmax_t> cut_dist(0, full_size - 1);
    const auto cut_path = temp_file("adshot_test_trunc.bin");
    for (int trial = 0; trial < 50; ++trial) {
        const auto cut = cut_dist(rng);
        std::filesystem::copy_file(path, cut_path,
                                   std::filesystem::copy_options::overwrite_existing);
        std::filesystem::resize_file(cut_path, cut);
        try {
            load_pool(cut_path.string(), cfg, pool.fingerprint);
            FAIL("expected truncation at ", cut, " to be rejected");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("offset") != std::string::npos);
        }
    }
    std::filesystem::remove(path);
    std::filesystem::remove(cut_path);
}
