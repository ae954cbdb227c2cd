#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "adshot/tokenizer.hpp"

using namespace adshot;

TEST_CASE("byte values map to token ids with consecutive positions") {
    const TokenSequence seq = tokenize("ab");
    CHECK(seq.tokens == std::vector<int>{97, 98});
    CHECK(seq.positions == std::vector<int>{0, 1});
}

TEST_CASE("empty text gives an empty sequence") {
    const TokenSequence seq = tokenize("");
    CHECK(seq.empty());
    CHECK(detokenize(seq.tokens).empty());
}

TEST_CASE("round trip on random byte strings") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> len_dist(0, 64);
    std::uniform_int_distribution<int> byte_dist(0, 255);
    for (int trial = 0; trial < 1000; ++trial) {
        std::string s(len_dist(rng), '\0');
        for (auto& c : s) c = static_cast<char>(byte_dist(rng));
        CHECK(detokenize(tokenize(s).tokens) == s);
    }
}

TEST_CASE("specials render as markers and out-of-range ids are rejected") {
    const std::vector<int> specials = {kBosToken, kEosToken, kYesToken, kNoToken};
    CHECK(detokenize(specials) == "<bos><eos><yes><no>");
    CHECK_THROWS_AS(detokenize(std::vector<int>{260}), std::invalid_argument);
    CHECK_THROWS_AS(detokenize(std::vector<int>{-1}), std::invalid_argument);
}

TEST_CASE("start position offsets every token") {
    const TokenSequence seq = tokenize("xyz", 10);
    CHECK(seq.positions == std::vector<int>{10, 11, 12});
}

TEST_CASE("append_tokens renumbers from the end of the left sequence") {
    TokenSequence lhs = tokenize("ab", 5);
    append_tokens(lhs, tokenize("cd"));
    CHECK(lhs.tokens == std::vector<int>{97, 98, 99, 100});
    CHECK(lhs.positions == std::vector<int>{5, 6, 7, 8});
}
