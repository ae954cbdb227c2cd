#pragma once
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace adshot {

// Byte-level vocabulary: token id == byte value, plus four reserved specials.
inline constexpr int kVocabSize = 260;
inline constexpr int kBosToken = 256;
inline constexpr int kEosToken = 257;
inline constexpr int kYesToken = 258;
inline constexpr int kNoToken = 259;

struct TokenSequence {
    std::vector<int> tokens;
    std::vector<int> positions; // logical position of each token

    int size() const { return static_cast<int>(tokens.size()); }
    bool empty() const { return tokens.empty(); }
};

// One token per byte; positions start_pos, start_pos+1, ...
TokenSequence tokenize(std::string_view text, int start_pos = 0);

// Inverse of tokenize for byte tokens; specials render as <bos>/<eos>/<yes>/<no>.
// Throws std::invalid_argument on ids outside [0, kVocabSize).
std::string detokenize(std::span<const int> tokens);

// Concatenation that renumbers positions consecutively from the end of `lhs`.
void append_tokens(TokenSequence& lhs, const TokenSequence& rhs);

} // namespace adshot
