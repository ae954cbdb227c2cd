#include "adshot/tokenizer.hpp"

#include <stdexcept>

namespace adshot {

TokenSequence tokenize(std::string_view text, int start_pos) {
    TokenSequence seq;
    seq.tokens.reserve(text.size());
    seq.positions.reserve(text.size());
    int pos = start_pos;
    for (unsigned char byte : text) {
        seq.tokens.push_back(static_cast<int>(byte));
        seq.positions.push_back(pos++);
    }
    return seq;
}

std::string detokenize(std::span<const int> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int id : tokens) {
        if (id < 0 || id >= kVocabSize) {
            throw std::invalid_argument("detokenize: token id " + std::to_string(id) +
                                        " outside vocabulary");
        }
        switch (id) {
            case kBosToken: out += "<bos>"; break;
            case kEosToken: out += "<eos>"; break;
            case kYesToken: out += "<yes>"; break;
            case kNoToken: out += "<no>"; break;
            default: out += static_cast<char>(static_cast<unsigned char>(id));
        }
    }
    return out;
}

void append_tokens(TokenSequence& lhs, const TokenSequence& rhs) {
    int pos = lhs.positions.empty() ? 0 : lhs.positions.back() + 1;
    for (int tok : rhs.tokens) {
        lhs.tokens.push_back(tok);
        lhs.positions.push_back(pos++);
    }
}

} // namespace adshot
