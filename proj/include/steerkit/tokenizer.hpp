#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steerkit/errors.hpp"

namespace steerkit {

using TokenId = int32_t;
using TokenSequence = std::vector<TokenId>;

// Byte-level tokenizer: token id == byte value, plus one special id.
// BOS (id 256) is prepended to every encoded prompt and doubles as the
// EOS id during generation. Requires vocab_size >= 257.
struct ByteTokenizer {
    static constexpr TokenId kBos = 256;
    static constexpr TokenId kEos = 256;
    static constexpr int kVocabFloor = 257;

    // Raw bytes -> ids, no BOS. Used for continuations in teacher forcing.
    static TokenSequence encode_bytes(const std::string& text) {
        TokenSequence out;
        out.reserve(text.size());
        for (unsigned char c : text) out.push_back(static_cast<TokenId>(c));
        return out;
    }

    static TokenSequence tokenize(const std::string& text) {
        TokenSequence out;
        out.reserve(text.size() + 1);
        out.push_back(kBos);
        for (unsigned char c : text) out.push_back(static_cast<TokenId>(c));
        return out;
    }

    // Ids outside the byte range (BOS/EOS) are dropped.
    static std::string detokenize(const TokenSequence& tokens) {
        std::string out;
        out.reserve(tokens.size());
        for (TokenId t : tokens) {
            if (t < 0) throw VocabError("negative token id " + std::to_string(t));
            if (t <= 0xff) out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
        }
        return out;
    }
};

}  // namespace steerkit
