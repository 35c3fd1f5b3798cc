#pragma once

#include <string>
#include <vector>

#include "specdec/common.hpp"

namespace specdec {

using TokenSequence = std::vector<TokenId>;

// Byte-level tokenizer: three specials first, then the 256 byte values.
// detokenize(tokenize(s)) == s for any byte string.
namespace tok {

constexpr TokenId kBos = 0;
constexpr TokenId kEos = 1;
constexpr TokenId kPad = 2;
constexpr TokenId kByteOffset = 3;
constexpr int kVocabSize = 259;  // 256 bytes + BOS/EOS/PAD

TokenSequence tokenize(const std::string& text);

// Maps byte tokens back to bytes. Throws ContractError on ids outside
// [0, kVocabSize) and on specials (they have no byte representation).
std::string detokenize(const TokenSequence& tokens);

inline bool is_special(TokenId id) { return id >= 0 && id < kByteOffset; }

}  // namespace tok
}  // namespace specdec
