#include "specdec/tokenizer.hpp"

namespace specdec {
namespace tok {

TokenSequence tokenize(const std::string& text) {
    TokenSequence out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        out.push_back(static_cast<TokenId>(c) + kByteOffset);
    }
    return out;
}

std::string detokenize(const TokenSequence& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (TokenId id : tokens) {
        SPECDEC_CHECK(id >= 0 && id < kVocabSize, ContractError,
                      "token id " + std::to_string(id) + " outside vocabulary");
        SPECDEC_CHECK(id >= kByteOffset, ContractError,
                      "special token " + std::to_string(id) + " has no byte form");
        out.push_back(static_cast<char>(id - kByteOffset));
    }
    return out;
}

}  // namespace tok
}  // namespace specdec
