#include <doctest.h>

#include "specdec/rng.hpp"
#include "specdec/tokenizer.hpp"

using namespace specdec;

TEST_CASE("special ids precede the byte range") {
    CHECK(tok::kBos == 0);
    CHECK(tok::kEos == 1);
    CHECK(tok::kPad == 2);
    CHECK(tok::kByteOffset == 3);
    CHECK(tok::kVocabSize == 259);
    CHECK(tok::is_special(tok::kBos));
    CHECK(tok::is_special(tok::kPad));
    CHECK_FALSE(tok::is_special(tok::kByteOffset));
    CHECK_FALSE(tok::is_special(tok::kVocabSize - 1));
    CHECK_FALSE(tok::is_special(-1));
}

TEST_CASE("bytes map to offset ids") {
    TokenSequence ids = tok::tokenize("Ab");
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == 'A' + tok::kByteOffset);
    CHECK(ids[1] == 'b' + tok::kByteOffset);
}

TEST_CASE("round trip over plain text and the empty string") {
    for (const std::string& s : {std::string{"hello, world"}, std::string{},
                                std::string{"line\nwith\tcontrols\x01"}}) {
        CHECK(tok::detokenize(tok::tokenize(s)) == s);
    }
}

TEST_CASE("round trip over every byte value") {
    std::string all;
    for (int b = 0; b < 256; ++b) all.push_back(static_cast<char>(b));
    TokenSequence ids = tok::tokenize(all);
    REQUIRE(ids.size() == 256);
    for (int b = 0; b < 256; ++b) CHECK(ids[b] == b + tok::kByteOffset);
    CHECK(tok::detokenize(ids) == all);
}

TEST_CASE("round trip over random binary blobs") {
    SplitMix64 rng(0xB10B);
    for (int trial = 0; trial < 8; ++trial) {
        std::string blob;
        for (int i = 0; i < 1024; ++i) {
            blob.push_back(static_cast<char>(rng.next_u64() & 0xFF));
        }
        CHECK(tok::detokenize(tok::tokenize(blob)) == blob);
    }
}

TEST_CASE("detokenize rejects ids without a byte form") {
    CHECK_THROWS_AS(tok::detokenize({tok::kBos}), ContractError);
    CHECK_THROWS_AS(tok::detokenize({tok::kEos}), ContractError);
    CHECK_THROWS_AS(tok::detokenize({tok::kPad}), ContractError);
    CHECK_THROWS_AS(tok::detokenize({tok::kVocabSize}), ContractError);
    CHECK_THROWS_AS(tok::detokenize({-1}), ContractError);
    CHECK_THROWS_AS(tok::detokenize({static_cast<TokenId>(1000)}), ContractError);
}
