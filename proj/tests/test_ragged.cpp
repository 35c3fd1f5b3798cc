#include <doctest.h>

#include "specdec/ragged.hpp"
#include "specdec/rng.hpp"

using namespace specdec;

TEST_CASE("concatenation keeps sample order and counts") {
    RaggedBatch batch =
        ragged::concatenate_inputs({{10, 11, 12, 13, 14}, {20, 21}});
    CHECK(batch.concatenated_tokens == TokenSequence{10, 11, 12, 13, 14, 20, 21});
    CHECK(batch.token_nums_per_sample == std::vector<int>{5, 2});
    CHECK(batch.total_input_token_nums == 7);
    CHECK(batch.batch_size() == 2);
}

TEST_CASE("zero-length samples keep their count entry") {
    RaggedBatch batch = ragged::concatenate_inputs({{1}, {}, {2, 3}});
    CHECK(batch.concatenated_tokens == TokenSequence{1, 2, 3});
    CHECK(batch.token_nums_per_sample == std::vector<int>{1, 0, 2});
    CHECK(ragged::restore_indices(batch.token_nums_per_sample, 1) == TokenSlot{2, 0});
    CHECK(ragged::restore_indices(batch.token_nums_per_sample, 0) == TokenSlot{0, 0});
}

TEST_CASE("an empty batch is rejected") {
    CHECK_THROWS_AS(ragged::concatenate_inputs({}), ContractError);
}

TEST_CASE("restore walks counts by subtraction") {
    std::vector<int> counts{5, 2};
    CHECK(ragged::restore_indices(counts, 0) == TokenSlot{0, 0});
    CHECK(ragged::restore_indices(counts, 4) == TokenSlot{0, 4});
    CHECK(ragged::restore_indices(counts, 5) == TokenSlot{1, 0});
    CHECK(ragged::restore_indices(counts, 6) == TokenSlot{1, 1});
    CHECK_THROWS_AS(ragged::restore_indices(counts, 7), ContractError);
    CHECK_THROWS_AS(ragged::restore_indices(counts, -1), ContractError);
}

TEST_CASE("restore matches a prefix-sum oracle on random count lists") {
    SplitMix64 rng(0x5107);
    for (int trial = 0; trial < 200; ++trial) {
        int samples = 1 + static_cast<int>(rng.next_u64() % 12);
        std::vector<int> counts(samples);
        int total = 0;
        for (int& c : counts) {
            c = static_cast<int>(rng.next_u64() % 7);  // zero-length allowed
            total += c;
        }
        if (total == 0) continue;
        // Oracle: materialize the flat index -> slot table from prefix sums.
        std::vector<TokenSlot> table;
        for (int s = 0; s < samples; ++s) {
            for (int pos = 0; pos < counts[s]; ++pos) table.push_back(TokenSlot{s, pos});
        }
        for (int flat = 0; flat < total; ++flat) {
            CHECK(ragged::restore_indices(counts, flat) == table[flat]);
        }
        CHECK_THROWS_AS(ragged::restore_indices(counts, total), ContractError);
    }
}

TEST_CASE("restore inverts concatenation token by token") {
    SplitMix64 rng(0xC0C0);
    for (int trial = 0; trial < 50; ++trial) {
        int samples = 1 + static_cast<int>(rng.next_u64() % 5);
        std::vector<TokenSequence> inputs(samples);
        for (TokenSequence& seq : inputs) {
            int len = static_cast<int>(rng.next_u64() % 6);
            for (int i = 0; i < len; ++i) {
                seq.push_back(static_cast<TokenId>(rng.next_u64() % 259));
            }
        }
        RaggedBatch batch = ragged::concatenate_inputs(inputs);
        for (int flat = 0; flat < batch.total_input_token_nums; ++flat) {
            TokenSlot slot = ragged::restore_indices(batch.token_nums_per_sample, flat);
            CHECK(batch.concatenated_tokens[flat] ==
                  inputs[slot.original_batch_index][slot.original_sequence_position]);
        }
    }
}

TEST_CASE("attention extent counts the committed prefix plus own input prefix") {
    CHECK(ragged::attention_extent(TokenSlot{0, 0}, 0) == 1);
    CHECK(ragged::attention_extent(TokenSlot{3, 2}, 7) == 10);
    CHECK(ragged::attention_extent(TokenSlot{1, 0}, 41) == 42);
}
