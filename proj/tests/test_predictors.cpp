#include <doctest.h>

#include <algorithm>
#include <vector>

#include "naive_model.hpp"
#include "specdec/predictors.hpp"
#include "specdec/rng.hpp"
#include "specdec/tokenizer.hpp"

using namespace specdec;

namespace {

ModelConfig small_config(uint64_t seed) {
    ModelConfig cfg;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.head_dim = 8;
    cfg.max_positions = 48;
    cfg.init_seed = seed;
    return cfg;
}

// Exhaustive reference for prompt lookup: try every earlier start position,
// rightmost first.
TokenSequence lookup_reference(const TokenSequence& ctx, int match_len, int copy_len) {
    int n = static_cast<int>(ctx.size());
    int suffix_start = n - match_len;
    if (suffix_start <= 0) return {};
    for (int start = suffix_start - 1; start >= 0; --start) {
        bool hit = true;
        for (int j = 0; j < match_len; ++j) {
            if (ctx[start + j] != ctx[suffix_start + j]) {
                hit = false;
                break;
            }
        }
        if (!hit) continue;
        int from = start + match_len;
        int take = std::min(copy_len, n - from);
        return TokenSequence(ctx.begin() + from, ctx.begin() + from + take);
    }
    return {};
}

}  // namespace

TEST_CASE("draft rollout returns exactly k tokens and is repeatable") {
    Model draft = Model::init(small_config(0xD12AF7));
    TokenSequence ctx = {tok::kBos, 10, 20, 30};
    TokenSequence a = draft_predict(ctx, 4, draft);
    TokenSequence b = draft_predict(ctx, 4, draft);
    REQUIRE(a.size() == 4);
    CHECK(a == b);
    // A shorter rollout is a prefix of a longer one (greedy is greedy).
    TokenSequence c = draft_predict(ctx, 2, draft);
    CHECK(TokenSequence(a.begin(), a.begin() + 2) == c);
}

TEST_CASE("draft rollout equals the full-recompute greedy reference") {
    Model draft = Model::init(small_config(0xD12AF8));
    TokenSequence ctx = {tok::kBos, 7, 99, 130, 42};
    TokenSequence got = draft_predict(ctx, 6, draft);
    TokenSequence expected = testsupport::naive_greedy(draft, ctx, 6, false);
    CHECK(got == expected);
}

TEST_CASE("draft rollout refuses bad arguments") {
    Model draft = Model::init(small_config(0xD12AF9));
    CHECK_THROWS_AS(draft_predict({tok::kBos, 5}, 0, draft), ContractError);
    CHECK_THROWS_AS(draft_predict({}, 3, draft), ContractError);
    // Context plus rollout walking past max_positions fails loudly.
    TokenSequence long_ctx(46, 50);
    long_ctx[0] = tok::kBos;
    CHECK_THROWS_AS(draft_predict(long_ctx, 5, draft), CapacityError);
}

TEST_CASE("prompt lookup copies what followed the previous occurrence") {
    // trailing bigram (8, 9) occurred at the start; (10, 8, 9) follows it.
    TokenSequence ctx = {8, 9, 10, 8, 9};
    CHECK(retrieval_predict(ctx, 2, 3) == TokenSequence{10, 8, 9});
    CHECK(retrieval_predict(ctx, 2, 1) == TokenSequence{10});
    // copy_len larger than what remains: clipped to the end.
    CHECK(retrieval_predict(ctx, 2, 99) == TokenSequence{10, 8, 9});
}

TEST_CASE("prompt lookup prefers the rightmost earlier occurrence") {
    TokenSequence ctx = {4, 5, 100, 4, 5, 200, 4, 5};
    TokenSequence got = retrieval_predict(ctx, 2, 1);
    REQUIRE(got.size() == 1);
    CHECK(got[0] == 200);
}

TEST_CASE("prompt lookup returns nothing when there is nothing to find") {
    CHECK(retrieval_predict({1, 2, 3, 4}, 2, 4).empty());   // no repeat
    CHECK(retrieval_predict({5, 5}, 2, 4).empty());          // suffix is the whole context
    CHECK(retrieval_predict({5}, 2, 4).empty());             // shorter than the gram
    CHECK(retrieval_predict({}, 1, 4).empty());
}

TEST_CASE("prompt lookup validates its window sizes") {
    CHECK_THROWS_AS(retrieval_predict({1, 2, 3}, 0, 4), ContractError);
    CHECK_THROWS_AS(retrieval_predict({1, 2, 3}, 1, 0), ContractError);
}

TEST_CASE("prompt lookup agrees with an exhaustive scan on random contexts") {
    SplitMix64 rng(0x100Cull << 16);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + static_cast<int>(rng.next_u64() % 40);
        int alphabet = 2 + static_cast<int>(rng.next_u64() % 5);
        TokenSequence ctx(n);
        for (int i = 0; i < n; ++i) {
            ctx[i] = 10 + static_cast<TokenId>(rng.next_u64() % alphabet);
        }
        int match_len = 1 + static_cast<int>(rng.next_u64() % 4);
        int copy_len = 1 + static_cast<int>(rng.next_u64() % 8);
        TokenSequence got = retrieval_predict(ctx, match_len, copy_len);
        CHECK(got == lookup_reference(ctx, match_len, copy_len));
        CHECK(static_cast<int>(got.size()) <= copy_len);
    }
}

TEST_CASE("synthetic predictor is deterministic in its step seed") {
    Model target = Model::init(small_config(0x5E55));
    TokenSequence ctx = {tok::kBos, 11, 12, 13};
    TokenSequence a = synthetic_predict(ctx, 6, target, 0.7, 42);
    TokenSequence b = synthetic_predict(ctx, 6, target, 0.7, 42);
    REQUIRE(a.size() == 6);
    CHECK(a == b);
    // Some seed in a small range must flip at least one coin differently.
    bool any_differs = false;
    for (uint64_t seed = 43; seed < 53 && !any_differs; ++seed) {
        any_differs = synthetic_predict(ctx, 6, target, 0.7, seed) != a;
    }
    CHECK(any_differs);
}

TEST_CASE("synthetic accuracy zero corrupts every position") {
    Model target = Model::init(small_config(0x5E56));
    TokenSequence ctx = {tok::kBos, 21, 22};
    TokenSequence truth = draft_predict(ctx, 5, target);
    TokenSequence got = synthetic_predict(ctx, 5, target, 0.0, 7);
    REQUIRE(got.size() == truth.size());
    for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i] == (truth[i] + 1) % target.config().vocab_size);
        CHECK(got[i] != truth[i]);
    }
}

TEST_CASE("synthetic predictions always stay inside the vocabulary") {
    Model target = Model::init(small_config(0x5E57));
    TokenSequence ctx = {tok::kBos, 33};
    for (uint64_t seed = 0; seed < 20; ++seed) {
        for (TokenId t : synthetic_predict(ctx, 4, target, 0.5, seed)) {
            CHECK(t >= 0);
            CHECK(t < target.config().vocab_size);
        }
    }
}

TEST_CASE("synthetic accuracy must leave room for rejection") {
    Model target = Model::init(small_config(0x5E58));
    TokenSequence ctx = {tok::kBos, 1};
    CHECK_THROWS_AS(synthetic_predict(ctx, 3, target, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(synthetic_predict(ctx, 3, target, -0.1, 0), ConfigError);
}
