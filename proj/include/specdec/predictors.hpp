#pragma once

#include <cstdint>

#include "specdec/model.hpp"
#include "specdec/tokenizer.hpp"

namespace specdec {

// Greedy k-token rollout of the draft model from the given context. Pure:
// builds a fresh cache per call, so repeated calls with the same context
// return the same tokens.
TokenSequence draft_predict(const TokenSequence& context, int k, const Model& draft);

// Prompt-lookup prediction: find the rightmost earlier occurrence of the
// context's trailing match_len-gram and copy up to copy_len tokens that
// follow it. Returns an empty sequence when no earlier occurrence exists.
TokenSequence retrieval_predict(const TokenSequence& context, int match_len, int copy_len);

// Test predictor with a dialable hit rate: takes the target model's own
// greedy rollout and keeps each token with probability `accuracy`, otherwise
// replaces it with a token the target will reject. Every position is an
// independent coin flip of the stream seeded by step_seed, which makes the
// acceptance length exactly geometric (truncated at k+1).
TokenSequence synthetic_predict(const TokenSequence& context, int k, const Model& target,
                                double accuracy, uint64_t step_seed);

}  // namespace specdec
