#pragma once

#include <vector>

#include "specdec/common.hpp"
#include "specdec/tokenizer.hpp"

namespace specdec {

// Variable-length per-sample inputs flattened into one token list. Attention
// later restores each flat token's (batch, position) identity, so no sample
// has to be padded to the longest one.
struct RaggedBatch {
    std::vector<TokenId> concatenated_tokens;
    std::vector<int> token_nums_per_sample;
    int total_input_token_nums = 0;

    int batch_size() const { return static_cast<int>(token_nums_per_sample.size()); }
};

// A flat token's original identity: which sample it belongs to and its offset
// within that sample's current input chunk.
struct TokenSlot {
    int original_batch_index = 0;
    int original_sequence_position = 0;

    bool operator==(const TokenSlot&) const = default;
};

namespace ragged {

// Concatenate per-sample inputs in order. Zero-length samples are legal and
// keep their count entry.
RaggedBatch concatenate_inputs(const std::vector<TokenSequence>& per_sample);

// Walk samples subtracting counts until the flat index fits. Throws
// ContractError when flat_index is outside [0, total).
TokenSlot restore_indices(const std::vector<int>& counts, int flat_index);

// Number of cache entries visible to a token, its own fresh entry included.
inline int attention_extent(const TokenSlot& slot, int cache_committed_len) {
    return cache_committed_len + slot.original_sequence_position + 1;
}

}  // namespace ragged
}  // namespace specdec
