#include "specdec/ragged.hpp"

namespace specdec {
namespace ragged {

RaggedBatch concatenate_inputs(const std::vector<TokenSequence>& per_sample) {
    SPECDEC_CHECK(!per_sample.empty(), ContractError, "batch must have at least one sample");
    RaggedBatch out;
    out.token_nums_per_sample.resize(per_sample.size(), 0);
    for (size_t i = 0; i < per_sample.size(); ++i) {
        const TokenSequence& toks = per_sample[i];
        out.total_input_token_nums += static_cast<int>(toks.size());
        out.token_nums_per_sample[i] = static_cast<int>(toks.size());
        out.concatenated_tokens.insert(out.concatenated_tokens.end(), toks.begin(), toks.end());
    }
    return out;
}

TokenSlot restore_indices(const std::vector<int>& counts, int flat_index) {
    SPECDEC_CHECK(flat_index >= 0, ContractError, "flat index must be nonnegative");
    const int batch_size = static_cast<int>(counts.size());
    TokenSlot slot;
    slot.original_sequence_position = flat_index;
    slot.original_batch_index = 0;
    for (int i = 0; i < batch_size; ++i) {
        if (slot.original_sequence_position >= counts[i]) {
            slot.original_batch_index += 1;
            slot.original_sequence_position -= counts[i];
        } else {
            break;
        }
    }
    SPECDEC_CHECK(slot.original_batch_index < batch_size, ContractError,
                  "flat index " + std::to_string(flat_index) + " outside batch");
    return slot;
}

}  // namespace ragged
}  // namespace specdec
