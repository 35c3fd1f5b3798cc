#include "specdec/predictors.hpp"

#include "specdec/kv_cache.hpp"
#include "specdec/ragged.hpp"
#include "specdec/rng.hpp"

namespace specdec {

TokenSequence draft_predict(const TokenSequence& context, int k, const Model& draft) {
    SPECDEC_CHECK(k >= 1, ContractError, "draft length must be >= 1");
    SPECDEC_CHECK(!context.empty(), ContractError, "draft prediction needs a context");
    int len = static_cast<int>(context.size());
    SPECDEC_CHECK(len + k <= draft.config().max_positions, CapacityError,
                  "context plus draft length exceeds max_positions");

    UnpadArena cache(draft.config().num_layers, 1, draft.config().max_positions,
                     draft.config().hidden());
    RaggedBatch prefill = ragged::concatenate_inputs({context});
    std::vector<TokenSlot> slots(context.size());
    for (int i = 0; i < len; ++i) slots[i] = TokenSlot{0, i};
    std::vector<LogitsRow> rows = draft.forward(prefill, cache, slots);
    cache.commit_accepted(0, len);

    TokenSequence drafts;
    drafts.reserve(k);
    TokenId next = greedy_next(rows.back());
    drafts.push_back(next);
    for (int i = 1; i < k; ++i) {
        RaggedBatch step = ragged::concatenate_inputs({{next}});
        int pos = cache.committed_len(0);
        rows = draft.forward(step, cache, {TokenSlot{0, pos}});
        cache.commit_accepted(0, 1);
        next = greedy_next(rows[0]);
        drafts.push_back(next);
    }
    return drafts;
}

TokenSequence retrieval_predict(const TokenSequence& context, int match_len, int copy_len) {
    SPECDEC_CHECK(match_len >= 1, ContractError, "match length must be >= 1");
    SPECDEC_CHECK(copy_len >= 1, ContractError, "copy length must be >= 1");
    int len = static_cast<int>(context.size());
    int suffix_start = len - match_len;
    if (suffix_start <= 0) return {};
    for (int start = suffix_start - 1; start >= 0; --start) {
        bool match = true;
        for (int i = 0; i < match_len; ++i) {
            if (context[start + i] != context[suffix_start + i]) {
                match = false;
                break;
            }
        }
        if (!match) continue;
        int from = start + match_len;
        int take = std::min(copy_len, len - from);
        return TokenSequence(context.begin() + from, context.begin() + from + take);
    }
    return {};
}

TokenSequence synthetic_predict(const TokenSequence& context, int k, const Model& target,
                                double accuracy, uint64_t step_seed) {
    SPECDEC_CHECK(accuracy >= 0.0 && accuracy < 1.0, ConfigError,
                  "predictor accuracy must lie in [0, 1)");
    TokenSequence drafts = draft_predict(context, k, target);
    SplitMix64 rng(step_seed);
    int vocab = target.config().vocab_size;
    for (TokenId& t : drafts) {
        if (rng.next_unit_double() >= accuracy) t = (t + 1) % vocab;
    }
    return drafts;
}

}  // namespace specdec
