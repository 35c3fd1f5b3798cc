#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specdec/common.hpp"
#include "specdec/kv_cache.hpp"
#include "specdec/ragged.hpp"
#include "specdec/tokenizer.hpp"

namespace specdec {

struct ModelConfig {
    int num_layers = 2;
    int num_heads = 2;
    int head_dim = 16;
    int vocab_size = tok::kVocabSize;
    int max_positions = 512;
    uint64_t init_seed = 0xD5EED;

    int hidden() const { return num_heads * head_dim; }
    int mlp_hidden() const { return 4 * hidden(); }
    void validate() const;  // throws ConfigError
};

struct LayerWeights {
    std::vector<float> ln1_gain, ln1_bias;
    std::vector<float> wq, bq, wk, bk, wv, bv, wo, bo;
    std::vector<float> ln2_gain, ln2_bias;
    std::vector<float> w_fc, b_fc, w_proj, b_proj;
};

using LogitsRow = std::vector<float>;

// How one input token goes through the forward pass: which cache lane it
// belongs to, which position embedding it gets, which cache slot it writes
// (or, with store=false, merely reserves as a masked hole), and how far its
// attention may look. Attention always covers real entries in slots
// [0, write_slot]; for the unpad layout write_slot equals logical_pos.
struct TokenPlan {
    int sample = 0;
    int logical_pos = 0;
    int write_slot = 0;
    bool store = true;
};

// Numerically safe softmax (max-subtracted). Throws ContractError on empty.
std::vector<float> softmax(const std::vector<float>& scores);

// Argmax with ties broken toward the lowest token id.
TokenId greedy_next(const LogitsRow& row);

// Small decoder-only transformer, fp32 end to end. Every per-token
// computation is a pure function of (token id, logical position, visible
// prefix); reductions always run in ascending slot order, so the same tokens
// produce bit-identical logits no matter how the batch is laid out.
class Model {
public:
    static Model init(const ModelConfig& config);
    static Model load(const std::string& path);
    void save(const std::string& path) const;

    const ModelConfig& config() const { return config_; }
    uint64_t weight_checksum() const;

    // Ragged-batch entry point: slot i of the concatenated batch must satisfy
    // restore_indices(batch.token_nums_per_sample, i) and sit right after the
    // sample's committed cache extent. Returns one logits row per token, in
    // concatenated order.
    std::vector<LogitsRow> forward(const RaggedBatch& batch, CacheArena& cache,
                                   const std::vector<TokenSlot>& slots) const;

    // Plan-level entry point for callers that manage slots themselves (the
    // aligned decode path with its masked pad rows goes through here).
    std::vector<LogitsRow> forward_planned(const std::vector<TokenId>& tokens,
                                           const std::vector<TokenPlan>& plans,
                                           CacheArena& cache) const;

    // Weight access for independent reimplementations in tests.
    const std::vector<float>& token_embedding() const { return token_embedding_; }
    const std::vector<float>& position_embedding() const { return position_embedding_; }
    const LayerWeights& layer(int i) const { return layers_.at(i); }
    const std::vector<float>& final_ln_gain() const { return final_ln_gain_; }
    const std::vector<float>& final_ln_bias() const { return final_ln_bias_; }
    const std::vector<float>& lm_head() const { return lm_head_; }

private:
    explicit Model(const ModelConfig& config);
    void allocate();
    // All weight tensors in their fixed declaration order (the order used by
    // seeding, checkpoints, and the checksum).
    std::vector<std::vector<float>*> tensor_list();
    std::vector<const std::vector<float>*> tensor_list() const;

    ModelConfig config_;
    std::vector<float> token_embedding_;     // [vocab, hidden]
    std::vector<float> position_embedding_;  // [max_positions, hidden]
    std::vector<LayerWeights> layers_;
    std::vector<float> final_ln_gain_, final_ln_bias_;
    std::vector<float> lm_head_;             // [vocab, hidden]
};

}  // namespace specdec
