#include "specdec/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "specdec/rng.hpp"

namespace specdec {

void ModelConfig::validate() const {
    SPECDEC_CHECK(num_layers >= 1, ConfigError, "num_layers must be >= 1");
    SPECDEC_CHECK(num_heads >= 1, ConfigError, "num_heads must be >= 1");
    SPECDEC_CHECK(head_dim >= 1, ConfigError, "head_dim must be >= 1");
    SPECDEC_CHECK(vocab_size >= 2, ConfigError, "vocab_size must be >= 2");
    SPECDEC_CHECK(max_positions >= 1, ConfigError, "max_positions must be >= 1");
}

std::vector<float> softmax(const std::vector<float>& scores) {
    SPECDEC_CHECK(!scores.empty(), ContractError, "softmax over an empty set");
    float max_score = scores[0];
    for (float s : scores) max_score = std::max(max_score, s);
    std::vector<float> out(scores.size());
    float denom = 0.0f;
    for (size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - max_score);
        denom += out[i];
    }
    for (float& w : out) w /= denom;
    return out;
}

TokenId greedy_next(const LogitsRow& row) {
    SPECDEC_CHECK(!row.empty(), ContractError, "argmax over an empty row");
    size_t best = 0;
    for (size_t i = 1; i < row.size(); ++i) {
        if (row[i] > row[best]) best = i;
    }
    return static_cast<TokenId>(best);
}

namespace {

// y = W x + b with W row-major [out_dim, in_dim]; accumulation runs over
// ascending input index so results do not depend on batch layout.
void linear(const float* w, const float* b, int out_dim, int in_dim, const float* x,
            float* y) {
    for (int o = 0; o < out_dim; ++o) {
        float acc = b != nullptr ? b[o] : 0.0f;
        const float* row = w + static_cast<size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

void layer_norm(const float* x, const float* gain, const float* bias, int dim, float* y) {
    float mean = 0.0f;
    for (int i = 0; i < dim; ++i) mean += x[i];
    mean /= static_cast<float>(dim);
    float var = 0.0f;
    for (int i = 0; i < dim; ++i) {
        float d = x[i] - mean;
        var += d * d;
    }
    var /= static_cast<float>(dim);
    float inv = 1.0f / std::sqrt(var + 1e-5f);
    for (int i = 0; i < dim; ++i) y[i] = (x[i] - mean) * inv * gain[i] + bias[i];
}

float gelu(float x) {
    const float c = 0.7978845608028654f;  // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
}

void fill_uniform(std::vector<float>& tensor, SplitMix64& rng, float limit) {
    for (float& w : tensor) w = rng.next_symmetric(limit);
}

float xavier_limit(int fan_in, int fan_out) {
    return std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
}

}  // namespace

Model::Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    allocate();
}

void Model::allocate() {
    int h = config_.hidden();
    int m = config_.mlp_hidden();
    token_embedding_.assign(static_cast<size_t>(config_.vocab_size) * h, 0.0f);
    position_embedding_.assign(static_cast<size_t>(config_.max_positions) * h, 0.0f);
    layers_.resize(config_.num_layers);
    for (LayerWeights& lw : layers_) {
        lw.ln1_gain.assign(h, 1.0f);
        lw.ln1_bias.assign(h, 0.0f);
        lw.wq.assign(static_cast<size_t>(h) * h, 0.0f);
        lw.bq.assign(h, 0.0f);
        lw.wk.assign(static_cast<size_t>(h) * h, 0.0f);
        lw.bk.assign(h, 0.0f);
        lw.wv.assign(static_cast<size_t>(h) * h, 0.0f);
        lw.bv.assign(h, 0.0f);
        lw.wo.assign(static_cast<size_t>(h) * h, 0.0f);
        lw.bo.assign(h, 0.0f);
        lw.ln2_gain.assign(h, 1.0f);
        lw.ln2_bias.assign(h, 0.0f);
        lw.w_fc.assign(static_cast<size_t>(m) * h, 0.0f);
        lw.b_fc.assign(m, 0.0f);
        lw.w_proj.assign(static_cast<size_t>(h) * m, 0.0f);
        lw.b_proj.assign(h, 0.0f);
    }
    final_ln_gain_.assign(h, 1.0f);
    final_ln_bias_.assign(h, 0.0f);
    lm_head_.assign(static_cast<size_t>(config_.vocab_size) * h, 0.0f);
}

Model Model::init(const ModelConfig& config) {
    Model model(config);
    int h = config.hidden();
    int m = config.mlp_hidden();
    // One stream, tensors drawn in declaration order; layer norms and biases
    // stay at their identity values.
    SplitMix64 rng(config.init_seed);
    fill_uniform(model.token_embedding_, rng, 0.1f);
    fill_uniform(model.position_embedding_, rng, 0.1f);
    for (LayerWeights& lw : model.layers_) {
        fill_uniform(lw.wq, rng, xavier_limit(h, h));
        fill_uniform(lw.wk, rng, xavier_limit(h, h));
        fill_uniform(lw.wv, rng, xavier_limit(h, h));
        fill_uniform(lw.wo, rng, xavier_limit(h, h));
        fill_uniform(lw.w_fc, rng, xavier_limit(h, m));
        fill_uniform(lw.w_proj, rng, xavier_limit(m, h));
    }
    fill_uniform(model.lm_head_, rng, xavier_limit(h, config.vocab_size));
    return model;
}

namespace {

constexpr char kMagic[4] = {'S', 'D', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* data, size_t bytes) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

void read_bytes(std::ifstream& in, void* data, size_t bytes, const std::string& what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    SPECDEC_CHECK(static_cast<size_t>(in.gcount()) == bytes, IoError,
                  "checkpoint truncated while reading " + what);
}

void write_tensor(std::ofstream& out, const std::vector<float>& t) {
    write_bytes(out, t.data(), t.size() * sizeof(float));
}

void read_tensor(std::ifstream& in, std::vector<float>& t, const std::string& what) {
    read_bytes(in, t.data(), t.size() * sizeof(float), what);
}

}  // namespace

std::vector<std::vector<float>*> Model::tensor_list() {
    std::vector<std::vector<float>*> out{&token_embedding_, &position_embedding_};
    for (LayerWeights& lw : layers_) {
        out.insert(out.end(), {&lw.ln1_gain, &lw.ln1_bias, &lw.wq, &lw.bq, &lw.wk, &lw.bk,
                               &lw.wv, &lw.bv, &lw.wo, &lw.bo, &lw.ln2_gain, &lw.ln2_bias,
                               &lw.w_fc, &lw.b_fc, &lw.w_proj, &lw.b_proj});
    }
    out.insert(out.end(), {&final_ln_gain_, &final_ln_bias_, &lm_head_});
    return out;
}

std::vector<const std::vector<float>*> Model::tensor_list() const {
    auto mutable_list = const_cast<Model*>(this)->tensor_list();
    return {mutable_list.begin(), mutable_list.end()};
}

void Model::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    SPECDEC_CHECK(out.good(), IoError, "cannot open checkpoint for writing: " + path);
    write_bytes(out, kMagic, sizeof(kMagic));
    write_bytes(out, &kVersion, sizeof(kVersion));
    int32_t dims[5] = {config_.num_layers, config_.num_heads, config_.head_dim,
                       config_.vocab_size, config_.max_positions};
    write_bytes(out, dims, sizeof(dims));
    write_bytes(out, &config_.init_seed, sizeof(config_.init_seed));
    for (const std::vector<float>* t : tensor_list()) write_tensor(out, *t);
    SPECDEC_CHECK(out.good(), IoError, "checkpoint write failed: " + path);
}

Model Model::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    SPECDEC_CHECK(in.good(), IoError, "cannot open checkpoint: " + path);
    char magic[4];
    read_bytes(in, magic, sizeof(magic), "magic");
    SPECDEC_CHECK(std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, IoError,
                  "not a model checkpoint: " + path);
    uint32_t version = 0;
    read_bytes(in, &version, sizeof(version), "version");
    SPECDEC_CHECK(version == kVersion, IoError,
                  "unsupported checkpoint version " + std::to_string(version));
    int32_t dims[5];
    read_bytes(in, dims, sizeof(dims), "dimensions");
    ModelConfig config;
    config.num_layers = dims[0];
    config.num_heads = dims[1];
    config.head_dim = dims[2];
    config.vocab_size = dims[3];
    config.max_positions = dims[4];
    read_bytes(in, &config.init_seed, sizeof(config.init_seed), "seed");
    Model model(config);
    for (std::vector<float>* t : model.tensor_list()) read_tensor(in, *t, "weights");
    char extra = 0;
    in.read(&extra, 1);
    SPECDEC_CHECK(in.gcount() == 0, IoError, "checkpoint has trailing bytes: " + path);
    return model;
}

uint64_t Model::weight_checksum() const {
    uint64_t hash = 14695981039346656037ULL;
    for (const std::vector<float>* t : tensor_list()) {
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(t->data());
        for (size_t i = 0; i < t->size() * sizeof(float); ++i) {
            hash ^= bytes[i];
            hash *= 1099511628211ULL;
        }
    }
    return hash;
}

std::vector<LogitsRow> Model::forward(const RaggedBatch& batch, CacheArena& cache,
                                      const std::vector<TokenSlot>& slots) const {
    SPECDEC_CHECK(static_cast<int>(slots.size()) == batch.total_input_token_nums,
                  ContractError, "slot list does not cover the batch");
    SPECDEC_CHECK(batch.batch_size() <= cache.batch_size(), ContractError,
                  "batch has more samples than the cache");
    std::vector<TokenPlan> plans(slots.size());
    for (size_t i = 0; i < slots.size(); ++i) {
        TokenSlot local = ragged::restore_indices(batch.token_nums_per_sample,
                                                  static_cast<int>(i));
        int expected_pos = cache.committed_len(local.original_batch_index) +
                           local.original_sequence_position;
        SPECDEC_CHECK(slots[i].original_batch_index == local.original_batch_index &&
                          slots[i].original_sequence_position == expected_pos,
                      ContractError,
                      "slot " + std::to_string(i) + " does not continue its sample");
        plans[i] = TokenPlan{local.original_batch_index, expected_pos, expected_pos, true};
    }
    return forward_planned(batch.concatenated_tokens, plans, cache);
}

std::vector<LogitsRow> Model::forward_planned(const std::vector<TokenId>& tokens,
                                              const std::vector<TokenPlan>& plans,
                                              CacheArena& cache) const {
    SPECDEC_CHECK(tokens.size() == plans.size(), ContractError,
                  "token and plan lists differ in length");
    SPECDEC_CHECK(!tokens.empty(), ContractError, "forward pass over zero tokens");
    SPECDEC_CHECK(cache.kv_dim() == config_.hidden(), ContractError,
                  "cache width does not match the model");
    SPECDEC_CHECK(cache.num_layers() == config_.num_layers, ContractError,
                  "cache depth does not match the model");
    int n = static_cast<int>(tokens.size());
    int h = config_.hidden();
    int m = config_.mlp_hidden();
    int heads = config_.num_heads;
    int hd = config_.head_dim;
    float scale = 1.0f / std::sqrt(static_cast<float>(hd));

    for (int t = 0; t < n; ++t) {
        const TokenPlan& plan = plans[t];
        SPECDEC_CHECK(tokens[t] >= 0 && tokens[t] < config_.vocab_size, ContractError,
                      "token id out of vocabulary");
        SPECDEC_CHECK(plan.sample >= 0 && plan.sample < cache.batch_size(), ContractError,
                      "plan sample out of range");
        SPECDEC_CHECK(plan.logical_pos >= 0, ContractError, "negative position");
        SPECDEC_CHECK(plan.logical_pos < config_.max_positions, CapacityError,
                      "position " + std::to_string(plan.logical_pos) +
                          " exceeds max_positions " +
                          std::to_string(config_.max_positions));
        if (!plan.store) cache.mark_hole(plan.sample, plan.write_slot);
    }

    std::vector<float> hstate(static_cast<size_t>(n) * h);
    for (int t = 0; t < n; ++t) {
        const float* emb = token_embedding_.data() + static_cast<size_t>(tokens[t]) * h;
        const float* pos =
            position_embedding_.data() + static_cast<size_t>(plans[t].logical_pos) * h;
        float* row = hstate.data() + static_cast<size_t>(t) * h;
        for (int i = 0; i < h; ++i) row[i] = emb[i] + pos[i];
    }

    std::vector<float> q_all(static_cast<size_t>(n) * h);
    std::vector<float> xbuf(h), kvec(h), vvec(h), ctx(h), attn(h);
    std::vector<float> mlp_in(h), fc(m);
    std::vector<float> kbuf(static_cast<size_t>(cache.capacity()) * h);
    std::vector<float> vbuf(static_cast<size_t>(cache.capacity()) * h);
    std::vector<float> scores;

    for (int l = 0; l < config_.num_layers; ++l) {
        const LayerWeights& lw = layers_[l];
        // Phase 1: every token's projections land in the cache before any
        // token attends, so later tokens in the same pass see earlier ones.
        for (int t = 0; t < n; ++t) {
            const float* row = hstate.data() + static_cast<size_t>(t) * h;
            layer_norm(row, lw.ln1_gain.data(), lw.ln1_bias.data(), h, xbuf.data());
            linear(lw.wq.data(), lw.bq.data(), h, h, xbuf.data(),
                   q_all.data() + static_cast<size_t>(t) * h);
            linear(lw.wk.data(), lw.bk.data(), h, h, xbuf.data(), kvec.data());
            linear(lw.wv.data(), lw.bv.data(), h, h, xbuf.data(), vvec.data());
            if (plans[t].store) {
                cache.write_kv(plans[t].sample, plans[t].write_slot, l, kvec.data(),
                               vvec.data());
            }
        }
        // Phase 2: attention over the visible prefix, then the MLP.
        for (int t = 0; t < n; ++t) {
            const TokenPlan& plan = plans[t];
            int count = cache.gather_visible(plan.sample, plan.write_slot, l, kbuf.data(),
                                             vbuf.data());
            SPECDEC_CHECK(count >= 1, ContractError, "token with an empty visible set");
            const float* q_row = q_all.data() + static_cast<size_t>(t) * h;
            scores.assign(static_cast<size_t>(count), 0.0f);
            for (int head = 0; head < heads; ++head) {
                const float* q_head = q_row + head * hd;
                for (int j = 0; j < count; ++j) {
                    const float* k_head = kbuf.data() + static_cast<size_t>(j) * h + head * hd;
                    float acc = 0.0f;
                    for (int d = 0; d < hd; ++d) acc += q_head[d] * k_head[d];
                    scores[j] = acc * scale;
                }
                float max_score = scores[0];
                for (int j = 1; j < count; ++j) max_score = std::max(max_score, scores[j]);
                float denom = 0.0f;
                for (int j = 0; j < count; ++j) {
                    scores[j] = std::exp(scores[j] - max_score);
                    denom += scores[j];
                }
                float* ctx_head = ctx.data() + head * hd;
                for (int d = 0; d < hd; ++d) ctx_head[d] = 0.0f;
                for (int j = 0; j < count; ++j) {
                    float w = scores[j] / denom;
                    const float* v_head = vbuf.data() + static_cast<size_t>(j) * h + head * hd;
                    for (int d = 0; d < hd; ++d) ctx_head[d] += w * v_head[d];
                }
            }
            linear(lw.wo.data(), lw.bo.data(), h, h, ctx.data(), attn.data());
            float* row = hstate.data() + static_cast<size_t>(t) * h;
            for (int i = 0; i < h; ++i) row[i] += attn[i];
            layer_norm(row, lw.ln2_gain.data(), lw.ln2_bias.data(), h, mlp_in.data());
            linear(lw.w_fc.data(), lw.b_fc.data(), m, h, mlp_in.data(), fc.data());
            for (int i = 0; i < m; ++i) fc[i] = gelu(fc[i]);
            linear(lw.w_proj.data(), lw.b_proj.data(), h, m, fc.data(), xbuf.data());
            for (int i = 0; i < h; ++i) row[i] += xbuf[i];
        }
    }

    std::vector<LogitsRow> out(n);
    for (int t = 0; t < n; ++t) {
        const float* row = hstate.data() + static_cast<size_t>(t) * h;
        layer_norm(row, final_ln_gain_.data(), final_ln_bias_.data(), h, xbuf.data());
        LogitsRow& logits = out[t];
        logits.assign(config_.vocab_size, 0.0f);
        linear(lm_head_.data(), nullptr, config_.vocab_size, h, xbuf.data(), logits.data());
        for (float v : logits) {
            SPECDEC_CHECK(std::isfinite(v), Error, "non-finite logit produced");
        }
    }
    return out;
}

}  // namespace specdec
