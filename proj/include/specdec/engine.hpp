#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specdec/kv_cache.hpp"
#include "specdec/model.hpp"
#include "specdec/tokenizer.hpp"

namespace specdec {

enum class Mode { greedy, vanilla, ems };
enum class PredictorKind { draft, retrieval, synthetic };

Mode mode_from_string(const std::string& name);
std::string to_string(Mode mode);
PredictorKind predictor_from_string(const std::string& name);
std::string to_string(PredictorKind kind);

struct EngineConfig {
    Mode mode = Mode::ems;
    PredictorKind predictor = PredictorKind::draft;
    int k = 4;             // draft / synthetic rollout length
    int match_len = 2;     // retrieval n-gram length
    int copy_len = 7;      // retrieval copy budget
    int batch_size = 1;
    int max_new_tokens = 64;
    bool stop_on_eos = true;
    uint64_t seed = 1;     // drives the synthetic predictor's coin flips
    double synthetic_accuracy = 0.8;

    void validate() const;  // throws ConfigError
};

// What one sample did in one decode step. The padding fields are alignment
// shortfalls determined by the step's k and tau lists; the aligned mode
// actually materializes them, the unpad mode only reports them.
struct SampleStep {
    int sample = 0;
    int k = 0;
    int input_padding = 0;
    int tau = 0;
    int kv_padding = 0;
    bool clipped = false;  // tau was cut by the budget or an end-of-text token
};

struct StepRecord {
    std::vector<SampleStep> samples;
    int tau_max = 0;
    double delta_bar = 0.0;  // tau_max - mean(tau)
    double r_bar = 0.0;      // delta_bar / tau_max
};

struct RunMetrics {
    int decode_steps = 0;
    std::vector<int64_t> tokens_generated;
    int64_t total_tokens_generated = 0;
    double avg_acceptance_length = 0.0;
    double avg_padding_ratio = 0.0;
    int64_t total_input_padding = 0;
    int64_t total_kv_padding = 0;
    int64_t useful_kv_writes = 0;
    int64_t padding_kv_writes = 0;
    int64_t real_tokens_processed = 0;
    int64_t pad_tokens_processed = 0;
    int64_t total_tokens_processed = 0;
    double prefill_seconds = 0.0;
    double decode_seconds = 0.0;
    double tokens_per_second_decode = 0.0;
    double tokens_per_second_total = 0.0;
};

struct DecodeResult {
    std::vector<TokenSequence> generated_tokens;  // per sample, prompt excluded
    std::vector<std::string> texts;               // detokenized, specials dropped
    std::vector<StepRecord> steps;                // empty for greedy decoding
    RunMetrics metrics;
    std::string ledger_json;
};

struct VerifyResult {
    TokenSequence accepted;  // tau tokens: matched drafts plus the correction/bonus
    int tau = 0;             // in [1, drafts + 1]
};

// Compare the target's greedy picks against the drafted tokens: accept the
// longest matching prefix, then the target's own token at the first
// disagreement (or the bonus token when everything matched).
VerifyResult verify(const std::vector<LogitsRow>& rows, const TokenSequence& drafts);

// Build one step's record from the per-sample lists: paddings against the
// step maxima, then the step aggregates.
StepRecord make_step_record(const std::vector<int>& sample_ids, const std::vector<int>& ks,
                            const std::vector<int>& taus, const std::vector<bool>& clipped);

// Aggregate per-step records: mean acceptance length over sample-steps, mean
// per-step padding ratio, padding totals. Fields the records cannot supply
// (writes, timings, token counts) stay zero.
RunMetrics compute_metrics(const std::vector<StepRecord>& records);

// Plain step-by-step decoding, one sample at a time. The reference every
// speculative mode must reproduce token for token.
DecodeResult decode_greedy(const std::vector<std::string>& prompts,
                           const EngineConfig& config, const Model& target);

// Speculative decoding over a batch. mode selects the cache/input layout:
// vanilla aligns samples with padding, ems runs them ragged. draft may be
// null for the retrieval predictor.
DecodeResult decode_speculative(const std::vector<std::string>& prompts,
                                const EngineConfig& config, const Model& target,
                                const Model* draft);

// Full run report (config echo, outputs, metrics, steps, ledger) as JSON.
std::string results_json(const EngineConfig& config, const DecodeResult& result);

}  // namespace specdec
