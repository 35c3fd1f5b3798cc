#include "specdec/engine.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <numeric>

#include <json.hpp>

#include "specdec/predictors.hpp"
#include "specdec/ragged.hpp"
#include "specdec/rng.hpp"

namespace specdec {

Mode mode_from_string(const std::string& name) {
    if (name == "greedy") return Mode::greedy;
    if (name == "vanilla") return Mode::vanilla;
    if (name == "ems") return Mode::ems;
    throw ConfigError("unknown mode: " + name);
}

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::greedy: return "greedy";
        case Mode::vanilla: return "vanilla";
        case Mode::ems: return "ems";
    }
    throw ConfigError("unknown mode value");
}

PredictorKind predictor_from_string(const std::string& name) {
    if (name == "draft") return PredictorKind::draft;
    if (name == "retrieval") return PredictorKind::retrieval;
    if (name == "synthetic") return PredictorKind::synthetic;
    throw ConfigError("unknown predictor: " + name);
}

std::string to_string(PredictorKind kind) {
    switch (kind) {
        case PredictorKind::draft: return "draft";
        case PredictorKind::retrieval: return "retrieval";
        case PredictorKind::synthetic: return "synthetic";
    }
    throw ConfigError("unknown predictor value");
}

void EngineConfig::validate() const {
    if (predictor != PredictorKind::retrieval) {
        SPECDEC_CHECK(k >= 1, ConfigError, "k must be >= 1");
    }
    SPECDEC_CHECK(match_len >= 1, ConfigError, "match_len must be >= 1");
    SPECDEC_CHECK(copy_len >= 1, ConfigError, "copy_len must be >= 1");
    SPECDEC_CHECK(batch_size >= 1, ConfigError, "batch_size must be >= 1");
    SPECDEC_CHECK(max_new_tokens >= 0, ConfigError, "max_new_tokens must be >= 0");
    SPECDEC_CHECK(synthetic_accuracy >= 0.0 && synthetic_accuracy < 1.0, ConfigError,
                  "synthetic accuracy must lie in [0, 1)");
}

VerifyResult verify(const std::vector<LogitsRow>& rows, const TokenSequence& drafts) {
    SPECDEC_CHECK(rows.size() == drafts.size() + 1, ContractError,
                  "verification needs one logits row per draft plus the bonus row");
    VerifyResult out;
    int k = static_cast<int>(drafts.size());
    for (int j = 0; j <= k; ++j) {
        TokenId picked = greedy_next(rows[j]);
        out.accepted.push_back(picked);
        if (j == k) {
            out.tau = k + 1;  // every draft matched; the bonus token rides along
        } else if (picked != drafts[j]) {
            out.tau = j + 1;  // correction token replaces the first wrong draft
            break;
        }
    }
    return out;
}

StepRecord make_step_record(const std::vector<int>& sample_ids, const std::vector<int>& ks,
                            const std::vector<int>& taus, const std::vector<bool>& clipped) {
    size_t n = sample_ids.size();
    SPECDEC_CHECK(n >= 1, ContractError, "a step needs at least one sample");
    SPECDEC_CHECK(ks.size() == n && taus.size() == n && clipped.size() == n, ContractError,
                  "per-sample step lists differ in length");
    int k_max = 0;
    int tau_max = 0;
    double tau_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        SPECDEC_CHECK(ks[i] >= 0, ContractError, "negative draft count");
        SPECDEC_CHECK(taus[i] >= 1 && taus[i] <= ks[i] + 1, ContractError,
                      "acceptance length outside [1, k + 1]");
        k_max = std::max(k_max, ks[i]);
        tau_max = std::max(tau_max, taus[i]);
        tau_sum += taus[i];
    }
    StepRecord record;
    record.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        record.samples[i] = SampleStep{sample_ids[i],          ks[i], k_max - ks[i],
                                       taus[i], tau_max - taus[i], clipped[i] != 0};
    }
    record.tau_max = tau_max;
    record.delta_bar = tau_max - tau_sum / static_cast<double>(n);
    record.r_bar = record.delta_bar / static_cast<double>(tau_max);
    return record;
}

RunMetrics compute_metrics(const std::vector<StepRecord>& records) {
    RunMetrics m;
    m.decode_steps = static_cast<int>(records.size());
    if (records.empty()) return m;
    int64_t sample_steps = 0;
    double tau_sum = 0.0;
    double ratio_sum = 0.0;
    for (const StepRecord& record : records) {
        for (const SampleStep& s : record.samples) {
            tau_sum += s.tau;
            m.total_input_padding += s.input_padding;
            m.total_kv_padding += s.kv_padding;
            ++sample_steps;
        }
        ratio_sum += record.r_bar;
    }
    m.avg_acceptance_length = tau_sum / static_cast<double>(sample_steps);
    m.avg_padding_ratio = ratio_sum / static_cast<double>(records.size());
    return m;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<TokenSequence> tokenize_prompts(const std::vector<std::string>& prompts) {
    std::vector<TokenSequence> out;
    out.reserve(prompts.size());
    for (const std::string& prompt : prompts) {
        TokenSequence tokens{tok::kBos};
        TokenSequence bytes = tok::tokenize(prompt);
        tokens.insert(tokens.end(), bytes.begin(), bytes.end());
        out.push_back(std::move(tokens));
    }
    return out;
}

std::string text_without_specials(const TokenSequence& tokens) {
    TokenSequence bytes;
    bytes.reserve(tokens.size());
    for (TokenId t : tokens) {
        if (!tok::is_special(t)) bytes.push_back(t);
    }
    return tok::detokenize(bytes);
}

int predictor_reach(const EngineConfig& config) {
    return config.predictor == PredictorKind::retrieval ? config.copy_len : config.k;
}

void check_capacity(const std::vector<TokenSequence>& prompts, const EngineConfig& config,
                    const Model& target) {
    for (const TokenSequence& prompt : prompts) {
        int need = static_cast<int>(prompt.size()) + config.max_new_tokens +
                   predictor_reach(config);
        SPECDEC_CHECK(need <= target.config().max_positions, CapacityError,
                      "prompt plus generation budget needs " + std::to_string(need) +
                          " positions but the model has " +
                          std::to_string(target.config().max_positions));
    }
}

TokenSequence predict_tokens(const EngineConfig& config, const TokenSequence& context,
                             const Model& target, const Model* draft, int step_index,
                             int sample) {
    switch (config.predictor) {
        case PredictorKind::draft:
            return draft_predict(context, config.k, *draft);
        case PredictorKind::retrieval:
            return retrieval_predict(context, config.match_len, config.copy_len);
        case PredictorKind::synthetic:
            return synthetic_predict(
                context, config.k, target, config.synthetic_accuracy,
                mix_seed(config.seed, static_cast<uint64_t>(step_index),
                         static_cast<uint64_t>(sample)));
    }
    throw ConfigError("unknown predictor value");
}

struct SampleState {
    TokenSequence tokens;   // BOS + prompt bytes + everything generated
    int64_t generated = 0;
    bool finished = false;
};

void finalize_result(DecodeResult& result, const std::vector<SampleState>& states) {
    for (const SampleState& state : states) {
        TokenSequence generated(state.tokens.end() - state.generated, state.tokens.end());
        result.texts.push_back(text_without_specials(generated));
        result.generated_tokens.push_back(std::move(generated));
    }
}

}  // namespace

DecodeResult decode_greedy(const std::vector<std::string>& prompts,
                           const EngineConfig& config, const Model& target) {
    config.validate();
    SPECDEC_CHECK(static_cast<int>(prompts.size()) == config.batch_size, ContractError,
                  "prompt count does not match batch_size");
    std::vector<TokenSequence> prompt_tokens = tokenize_prompts(prompts);
    for (const TokenSequence& prompt : prompt_tokens) {
        int need = static_cast<int>(prompt.size()) + config.max_new_tokens;
        SPECDEC_CHECK(need <= target.config().max_positions, CapacityError,
                      "prompt plus generation budget exceeds max_positions");
    }

    DecodeResult result;
    result.ledger_json = "[]";
    std::vector<SampleState> states(prompts.size());
    for (size_t s = 0; s < prompts.size(); ++s) states[s].tokens = prompt_tokens[s];
    result.metrics.tokens_generated.assign(prompts.size(), 0);
    if (config.max_new_tokens == 0) {
        finalize_result(result, states);
        return result;
    }

    int64_t useful_writes = 0;
    double prefill_seconds = 0.0;
    double decode_seconds = 0.0;
    for (size_t s = 0; s < prompts.size(); ++s) {
        SampleState& state = states[s];
        int prompt_len = static_cast<int>(state.tokens.size());
        UnpadArena cache(target.config().num_layers, 1, target.config().max_positions,
                         target.config().hidden());

        Clock::time_point t0 = Clock::now();
        RaggedBatch prefill = ragged::concatenate_inputs({state.tokens});
        std::vector<TokenSlot> slots(prompt_len);
        for (int i = 0; i < prompt_len; ++i) slots[i] = TokenSlot{0, i};
        std::vector<LogitsRow> rows = target.forward(prefill, cache, slots);
        cache.commit_accepted(0, prompt_len);
        TokenId next = greedy_next(rows.back());
        state.tokens.push_back(next);
        state.generated = 1;
        prefill_seconds += seconds_since(t0);

        t0 = Clock::now();
        while (state.generated < config.max_new_tokens &&
               !(config.stop_on_eos && next == tok::kEos)) {
            RaggedBatch step = ragged::concatenate_inputs({{next}});
            int pos = cache.committed_len(0);
            rows = target.forward(step, cache, {TokenSlot{0, pos}});
            cache.commit_accepted(0, 1);
            next = greedy_next(rows[0]);
            state.tokens.push_back(next);
            state.generated += 1;
        }
        decode_seconds += seconds_since(t0);
        useful_writes += cache.ledger().useful_total();
        SPECDEC_CHECK(cache.ledger().padding_total() == 0, Error,
                      "internal: greedy decoding produced padding writes");

        result.metrics.tokens_generated[s] = state.generated;
        result.metrics.total_tokens_generated += state.generated;
        result.metrics.real_tokens_processed += prompt_len + state.generated - 1;
        // The first token comes out of prefill; decode steps count the
        // incremental forwards after it, matching the speculative modes.
        result.metrics.decode_steps = std::max(result.metrics.decode_steps,
                                               static_cast<int>(state.generated) - 1);
    }

    result.metrics.avg_acceptance_length = 1.0;
    result.metrics.useful_kv_writes = useful_writes;
    result.metrics.total_tokens_processed = result.metrics.real_tokens_processed;
    result.metrics.prefill_seconds = prefill_seconds;
    result.metrics.decode_seconds = decode_seconds;
    if (decode_seconds > 0.0) {
        result.metrics.tokens_per_second_decode =
            static_cast<double>(result.metrics.total_tokens_generated) / decode_seconds;
    }
    if (prefill_seconds + decode_seconds > 0.0) {
        result.metrics.tokens_per_second_total =
            static_cast<double>(result.metrics.total_tokens_generated) /
            (prefill_seconds + decode_seconds);
    }
    finalize_result(result, states);
    return result;
}

DecodeResult decode_speculative(const std::vector<std::string>& prompts,
                                const EngineConfig& config, const Model& target,
                                const Model* draft) {
    config.validate();
    SPECDEC_CHECK(config.mode == Mode::vanilla || config.mode == Mode::ems, ConfigError,
                  "speculative decoding needs the vanilla or ems mode");
    SPECDEC_CHECK(static_cast<int>(prompts.size()) == config.batch_size, ContractError,
                  "prompt count does not match batch_size");
    if (config.predictor == PredictorKind::draft) {
        SPECDEC_CHECK(draft != nullptr, ConfigError, "draft predictor needs a draft model");
        SPECDEC_CHECK(draft->config().vocab_size == target.config().vocab_size, ConfigError,
                      "draft and target vocabularies differ");
    }
    std::vector<TokenSequence> prompt_tokens = tokenize_prompts(prompts);
    check_capacity(prompt_tokens, config, target);

    int b = config.batch_size;
    bool aligned = config.mode == Mode::vanilla;
    DecodeResult result;
    result.ledger_json = "[]";
    result.metrics.tokens_generated.assign(b, 0);
    std::vector<SampleState> states(b);
    for (int s = 0; s < b; ++s) states[s].tokens = prompt_tokens[s];
    if (config.max_new_tokens == 0) {
        finalize_result(result, states);
        return result;
    }

    std::unique_ptr<CacheArena> cache;
    if (aligned) {
        cache = std::make_unique<PaddedGrid>(target.config().num_layers, b,
                                             target.config().max_positions,
                                             target.config().hidden());
    } else {
        cache = std::make_unique<UnpadArena>(target.config().num_layers, b,
                                             target.config().max_positions,
                                             target.config().hidden());
    }

    // Prefill: all prompts in one pass, then one greedy token each.
    Clock::time_point t0 = Clock::now();
    {
        std::vector<LogitsRow> rows;
        std::vector<int> last_row_index(b, 0);
        if (aligned) {
            auto& grid = static_cast<PaddedGrid&>(*cache);
            int rows_needed = 0;
            for (const TokenSequence& p : prompt_tokens) {
                rows_needed = std::max(rows_needed, static_cast<int>(p.size()));
            }
            std::vector<TokenId> flat;
            std::vector<TokenPlan> plans;
            std::vector<int> sample_ids(b), prompt_lens(b);
            for (int s = 0; s < b; ++s) {
                int len = static_cast<int>(prompt_tokens[s].size());
                int holes = rows_needed - len;
                for (int row = 0; row < holes; ++row) grid.mark_hole(s, row);
                for (int i = 0; i < len; ++i) {
                    flat.push_back(prompt_tokens[s][i]);
                    plans.push_back(TokenPlan{s, i, holes + i, true});
                }
                last_row_index[s] = static_cast<int>(flat.size()) - 1;
                sample_ids[s] = s;
                prompt_lens[s] = len;
            }
            rows = target.forward_planned(flat, plans, *cache);
            grid.commit_prefill(sample_ids, prompt_lens);
        } else {
            auto& arena = static_cast<UnpadArena&>(*cache);
            RaggedBatch batch = ragged::concatenate_inputs(prompt_tokens);
            std::vector<TokenSlot> slots;
            int flat = 0;
            for (int s = 0; s < b; ++s) {
                for (size_t i = 0; i < prompt_tokens[s].size(); ++i) {
                    slots.push_back(TokenSlot{s, static_cast<int>(i)});
                    ++flat;
                }
                last_row_index[s] = flat - 1;
            }
            rows = target.forward(batch, *cache, slots);
            for (int s = 0; s < b; ++s) {
                arena.commit_accepted(s, static_cast<int>(prompt_tokens[s].size()));
            }
        }
        for (int s = 0; s < b; ++s) {
            TokenId first = greedy_next(rows[last_row_index[s]]);
            states[s].tokens.push_back(first);
            states[s].generated = 1;
            states[s].finished = states[s].generated >= config.max_new_tokens ||
                                 (config.stop_on_eos && first == tok::kEos);
            result.metrics.real_tokens_processed +=
                static_cast<int64_t>(prompt_tokens[s].size());
        }
    }
    result.metrics.prefill_seconds = seconds_since(t0);

    // Decode: predict, one shared forward, verify, commit.
    t0 = Clock::now();
    std::vector<StepRecord> records;
    int step_index = 0;
    while (true) {
        std::vector<int> active;
        for (int s = 0; s < b; ++s) {
            if (!states[s].finished) active.push_back(s);
        }
        if (active.empty()) break;

        cache->ledger().begin_step();
        std::vector<TokenSequence> drafts(b);
        int k_max = 0;
        for (int s : active) {
            drafts[s] = predict_tokens(config, states[s].tokens, target, draft, step_index, s);
            k_max = std::max(k_max, static_cast<int>(drafts[s].size()));
        }

        std::vector<LogitsRow> rows;
        std::vector<int> first_row_index(b, -1);
        if (aligned) {
            int m = 1 + k_max;
            std::vector<TokenId> flat;
            std::vector<TokenPlan> plans;
            int base_rows = cache->committed_len(active[0]);
            for (int s : active) {
                SPECDEC_CHECK(cache->committed_len(s) == base_rows, Error,
                              "internal: aligned samples drifted apart");
                first_row_index[s] = static_cast<int>(flat.size());
                int k_s = static_cast<int>(drafts[s].size());
                int logical = cache->logical_len(s);
                for (int o = 0; o < m; ++o) {
                    bool real = o <= k_s;
                    flat.push_back(real ? (o == 0 ? states[s].tokens.back() : drafts[s][o - 1])
                                        : tok::kPad);
                    plans.push_back(TokenPlan{s, logical + o, base_rows + o, real});
                }
            }
            rows = target.forward_planned(flat, plans, *cache);
        } else {
            std::vector<TokenSequence> inputs(b);
            for (int s : active) {
                inputs[s].push_back(states[s].tokens.back());
                inputs[s].insert(inputs[s].end(), drafts[s].begin(), drafts[s].end());
            }
            RaggedBatch batch = ragged::concatenate_inputs(inputs);
            std::vector<TokenSlot> slots;
            for (int s = 0; s < b; ++s) {
                if (inputs[s].empty()) continue;
                first_row_index[s] = static_cast<int>(slots.size());
                int committed = cache->committed_len(s);
                for (size_t o = 0; o < inputs[s].size(); ++o) {
                    slots.push_back(TokenSlot{s, committed + static_cast<int>(o)});
                }
            }
            rows = target.forward(batch, *cache, slots);
        }

        std::vector<int> ks, taus;
        std::vector<bool> clips;
        for (int s : active) {
            int k_s = static_cast<int>(drafts[s].size());
            std::vector<LogitsRow> sample_rows(
                rows.begin() + first_row_index[s],
                rows.begin() + first_row_index[s] + k_s + 1);
            VerifyResult v = verify(sample_rows, drafts[s]);
            int64_t remaining = config.max_new_tokens - states[s].generated;
            int tau = std::min<int64_t>(v.tau, remaining);
            if (config.stop_on_eos) {
                for (int j = 0; j < tau; ++j) {
                    if (v.accepted[j] == tok::kEos) {
                        tau = j + 1;
                        break;
                    }
                }
            }
            SPECDEC_CHECK(tau >= 1, Error, "internal: empty acceptance");
            states[s].tokens.insert(states[s].tokens.end(), v.accepted.begin(),
                                    v.accepted.begin() + tau);
            states[s].generated += tau;
            states[s].finished =
                states[s].generated >= config.max_new_tokens ||
                (config.stop_on_eos && states[s].tokens.back() == tok::kEos);
            ks.push_back(k_s);
            taus.push_back(tau);
            clips.push_back(tau < v.tau);
            result.metrics.real_tokens_processed += 1 + k_s;
        }

        if (aligned) {
            static_cast<PaddedGrid&>(*cache).commit_padded(active, taus);
        } else {
            auto& arena = static_cast<UnpadArena&>(*cache);
            for (size_t i = 0; i < active.size(); ++i) {
                arena.commit_accepted(active[i], taus[i]);
                cache->ledger().note_tau(taus[i]);
            }
        }
        records.push_back(make_step_record(active, ks, taus, clips));
        cache->ledger().end_step();
        ++step_index;
    }
    result.metrics.decode_seconds = seconds_since(t0);

    RunMetrics aggregated = compute_metrics(records);
    result.metrics.decode_steps = aggregated.decode_steps;
    result.metrics.avg_acceptance_length = aggregated.avg_acceptance_length;
    result.metrics.avg_padding_ratio = aggregated.avg_padding_ratio;
    result.metrics.total_input_padding = aggregated.total_input_padding;
    result.metrics.total_kv_padding = aggregated.total_kv_padding;
    result.metrics.useful_kv_writes = cache->ledger().useful_total();
    result.metrics.padding_kv_writes = cache->ledger().padding_total();
    if (aligned) {
        result.metrics.pad_tokens_processed =
            aggregated.total_input_padding + aggregated.total_kv_padding;
        SPECDEC_CHECK(result.metrics.padding_kv_writes == aggregated.total_kv_padding, Error,
                      "internal: ledger and records disagree on padding writes");
    } else {
        SPECDEC_CHECK(result.metrics.padding_kv_writes == 0, Error,
                      "internal: unpad run produced padding writes");
    }
    result.metrics.total_tokens_processed =
        result.metrics.real_tokens_processed + result.metrics.pad_tokens_processed;
    for (int s = 0; s < b; ++s) {
        result.metrics.tokens_generated[s] = states[s].generated;
        result.metrics.total_tokens_generated += states[s].generated;
    }
    if (result.metrics.decode_seconds > 0.0) {
        result.metrics.tokens_per_second_decode =
            static_cast<double>(result.metrics.total_tokens_generated) /
            result.metrics.decode_seconds;
    }
    double wall = result.metrics.prefill_seconds + result.metrics.decode_seconds;
    if (wall > 0.0) {
        result.metrics.tokens_per_second_total =
            static_cast<double>(result.metrics.total_tokens_generated) / wall;
    }
    result.steps = std::move(records);
    result.ledger_json = cache->ledger().dump_json();
    finalize_result(result, states);
    return result;
}

std::string results_json(const EngineConfig& config, const DecodeResult& result) {
    nlohmann::json out;
    out["config"] = {{"mode", to_string(config.mode)},
                     {"predictor", to_string(config.predictor)},
                     {"k", config.k},
                     {"match_len", config.match_len},
                     {"copy_len", config.copy_len},
                     {"batch_size", config.batch_size},
                     {"max_new_tokens", config.max_new_tokens},
                     {"stop_on_eos", config.stop_on_eos},
                     {"seed", config.seed},
                     {"synthetic_accuracy", config.synthetic_accuracy}};
    nlohmann::json outputs = nlohmann::json::array();
    for (size_t s = 0; s < result.generated_tokens.size(); ++s) {
        outputs.push_back({{"tokens", result.generated_tokens[s]},
                           {"text", result.texts[s]}});
    }
    out["outputs"] = outputs;
    const RunMetrics& m = result.metrics;
    out["metrics"] = {{"decode_steps", m.decode_steps},
                      {"tokens_generated", m.tokens_generated},
                      {"total_tokens_generated", m.total_tokens_generated},
                      {"avg_acceptance_length", m.avg_acceptance_length},
                      {"avg_padding_ratio", m.avg_padding_ratio},
                      {"total_input_padding", m.total_input_padding},
                      {"total_kv_padding", m.total_kv_padding},
                      {"useful_kv_writes", m.useful_kv_writes},
                      {"padding_kv_writes", m.padding_kv_writes},
                      {"real_tokens_processed", m.real_tokens_processed},
                      {"pad_tokens_processed", m.pad_tokens_processed},
                      {"total_tokens_processed", m.total_tokens_processed},
                      {"prefill_seconds", m.prefill_seconds},
                      {"decode_seconds", m.decode_seconds},
                      {"tokens_per_second_decode", m.tokens_per_second_decode},
                      {"tokens_per_second_total", m.tokens_per_second_total}};
    nlohmann::json steps = nlohmann::json::array();
    for (const StepRecord& record : result.steps) {
        nlohmann::json samples = nlohmann::json::array();
        for (const SampleStep& s : record.samples) {
            samples.push_back({{"sample", s.sample},
                               {"k", s.k},
                               {"input_padding", s.input_padding},
                               {"tau", s.tau},
                               {"kv_padding", s.kv_padding},
                               {"clipped", s.clipped}});
        }
        steps.push_back({{"samples", samples},
                         {"tau_max", record.tau_max},
                         {"delta_bar", record.delta_bar},
                         {"r_bar", record.r_bar}});
    }
    out["steps"] = steps;
    out["ledger"] = nlohmann::json::parse(result.ledger_json);
    // Token ids are the exact record; the text view may hold arbitrary bytes,
    // so non-UTF-8 sequences degrade to replacement characters here.
    return out.dump(2, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace specdec
