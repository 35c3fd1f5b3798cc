#include "specdec/kv_cache.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include <json.hpp>

namespace specdec {

void WriteLedger::note_useful(int sample) {
    SPECDEC_CHECK(sample >= 0 && sample < static_cast<int>(useful_by_sample_.size()),
                  ContractError, "ledger sample out of range");
    useful_by_sample_[sample] += 1;
    if (step_open_) steps_.back().useful_writes += 1;
}

void WriteLedger::note_padding(int sample) {
    SPECDEC_CHECK(sample >= 0 && sample < static_cast<int>(padding_by_sample_.size()),
                  ContractError, "ledger sample out of range");
    padding_by_sample_[sample] += 1;
    if (step_open_) steps_.back().pad_writes += 1;
}

void WriteLedger::begin_step() {
    SPECDEC_CHECK(!step_open_, ContractError, "ledger step already open");
    steps_.emplace_back();
    step_open_ = true;
}

void WriteLedger::note_tau(int tau) {
    SPECDEC_CHECK(step_open_, ContractError, "note_tau outside a step");
    SPECDEC_CHECK(tau >= 1, ContractError, "acceptance length must be >= 1");
    steps_.back().tau_list.push_back(tau);
    steps_.back().tau_max = std::max(steps_.back().tau_max, tau);
}

void WriteLedger::end_step() {
    SPECDEC_CHECK(step_open_, ContractError, "no ledger step open");
    SPECDEC_CHECK(!steps_.back().tau_list.empty(), ContractError,
                  "ledger step closed without any acceptance length");
    step_open_ = false;
}

int64_t WriteLedger::useful_total() const {
    return std::accumulate(useful_by_sample_.begin(), useful_by_sample_.end(), int64_t{0});
}

int64_t WriteLedger::padding_total() const {
    return std::accumulate(padding_by_sample_.begin(), padding_by_sample_.end(), int64_t{0});
}

std::string WriteLedger::dump_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const LedgerStep& step : steps_) {
        out.push_back({{"tau_list", step.tau_list},
                       {"tau_max", step.tau_max},
                       {"pad_writes", step.pad_writes},
                       {"useful_writes", step.useful_writes}});
    }
    return out.dump();
}

double padding_ratio(const WriteLedger& ledger) {
    const auto& steps = ledger.steps();
    SPECDEC_CHECK(!steps.empty(), ContractError, "padding ratio undefined without steps");
    double sum = 0.0;
    for (const LedgerStep& step : steps) {
        double mean_tau =
            std::accumulate(step.tau_list.begin(), step.tau_list.end(), 0.0) /
            static_cast<double>(step.tau_list.size());
        double delta = static_cast<double>(step.tau_max) - mean_tau;
        sum += delta / static_cast<double>(step.tau_max);
    }
    return sum / static_cast<double>(steps.size());
}

CacheArena::CacheArena(int num_layers, int batch_size, int capacity, int kv_dim)
    : num_layers_(num_layers),
      batch_size_(batch_size),
      capacity_(capacity),
      kv_dim_(kv_dim),
      ledger_(batch_size) {
    SPECDEC_CHECK(num_layers >= 1 && batch_size >= 1 && capacity >= 1 && kv_dim >= 1,
                  ConfigError, "cache dimensions must be positive");
}

void CacheArena::mark_hole(int, int) {
    throw ContractError("this cache layout has no masked holes");
}

namespace {

void check_slot(const CacheArena& arena, int sample, int position, int layer) {
    SPECDEC_CHECK(sample >= 0 && sample < arena.batch_size(), ContractError,
                  "cache sample out of range");
    SPECDEC_CHECK(layer >= 0 && layer < arena.num_layers(), ContractError,
                  "cache layer out of range");
    SPECDEC_CHECK(position >= 0, ContractError, "cache position negative");
    SPECDEC_CHECK(position < arena.capacity(), CapacityError,
                  "cache position " + std::to_string(position) + " exceeds capacity " +
                      std::to_string(arena.capacity()));
}

}  // namespace

UnpadArena::UnpadArena(int num_layers, int batch_size, int capacity, int kv_dim)
    : CacheArena(num_layers, batch_size, capacity, kv_dim),
      committed_(batch_size, 0),
      written_(batch_size, 0) {
    size_t per_layer = static_cast<size_t>(batch_size) * capacity * kv_dim;
    keys_.assign(num_layers, std::vector<float>(per_layer, 0.0f));
    values_.assign(num_layers, std::vector<float>(per_layer, 0.0f));
}

int UnpadArena::start_offset(int sample) const {
    SPECDEC_CHECK(sample >= 0 && sample < batch_size_, ContractError,
                  "cache sample out of range");
    return sample * capacity_;
}

int UnpadArena::committed_len(int sample) const {
    SPECDEC_CHECK(sample >= 0 && sample < batch_size_, ContractError,
                  "cache sample out of range");
    return committed_[sample];
}

void UnpadArena::write_kv(int sample, int position, int layer, const float* k_vec,
                          const float* v_vec) {
    check_slot(*this, sample, position, layer);
    size_t at = (static_cast<size_t>(start_offset(sample)) + position) * kv_dim_;
    std::memcpy(keys_[layer].data() + at, k_vec, sizeof(float) * kv_dim_);
    std::memcpy(values_[layer].data() + at, v_vec, sizeof(float) * kv_dim_);
    if (layer == 0) {
        ledger_.note_useful(sample);
        written_[sample] = std::max(written_[sample], position + 1);
    }
}

int UnpadArena::gather_visible(int sample, int upto, int layer, float* k_out,
                               float* v_out) const {
    check_slot(*this, sample, upto, layer);
    SPECDEC_CHECK(upto < written_[sample], ContractError,
                  "read past the written extent");
    size_t base = static_cast<size_t>(start_offset(sample)) * kv_dim_;
    size_t count = static_cast<size_t>(upto) + 1;
    std::memcpy(k_out, keys_[layer].data() + base, sizeof(float) * count * kv_dim_);
    std::memcpy(v_out, values_[layer].data() + base, sizeof(float) * count * kv_dim_);
    return static_cast<int>(count);
}

void UnpadArena::commit_accepted(int sample, int tau) {
    SPECDEC_CHECK(sample >= 0 && sample < batch_size_, ContractError,
                  "cache sample out of range");
    SPECDEC_CHECK(tau >= 1, ContractError, "commit needs tau >= 1");
    SPECDEC_CHECK(tau <= written_[sample] - committed_[sample], ContractError,
                  "commit exceeds the slots written this step");
    committed_[sample] += tau;
    // Slots past the new frontier are dead; forget them so stale reads trip.
    written_[sample] = committed_[sample];
}

PaddedGrid::PaddedGrid(int num_layers, int batch_size, int capacity, int kv_dim)
    : CacheArena(num_layers, batch_size, capacity, kv_dim),
      pad_(static_cast<size_t>(batch_size) * capacity, 0),
      committed_rows_(batch_size, 0),
      logical_(batch_size, 0),
      staged_(batch_size, 0) {
    size_t per_layer = static_cast<size_t>(batch_size) * capacity * kv_dim;
    keys_.assign(num_layers, std::vector<float>(per_layer, 0.0f));
    values_.assign(num_layers, std::vector<float>(per_layer, 0.0f));
}

int PaddedGrid::committed_len(int sample) const {
    SPECDEC_CHECK(sample >= 0 && sample < batch_size_, ContractError,
                  "cache sample out of range");
    return committed_rows_[sample];
}

int PaddedGrid::logical_len(int sample) const {
    SPECDEC_CHECK(sample >= 0 && sample < batch_size_, ContractError,
                  "cache sample out of range");
    return logical_[sample];
}

bool PaddedGrid::is_pad(int sample, int row) const {
    check_slot(*this, sample, row, 0);
    return pad_[static_cast<size_t>(sample) * capacity_ + row] != 0;
}

float* PaddedGrid::row_ptr(std::vector<std::vector<float>>& store, int sample, int row,
                           int layer) {
    return store[layer].data() +
           (static_cast<size_t>(sample) * capacity_ + row) * kv_dim_;
}

const float* PaddedGrid::row_ptr(const std::vector<std::vector<float>>& store, int sample,
                                 int row, int layer) const {
    return store[layer].data() +
           (static_cast<size_t>(sample) * capacity_ + row) * kv_dim_;
}

void PaddedGrid::write_kv(int sample, int position, int layer, const float* k_vec,
                          const float* v_vec) {
    check_slot(*this, sample, position, layer);
    std::memcpy(row_ptr(keys_, sample, position, layer), k_vec, sizeof(float) * kv_dim_);
    std::memcpy(row_ptr(values_, sample, position, layer), v_vec, sizeof(float) * kv_dim_);
    if (layer == 0) {
        pad_[static_cast<size_t>(sample) * capacity_ + position] = 0;
        staged_[sample] = std::max(staged_[sample], position + 1);
        ledger_.note_useful(sample);
    }
}

void PaddedGrid::mark_hole(int sample, int position) {
    check_slot(*this, sample, position, 0);
    pad_[static_cast<size_t>(sample) * capacity_ + position] = 1;
    staged_[sample] = std::max(staged_[sample], position + 1);
}

int PaddedGrid::gather_visible(int sample, int upto, int layer, float* k_out,
                               float* v_out) const {
    check_slot(*this, sample, upto, layer);
    int count = 0;
    size_t flag_base = static_cast<size_t>(sample) * capacity_;
    for (int row = 0; row <= upto; ++row) {
        if (pad_[flag_base + row] != 0) continue;
        std::memcpy(k_out + static_cast<size_t>(count) * kv_dim_,
                    row_ptr(keys_, sample, row, layer), sizeof(float) * kv_dim_);
        std::memcpy(v_out + static_cast<size_t>(count) * kv_dim_,
                    row_ptr(values_, sample, row, layer), sizeof(float) * kv_dim_);
        ++count;
    }
    return count;
}

void PaddedGrid::commit_prefill(const std::vector<int>& samples,
                                const std::vector<int>& prompt_lens) {
    SPECDEC_CHECK(!samples.empty() && samples.size() == prompt_lens.size(), ContractError,
                  "prefill commit needs matching sample and length lists");
    // Validate everything before touching any state.
    int rows = -1;
    for (size_t i = 0; i < samples.size(); ++i) {
        int s = samples[i];
        int len = prompt_lens[i];
        SPECDEC_CHECK(s >= 0 && s < batch_size_, ContractError, "cache sample out of range");
        SPECDEC_CHECK(len >= 1, ContractError, "prompt length must be >= 1");
        SPECDEC_CHECK(committed_rows_[s] == 0, ContractError,
                      "prefill commit on a non-empty sample");
        if (rows < 0) rows = staged_[s];
        SPECDEC_CHECK(staged_[s] == rows, ContractError,
                      "prefill commit requires equally staged samples");
        SPECDEC_CHECK(len <= rows, ContractError, "prompt length exceeds staged rows");
        for (int row = 0; row < rows - len; ++row) {
            SPECDEC_CHECK(is_pad(s, row), ContractError,
                          "prefill left-pad row was not marked as a hole");
        }
        for (int row = rows - len; row < rows; ++row) {
            SPECDEC_CHECK(!is_pad(s, row), ContractError,
                          "prefill prompt row was never written");
        }
    }
    for (size_t i = 0; i < samples.size(); ++i) {
        committed_rows_[samples[i]] = rows;
        logical_[samples[i]] = prompt_lens[i];
    }
}

void PaddedGrid::commit_padded(const std::vector<int>& samples,
                               const std::vector<int>& taus) {
    SPECDEC_CHECK(!samples.empty() && samples.size() == taus.size(), ContractError,
                  "padded commit needs matching sample and tau lists");
    int tau_max = 0;
    for (int tau : taus) {
        SPECDEC_CHECK(tau >= 1, ContractError, "commit needs tau >= 1");
        tau_max = std::max(tau_max, tau);
    }
    // Validate everything before touching any state.
    int base_rows = -1;
    for (size_t i = 0; i < samples.size(); ++i) {
        int s = samples[i];
        SPECDEC_CHECK(s >= 0 && s < batch_size_, ContractError, "cache sample out of range");
        if (base_rows < 0) base_rows = committed_rows_[s];
        SPECDEC_CHECK(committed_rows_[s] == base_rows, ContractError,
                      "padded commit requires aligned samples");
        SPECDEC_CHECK(base_rows + tau_max <= capacity_, CapacityError,
                      "padded commit exceeds cache capacity");
        SPECDEC_CHECK(taus[i] <= staged_[s] - base_rows, ContractError,
                      "commit exceeds the slots written this step");
        for (int row = base_rows; row < base_rows + taus[i]; ++row) {
            SPECDEC_CHECK(!is_pad(s, row), ContractError,
                          "accepted row was never written");
        }
    }
    std::vector<float> zeros(kv_dim_, 0.0f);
    for (size_t i = 0; i < samples.size(); ++i) {
        int s = samples[i];
        for (int row = base_rows + taus[i]; row < base_rows + tau_max; ++row) {
            for (int layer = 0; layer < num_layers_; ++layer) {
                std::memcpy(row_ptr(keys_, s, row, layer), zeros.data(),
                            sizeof(float) * kv_dim_);
                std::memcpy(row_ptr(values_, s, row, layer), zeros.data(),
                            sizeof(float) * kv_dim_);
            }
            pad_[static_cast<size_t>(s) * capacity_ + row] = 1;
            ledger_.note_padding(s);
        }
        committed_rows_[s] += tau_max;
        logical_[s] += taus[i];
        // In-flight rows beyond the new frontier are dead; forget them.
        staged_[s] = committed_rows_[s];
        ledger_.note_tau(taus[i]);
    }
}

}  // namespace specdec
