#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specdec/common.hpp"

namespace specdec {

// One decode step as the ledger saw it: which acceptance lengths were
// committed and how many slots were written, split by kind.
struct LedgerStep {
    std::vector<int> tau_list;
    int tau_max = 0;
    int64_t pad_writes = 0;
    int64_t useful_writes = 0;
};

// Counts KV slot writes at (sample, position) granularity: a slot covers all
// layers of one position. "useful" slots hold a real token's vectors,
// "padding" slots hold the PAD filler written to keep samples aligned.
// Masked holes (rows reserved but never filled) are not writes.
class WriteLedger {
public:
    explicit WriteLedger(int batch_size)
        : useful_by_sample_(batch_size, 0), padding_by_sample_(batch_size, 0) {}

    void note_useful(int sample);
    void note_padding(int sample);

    // Step grouping. taus are noted by the arena commits between begin/end.
    void begin_step();
    void note_tau(int tau);
    void end_step();

    int64_t useful_total() const;
    int64_t padding_total() const;
    int64_t total() const { return useful_total() + padding_total(); }
    const std::vector<int64_t>& useful_by_sample() const { return useful_by_sample_; }
    const std::vector<int64_t>& padding_by_sample() const { return padding_by_sample_; }
    const std::vector<LedgerStep>& steps() const { return steps_; }

    // Per-step JSON array: {tau_list, tau_max, pad_writes, useful_writes}.
    std::string dump_json() const;

private:
    std::vector<int64_t> useful_by_sample_;
    std::vector<int64_t> padding_by_sample_;
    std::vector<LedgerStep> steps_;
    bool step_open_ = false;
};

// Average padding ratio over the ledger's recorded steps, per step
// r = delta / tau_max with delta = tau_max - mean(tau), then averaged.
// Throws ContractError when no step was recorded.
double padding_ratio(const WriteLedger& ledger);

// Read contract shared by both cache layouts. Slots are addressed by
// (sample, position); "position" means an arena entry index for the unpad
// arena and a grid row for the padded grid. gather_visible copies the real
// (non-pad) entries with position <= upto into contiguous buffers, in
// ascending position order, and returns how many it copied. That fixed order
// is what keeps attention numerics identical across cache layouts.
class CacheArena {
public:
    CacheArena(int num_layers, int batch_size, int capacity, int kv_dim);
    virtual ~CacheArena() = default;

    int num_layers() const { return num_layers_; }
    int batch_size() const { return batch_size_; }
    int capacity() const { return capacity_; }
    int kv_dim() const { return kv_dim_; }

    // Committed extent in slot coordinates (grid rows for the padded layout).
    virtual int committed_len(int sample) const = 0;
    // Committed real entries; equals committed_len for the unpad arena.
    virtual int logical_len(int sample) const = 0;

    // Store a real token's key/value for one layer. The ledger counts the
    // slot once, on the layer-0 write.
    virtual void write_kv(int sample, int position, int layer,
                          const float* k_vec, const float* v_vec) = 0;

    // Reserve a masked row without storing anything (padded layout only).
    virtual void mark_hole(int sample, int position);

    virtual int gather_visible(int sample, int upto, int layer,
                               float* k_out, float* v_out) const = 0;

    const WriteLedger& ledger() const { return ledger_; }
    WriteLedger& ledger() { return ledger_; }

protected:
    int num_layers_;
    int batch_size_;
    int capacity_;
    int kv_dim_;
    WriteLedger ledger_;
};

// Unpad layout: one shared arena per layer, each sample owning the fixed
// extent [start_offset, start_offset + capacity). Samples advance by their
// own acceptance length; no PAD slot is ever written.
class UnpadArena : public CacheArena {
public:
    UnpadArena(int num_layers, int batch_size, int capacity, int kv_dim);

    int start_offset(int sample) const;
    int committed_len(int sample) const override;
    int logical_len(int sample) const override { return committed_len(sample); }

    void write_kv(int sample, int position, int layer,
                  const float* k_vec, const float* v_vec) override;
    int gather_visible(int sample, int upto, int layer,
                       float* k_out, float* v_out) const override;

    // Advance a sample by its own accepted count. In-flight slots beyond tau
    // die and get overwritten by the next step's writes.
    void commit_accepted(int sample, int tau);

private:
    // keys_[layer] and values_[layer] are flat [batch * capacity, kv_dim].
    std::vector<std::vector<float>> keys_;
    std::vector<std::vector<float>> values_;
    std::vector<int> committed_;
    std::vector<int> written_;  // high-water mark of stored slots per sample
};

// Aligned layout: per-sample rows advance in lockstep. Rows that only exist
// for alignment carry a pad flag and are skipped on reads; commit_padded
// fills them with the PAD filler vectors and counts those writes.
class PaddedGrid : public CacheArena {
public:
    PaddedGrid(int num_layers, int batch_size, int capacity, int kv_dim);

    int committed_len(int sample) const override;
    int logical_len(int sample) const override;
    bool is_pad(int sample, int row) const;

    void write_kv(int sample, int position, int layer,
                  const float* k_vec, const float* v_vec) override;
    void mark_hole(int sample, int position) override;
    int gather_visible(int sample, int upto, int layer,
                       float* k_out, float* v_out) const override;

    // Fix the prompt region after a left-padded prefill. Every listed sample
    // must have staged the same row count (writes plus marked holes), with the
    // holes sitting exactly where its prompt falls short of that height.
    void commit_prefill(const std::vector<int>& samples,
                        const std::vector<int>& prompt_lens);

    // Advance every listed sample by max(taus); samples that accepted less
    // get PAD filler rows, written and ledger-counted.
    void commit_padded(const std::vector<int>& samples, const std::vector<int>& taus);

private:
    float* row_ptr(std::vector<std::vector<float>>& store, int sample, int row, int layer);
    const float* row_ptr(const std::vector<std::vector<float>>& store, int sample, int row,
                         int layer) const;

    std::vector<std::vector<float>> keys_;
    std::vector<std::vector<float>> values_;
    std::vector<uint8_t> pad_;  // [batch * capacity]
    std::vector<int> committed_rows_;
    std::vector<int> logical_;
    std::vector<int> staged_;  // high-water of writes and holes per sample
};

}  // namespace specdec
