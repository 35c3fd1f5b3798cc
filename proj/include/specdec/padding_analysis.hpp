#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "specdec/common.hpp"

namespace specdec {

// Per-step acceptance model: each of b samples independently draws an
// acceptance length tau that is geometric in the per-token hit rate p,
// truncated to [1, cap]. cap plays the role of k + 1.
struct PaddingModel {
    double p = 0.5;
    int b = 1;
    int cap = 8;

    void validate() const;  // throws ConfigError
};

// pmf over tau = 1..cap (index i holds P(tau = i + 1)). The tail mass beyond
// cap is lumped into the last entry.
std::vector<double> pmf_tau(const PaddingModel& model);

// pmf of the per-step maximum over the model's b independent samples,
// same indexing. For b = 1 this is pmf_tau itself, bit for bit.
std::vector<double> pmf_tau_max(const PaddingModel& model);

// E[value] of a pmf indexed value = index + 1.
double pmf_expectation(const std::vector<double>& pmf);
double pmf_variance(const std::vector<double>& pmf);

struct OverheadEstimate {
    double e_tau_max = 0.0;
    double e_delta_bar = 0.0;  // E[tau_max - mean(tau)]
    double e_r_bar = 0.0;      // E[(tau_max - mean(tau)) / tau_max]
};

// Closed-form expectations. e_r_bar uses the exact joint distribution only
// through E over tau_max of the conditional shortfall ratio; delta_bar comes
// directly from E[tau_max] - E[tau].
OverheadEstimate exact_overheads(const PaddingModel& model);

// Monte Carlo estimate of the same quantities: draw b acceptance lengths per
// trial, form the step's shortfall and ratio, average over trials.
OverheadEstimate simulate_overheads(const PaddingModel& model, int64_t trials,
                                    uint64_t seed);

struct SweepRow {
    double p = 0.0;
    int b = 0;
    int cap = 0;
    std::string estimator;  // "exact" or "mc"
    int64_t trials = 0;     // 0 for exact rows
    OverheadEstimate estimate;
};

// Cross product of the grids, one exact row and one Monte Carlo row per
// cell; cell seeds are derived from the base seed in row-major grid order.
std::vector<SweepRow> sweep(const std::vector<double>& p_grid,
                            const std::vector<int>& b_grid, int cap, int64_t trials,
                            uint64_t seed);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace specdec
