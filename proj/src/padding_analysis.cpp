#include "specdec/padding_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "specdec/rng.hpp"

namespace specdec {

void PaddingModel::validate() const {
    SPECDEC_CHECK(p >= 0.0 && p < 1.0, ConfigError, "hit rate p must lie in [0, 1)");
    SPECDEC_CHECK(b >= 1, ConfigError, "sample count b must be >= 1");
    SPECDEC_CHECK(cap >= 1, ConfigError, "cap must be >= 1");
}

std::vector<double> pmf_tau(const PaddingModel& model) {
    model.validate();
    std::vector<double> pmf(model.cap, 0.0);
    // P(tau = k) = p^(k-1) (1 - p); the tail beyond cap collapses into the
    // last bin, so the pmf always sums to one.
    for (int k = 1; k < model.cap; ++k) {
        pmf[k - 1] = std::pow(model.p, k - 1) * (1.0 - model.p);
    }
    pmf[model.cap - 1] = std::pow(model.p, model.cap - 1);
    return pmf;
}

std::vector<double> pmf_tau_max(const PaddingModel& model) {
    model.validate();
    // The b = 1 maximum is the single draw; return the same floats rather
    // than an algebraically equal rearrangement.
    if (model.b == 1) return pmf_tau(model);
    std::vector<double> pmf(model.cap, 0.0);
    auto cdf_pow = [&](int k) {
        // P(tau <= k)^b with the truncated tail: below cap the cdf is
        // 1 - p^k, at cap it is exactly 1.
        if (k <= 0) return 0.0;
        if (k >= model.cap) return 1.0;
        return std::pow(1.0 - std::pow(model.p, k), model.b);
    };
    for (int k = 1; k <= model.cap; ++k) {
        pmf[k - 1] = cdf_pow(k) - cdf_pow(k - 1);
    }
    return pmf;
}

double pmf_expectation(const std::vector<double>& pmf) {
    SPECDEC_CHECK(!pmf.empty(), ContractError, "expectation of an empty pmf");
    double acc = 0.0;
    for (size_t i = 0; i < pmf.size(); ++i) acc += static_cast<double>(i + 1) * pmf[i];
    return acc;
}

double pmf_variance(const std::vector<double>& pmf) {
    double mean = pmf_expectation(pmf);
    double acc = 0.0;
    for (size_t i = 0; i < pmf.size(); ++i) {
        double d = static_cast<double>(i + 1) - mean;
        acc += d * d * pmf[i];
    }
    return acc;
}

OverheadEstimate exact_overheads(const PaddingModel& model) {
    std::vector<double> tau = pmf_tau(model);
    std::vector<double> tau_max = pmf_tau_max(model);
    OverheadEstimate out;
    out.e_tau_max = pmf_expectation(tau_max);
    out.e_delta_bar = out.e_tau_max - pmf_expectation(tau);
    // E[mean(tau) / tau_max] = E[tau_1 / tau_max] by symmetry. Split on the
    // max's value m: E[tau_1 1{max = m}] = S(m) F(m)^(b-1) - S(m-1) F(m-1)^(b-1)
    // with S the partial expectation and F the cdf of one draw.
    std::vector<double> cdf(model.cap + 1, 0.0);
    std::vector<double> partial(model.cap + 1, 0.0);
    for (int k = 1; k <= model.cap; ++k) {
        cdf[k] = cdf[k - 1] + tau[k - 1];
        partial[k] = partial[k - 1] + static_cast<double>(k) * tau[k - 1];
    }
    double mean_over_max = 0.0;
    for (int m = 1; m <= model.cap; ++m) {
        double upper = partial[m] * std::pow(cdf[m], model.b - 1);
        double lower = partial[m - 1] * std::pow(cdf[m - 1], model.b - 1);
        mean_over_max += (upper - lower) / static_cast<double>(m);
    }
    out.e_r_bar = 1.0 - mean_over_max;
    return out;
}

OverheadEstimate simulate_overheads(const PaddingModel& model, int64_t trials,
                                    uint64_t seed) {
    model.validate();
    SPECDEC_CHECK(trials >= 1, ConfigError, "trials must be >= 1");
    std::vector<double> cdf = pmf_tau(model);
    for (size_t i = 1; i < cdf.size(); ++i) cdf[i] += cdf[i - 1];
    std::mt19937_64 rng(seed);
    // Explicit 53-bit mapping instead of a library distribution so streams
    // are identical across standard library implementations.
    auto next_unit = [&rng]() {
        return static_cast<double>(rng() >> 11) * 0x1.0p-53;
    };
    auto draw_tau = [&]() {
        double u = next_unit();
        for (size_t i = 0; i + 1 < cdf.size(); ++i) {
            if (u < cdf[i]) return static_cast<int>(i + 1);
        }
        return static_cast<int>(cdf.size());
    };
    double sum_max = 0.0, sum_delta = 0.0, sum_ratio = 0.0;
    for (int64_t t = 0; t < trials; ++t) {
        int tau_max = 0;
        int64_t tau_sum = 0;
        for (int s = 0; s < model.b; ++s) {
            int tau = draw_tau();
            tau_max = std::max(tau_max, tau);
            tau_sum += tau;
        }
        double mean_tau = static_cast<double>(tau_sum) / static_cast<double>(model.b);
        double delta = static_cast<double>(tau_max) - mean_tau;
        sum_max += tau_max;
        sum_delta += delta;
        sum_ratio += delta / static_cast<double>(tau_max);
    }
    OverheadEstimate out;
    out.e_tau_max = sum_max / static_cast<double>(trials);
    out.e_delta_bar = sum_delta / static_cast<double>(trials);
    out.e_r_bar = sum_ratio / static_cast<double>(trials);
    return out;
}

std::vector<SweepRow> sweep(const std::vector<double>& p_grid,
                            const std::vector<int>& b_grid, int cap, int64_t trials,
                            uint64_t seed) {
    SPECDEC_CHECK(!p_grid.empty() && !b_grid.empty(), ConfigError, "empty sweep grid");
    SPECDEC_CHECK(trials >= 1, ConfigError, "trials must be >= 1");
    std::vector<SweepRow> rows;
    uint64_t cell = 0;
    for (double p : p_grid) {
        for (int b : b_grid) {
            PaddingModel model{p, b, cap};
            SweepRow exact{p, b, cap, "exact", 0, exact_overheads(model)};
            SweepRow mc{p, b, cap, "mc", trials,
                        simulate_overheads(model, trials, mix_seed(seed, cell))};
            rows.push_back(exact);
            rows.push_back(mc);
            ++cell;
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "p,b,cap,estimator,trials,E_tau_max,E_delta_bar,E_r_bar\n";
    char line[256];
    for (const SweepRow& row : rows) {
        std::snprintf(line, sizeof(line), "%.6g,%d,%d,%s,%lld,%.17g,%.17g,%.17g\n", row.p,
                      row.b, row.cap, row.estimator.c_str(),
                      static_cast<long long>(row.trials), row.estimate.e_tau_max,
                      row.estimate.e_delta_bar, row.estimate.e_r_bar);
        out << line;
    }
}

}  // namespace specdec
