#pragma once

#include <cstdint>

namespace specdec {

// SplitMix64 (Steele, Lea, Flood 2014). Used for weight initialization and
// seed derivation. The algorithm is fixed so checkpoints and synthetic-draft
// streams are bit-identical across platforms; all floats are derived from
// integer bits only.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 24 bits of mantissa.
    float next_unit_float() {
        return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
    }

    // Uniform in [0, 1), 53 bits of mantissa.
    double next_unit_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [-limit, limit).
    float next_symmetric(float limit) {
        return (2.0f * next_unit_float() - 1.0f) * limit;
    }

private:
    uint64_t state_;
};

// Stateless mix of up to three words into one seed. Used to derive
// independent streams (per sweep cell, per decode step/sample).
inline uint64_t mix_seed(uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    SplitMix64 r(a ^ (b * 0xD1B54A32D192ED03ULL) ^ (c * 0x8CB92BA72F3D8DD7ULL));
    return r.next_u64();
}

}  // namespace specdec
