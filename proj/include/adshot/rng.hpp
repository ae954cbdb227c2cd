#pragma once
#include <cstdint>

namespace adshot {

// SplitMix64 stream used for weight initialization. The exact update and
// the 53-bit unit-interval mapping below are part of the reproducibility
// contract: any implementation drawing the same seed must produce
// bit-identical weights.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) from the top 53 bits.
    double next_unit() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform in [-bound, +bound]; computed in double, rounded to float.
    float next_uniform(double bound) {
        return static_cast<float>((2.0 * next_unit() - 1.0) * bound);
    }

private:
    std::uint64_t state_;
};

} // namespace adshot
