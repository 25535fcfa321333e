#pragma once

#include <cstdint>

namespace dcfq {

// Counter-based generator: every draw is a stateless hash of
// (seed, stream, counter), so any draw in a run can be reproduced without
// replaying the ones before it. Streams separate independent decision
// sequences (one per node, plus one for arrivals); equality of all three
// inputs is the only way to repeat an output.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const {
        // SplitMix64 finalizer over an affine combination of the inputs; the
        // odd constants decorrelate the three coordinates.
        std::uint64_t z = seed_;
        z += 0x9e3779b97f4a7c15ULL * (stream + 0x632be59bd9b4e019ULL);
        z = mix(z);
        z += 0x9e3779b97f4a7c15ULL * (counter + 1ULL);
        return mix(z);
    }

    // Uniform draw in [0, 1) with 53 significant bits.
    double uniform(std::uint64_t stream, std::uint64_t counter) const {
        return static_cast<double>(bits(stream, counter) >> 11) * 0x1.0p-53;
    }

    std::uint64_t seed() const { return seed_; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t seed_;
};

} // namespace dcfq
