#pragma once

// Deterministic draws for everything that needs a seed. splitmix64 by hand;
// never std::uniform_*_distribution, whose output is implementation-defined
// and would break byte-identical reruns across standard libraries.

#include <cstdint>

namespace halknob {

struct SplitMixRng {
    uint64_t state;

    explicit SplitMixRng(uint64_t s) : state(s) {}

    uint64_t next() {
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    size_t below(size_t n) { return static_cast<size_t>(next() % n); }

    double unit() {  // [0, 1)
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }
};

// Independent per-item stream from one master seed; item i's stream never
// depends on how many items came before it, so work can be split across
// workers in any order.
inline uint64_t derive_seed(uint64_t seed, size_t index) {
    SplitMixRng mixer(seed ^ (0x5851f42d4c957f2dULL * (index + 1)));
    mixer.next();
    return mixer.next();
}

}  // namespace halknob
