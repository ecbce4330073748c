#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedcme::rng {

// SplitMix64 finalizer. Used to derive independent seed streams so that
// consuming randomness in one stream (e.g. the eval split) never shifts
// another (e.g. batch order).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream tags keep unrelated consumers of the same run seed decorrelated.
enum Stream : std::uint64_t {
    kModelInit = 0x01,
    kSelection = 0x02,
    kBatch = 0x03,
    kEvalSplit = 0x04,
    kBlobs = 0x05,
    kPartition = 0x06,
};

// Fold a path of identifiers (stream tag, client id, round, epoch, ...)
// into a single derived seed.
inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(seed);
    for (std::uint64_t p : path) {
        s = splitmix64(s ^ splitmix64(p + 0x9e3779b97f4a7c15ULL));
    }
    return s;
}

inline std::mt19937_64 engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace fedcme::rng
