#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace vertune {

// Stable 64-bit hashing used for cache keys, dedup digests and keyed
// randomness. Deliberately not std::hash: results must be identical across
// platforms, standard library versions and process restarts.

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = kFnvOffset) {
    for (char c : data) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t fnv1a64_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
    for (int i = 0; i < 8; ++i) {
        h ^= v & 0xff;
        h *= kFnvPrime;
        v >>= 8;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::string to_hex(std::uint64_t v);

// Counter-based generator whose stream depends only on the key material fed
// to the constructor. Two KeyedRng built from the same parts produce the
// same sequence regardless of thread, call order or platform.
class KeyedRng {
public:
    explicit KeyedRng(std::uint64_t seed) : state_(splitmix64(seed)) {}

    KeyedRng& mix(std::string_view part) {
        state_ = splitmix64(state_ ^ fnv1a64(part));
        return *this;
    }
    KeyedRng& mix(std::uint64_t part) {
        state_ = splitmix64(state_ ^ fnv1a64_u64(part));
        return *this;
    }

    std::uint64_t next_u64() {
        counter_ += 1;
        return splitmix64(state_ ^ splitmix64(counter_));
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

    bool next_bool(double p) { return next_double() < p; }

private:
    std::uint64_t state_;
    std::uint64_t counter_ = 0;
};

} // namespace vertune
