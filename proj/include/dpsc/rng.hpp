#pragma once

// Seeded random source shared by every stochastic component.
//
// Streams are derived, never shared: a stream key is built by folding a list
// of 64-bit tags (seed, purpose, step, row, ...) through the SplitMix64
// finalizer, and the resulting word seeds a std::mt19937_64 engine. Two
// streams with different tag lists are statistically independent for all
// practical purposes. Normal and uniform variates use the standard library
// distributions, so streams are reproducible for a given toolchain only.

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace dpsc {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a, used to turn purpose strings into stream tags.
constexpr std::uint64_t tag(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t k = 0x6a09e667f3bcc909ULL;
    for (auto p : parts) k = splitmix64(k ^ splitmix64(p));
    return k;
}

// Stream key for a privacy level, so every (seed, epsilon) cell trains
// on its own randomness. Infinity has a fixed bit pattern like any other value.
inline std::uint64_t epsilon_key(double eps) { return std::bit_cast<std::uint64_t>(eps); }

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::initializer_list<std::uint64_t> parts) : engine_(derive_seed(parts)) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal() { return normal_(engine_); }
    double normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }
    bool bernoulli(double p) { return uniform() < p; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dpsc
