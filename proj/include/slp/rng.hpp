#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace slp {

// SplitMix64 output function (Steele, Lea & Flood). Stateless bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derives an independent sub-seed from a base seed and a counter/tag chain.
// Used to give every corpus example its own stateless generator.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> chain) {
    std::uint64_t k = mix64(seed);
    for (std::uint64_t c : chain) {
        k = mix64(k ^ mix64(c));
    }
    return k;
}

// Sequential SplitMix64 generator. The entire state is one 64-bit word,
// which makes checkpointing and cross-run reproducibility trivial.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // Standard normal via Box-Muller. Consumes two uniforms per call and
    // keeps no cache, so the generator state alone reproduces the stream.
    double gaussian() {
        double u1 = unit();
        double u2 = unit();
        while (u1 <= 0.0) u1 = unit();  // log(0) guard
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Uniform integer in [0, n) via 128-bit multiply-shift (Lemire).
    // The modulo bias of ~n/2^64 is far below anything observable here.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * static_cast<unsigned __int128>(n)) >> 64);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

}  // namespace slp
