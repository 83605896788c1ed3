#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dsss {

// Deterministic splitmix64 generator. All experiment randomness flows from a
// single 64-bit root seed through named sub-streams (geometry, appearance,
// lambda, crop, init, shuffle, ...) so that two runs with the same root seed
// are bit-identical on any platform. std::random distributions are avoided
// on purpose: their output is implementation-defined.
class StreamRng {
 public:
    explicit StreamRng(std::uint64_t seed) : state_(seed) {}

    // Derive an independent sub-stream from a root seed, a stream name and an
    // optional index (e.g. per-sample or per-worker).
    static StreamRng stream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
        std::uint64_t h = fnv1a(name);
        std::uint64_t s = mix(root ^ mix(h ^ mix(index + 0x9E3779B97F4A7C15ull)));
        return StreamRng(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0,n); n must be >= 1.
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    // Standard normal via Box-Muller; draws two uniforms per call.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

 private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001B3ull;
        }
        return h;
    }

    std::uint64_t state_;
};

}  // namespace dsss
