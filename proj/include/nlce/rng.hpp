#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace nlce {

// SplitMix64. All randomness in the engine flows through this generator so
// that traces reproduce bit-exactly across platforms and languages.
class SplitMix64 {
 public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit mantissa.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [-scale, scale).
    double next_symmetric(double scale) {
        return (2.0 * next_unit() - 1.0) * scale;
    }

 private:
    std::uint64_t state_;
};

// FNV-1a, used for prompt hashing and config hashing.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derive a named sub-seed from a root seed (model, init-latent, ...).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
    SplitMix64 g(root ^ fnv1a64(label));
    return g.next_u64();
}

}  // namespace nlce
