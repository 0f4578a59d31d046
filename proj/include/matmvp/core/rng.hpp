// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace matmvp {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_str(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derive an independent stream seed from a master seed and a stream name.
inline uint64_t derive_seed(uint64_t master, const std::string& stream) {
    return splitmix64(master ^ splitmix64(hash_str(stream)));
}

// Deterministic RNG with portable uniform/gaussian draws (the distributions in
// <random> are implementation-defined; Box-Muller here is not). Serializable,
// so checkpoints can resume mid-stream.
class Rng {
public:
    Rng() : Rng(0x1234abcdULL) {}
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        // Rejection sampling keeps the draw exactly uniform.
        const uint64_t limit = ~0ULL - (~0ULL % n);
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // Box-Muller; u1 forced away from 0 so log() is finite.
        const double u1 = (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
        const double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << eng_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
        os.precision(17);
        os << spare_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int hs = 0;
        is >> eng_ >> hs >> spare_;
        has_spare_ = (hs != 0);
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace matmvp
