#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "eegdec/errors.hpp"

namespace eegdec {

// xoshiro256** seeded through splitmix64. Hand-rolled so that streams are
// bit-reproducible across platforms and the state serializes as five words.
// Named substreams derive their seed from the parent seed and the stream
// name, so consumption order in one stream never perturbs another.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {
        uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive bounds, unbiased via rejection.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (lo > hi) throw ContractError("uniform_int: lo > hi");
        const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<int64_t>(next_u64()); // full 64-bit span
        const uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<int64_t>(x % range);
    }

    // Standard normal via Box-Muller; no cached spare so the state stays
    // a pure function of draw count.
    double normal() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    Rng substream(std::string_view name) const {
        uint64_t h = 1469598103934665603ull; // FNV-1a
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        uint64_t mixed = seed_ ^ h;
        return Rng(splitmix64(mixed));
    }

    uint64_t seed() const { return seed_; }

    std::array<uint64_t, 5> state() const { return {seed_, s_[0], s_[1], s_[2], s_[3]}; }

    void set_state(const std::array<uint64_t, 5>& st) {
        seed_ = st[0];
        s_ = {st[1], st[2], st[3], st[4]};
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint64_t seed_;
    std::array<uint64_t, 4> s_;
};

} // namespace eegdec
