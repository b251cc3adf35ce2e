#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "clora/common.hpp"

namespace clora {

// splitmix64; used to expand seeds and derive named child streams.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// xoshiro256++ with explicit state so streams serialize into checkpoints
// byte-for-byte. std::random distributions are implementation-defined, so
// all sampling (uniform, normal via Box-Muller) is done here.
class RngStream {
  public:
    RngStream() : RngStream(0) {}

    explicit RngStream(uint64_t seed) {
        uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    // Child stream derived from this stream's seed lineage and a tag.
    static RngStream child(uint64_t seed, const char* tag) {
        uint64_t mix = seed ^ fnv1a64(tag, std::char_traits<char>::length(tag));
        return RngStream(mix);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) {
        return uniform() < p;
    }

    // Standard normal via Box-Muller. No spare caching: two uniforms are
    // drawn per sample so the stream state stays a pure function of the
    // number of samples drawn.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();  // guard log(0)
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    std::array<uint64_t, 4> state() const { return state_; }
    void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<uint64_t, 4> state_{};
};

}  // namespace clora
