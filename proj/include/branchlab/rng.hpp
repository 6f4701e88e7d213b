#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace branchlab {

// Philox4x32-10 counter-based generator.  Counter words 0..1 hold the draw
// counter, words 2..3 hold a 64-bit stream uid, so unrelated streams under
// the same key never collide and a stream can spawn children without
// consuming its own draws.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::array<uint32_t, 4> philox4x32_10(std::array<uint32_t, 4> x,
                                             std::array<uint32_t, 2> key) {
    constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr uint32_t KW0 = 0x9E3779B9u, KW1 = 0xBB67AE85u;
    uint32_t k0 = key[0], k1 = key[1];
    for (int round = 0; round < 10; ++round) {
        uint64_t p0 = uint64_t(x[0]) * M0;
        uint64_t p1 = uint64_t(x[2]) * M1;
        uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
        uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
        x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
        k0 += KW0;
        k1 += KW1;
    }
    return x;
}

class rng {
  public:
    // Experiment-level stream: key mixed from (seed, experiment, replicate).
    rng(uint64_t seed, uint64_t experiment, uint64_t replicate)
        : rng(splitmix64(splitmix64(splitmix64(seed) ^ experiment) ^ replicate),
              uint64_t(1)) {}

    rng(uint64_t key64, uint64_t uid) : key64_(key64), uid_(uid) {}

    // Same key, fresh uid; used for per-particle / per-task streams.
    rng stream(uint64_t uid) const { return rng(key64_, uid); }

    // Deterministic child stream: depends only on (key, parent uid, rank).
    rng child(uint64_t rank) const {
        return rng(key64_, splitmix64(uid_ ^ splitmix64(rank + 0x51ED270B4A3Cull)));
    }

    uint64_t uid() const { return uid_; }

    // Jump to an absolute draw-counter position, discarding buffered words.
    // Particle steppers key one Philox block per (uid, step index), so a
    // stream rebuilt anywhere produces the same values for the same step.
    void seek(uint64_t draw) {
        draw_ = draw;
        pos_ = 4;
        have_normal_ = false;
    }

    uint32_t next_u32() {
        if (pos_ == 4) {
            std::array<uint32_t, 4> ctr = {uint32_t(draw_), uint32_t(draw_ >> 32),
                                           uint32_t(uid_), uint32_t(uid_ >> 32)};
            buf_ = philox4x32_10(ctr, {uint32_t(key64_), uint32_t(key64_ >> 32)});
            ++draw_;
            pos_ = 0;
        }
        return buf_[pos_++];
    }

    uint64_t next_u64() {
        uint64_t lo = next_u32();
        return (uint64_t(next_u32()) << 32) | lo;
    }

    // Uniform on (0,1): (x+1/2)*2^-32 never returns an endpoint.
    double uniform() { return (double(next_u32()) + 0.5) * 0x1p-32; }

    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return cached_normal_;
        }
        double u1 = uniform(), u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double c = std::cos(6.283185307179586477 * u2);
        double s = std::sin(6.283185307179586477 * u2);
        cached_normal_ = r * s;
        have_normal_ = true;
        return r * c;
    }

    double exponential() { return -std::log(uniform()); }

  private:
    uint64_t key64_;
    uint64_t uid_;
    uint64_t draw_ = 0;
    std::array<uint32_t, 4> buf_{};
    int pos_ = 4;
    double cached_normal_ = 0.0;
    bool have_normal_ = false;
};

}  // namespace branchlab
