#pragma once

#include <cmath>
#include <cstdint>

namespace asae {

// Counter-based splittable RNG. Every consumer derives its own stream from
// the master seed plus a tag path, so results are reproducible regardless of
// evaluation order.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // decorrelate trivially related seeds
        next_u64();
        next_u64();
    }

    uint64_t next_u64() {
        // splitmix64
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_index(uint64_t n) {
        // rejection-free modulo bias is negligible for n << 2^64, but be exact anyway
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // standard normal, Box-Muller (no cached spare: keeps the stream stateless
    // with respect to call parity)
    double normal() {
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Derive an independent child stream for (this stream's seed, tag).
    Rng split(uint64_t tag) const {
        uint64_t mixed = state_ ^ (0x632be59bd9b4e019ull * (tag + 0x9e3779b97f4a7c15ull));
        return Rng(mixed);
    }

    uint64_t state() const { return state_; }

private:
    uint64_t state_;
};

} // namespace asae
