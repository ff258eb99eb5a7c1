#ifndef DEMS_RNG_HPP
#define DEMS_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace dems {

// Deterministic random stream (xoshiro256++ seeded via splitmix64).
// The standard library distributions are implementation-defined, so every
// draw used for splits, augmentation plans and perturbation parameters goes
// through this class to keep results identical across platforms.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Standard normal via the polar Box-Muller method (no cached spare, so the
    // draw sequence is a pure function of the call sequence).
    double normal() {
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        return u * std::sqrt(-2.0 * std::log(s) / s);
    }

    // Independent child stream; used to give each sample its own sequence.
    RandomStream fork(std::uint64_t tag) {
        const std::uint64_t a = next_u64();
        return RandomStream(a ^ (tag * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
    }

    // Explicit Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
};

}  // namespace dems

#endif
