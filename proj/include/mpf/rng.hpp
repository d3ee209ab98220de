#ifndef MPF_RNG_HPP
#define MPF_RNG_HPP

#include <cstdint>

namespace mpf {

// splitmix64 finalizer. Also used to derive per-run seeds:
//   run_seed(master, k) = mix64(master + mix64(k + GOLDEN))
// so results are reproducible from the master seed in any language.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t run_seed(std::uint64_t master, std::uint64_t run_index) {
    return mix64(master + mix64(run_index + 0x9E3779B97F4A7C15ULL));
}

// Deterministic PRNG (splitmix64 stream). Not cryptographic; picked for
// portability: the sequence is defined by the two formulas above alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * next_double(); }

    bool bernoulli(double p) { return next_double() < p; }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        return next_u64() % n;  // modulo bias negligible for n << 2^64
    }

private:
    std::uint64_t state_;
};

}  // namespace mpf

#endif  // MPF_RNG_HPP
