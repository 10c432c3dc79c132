#pragma once

#include <cstdint>
#include <random>

namespace cosmix {

// splitmix64 finalizer, used to decorrelate derived seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Explicit random stream. Every stochastic operation takes one by reference;
/// independent workers derive their own with `Rng::stream`.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(mix_seed(seed)) {}

    /// Substream keyed by (seed, index), independent of draw order elsewhere.
    static Rng stream(std::uint64_t seed, std::uint64_t index) {
        return Rng(mix_seed(seed) ^ mix_seed(index + 0x632BE59BD9B4E019ULL));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Fresh child stream; consumes one draw from this stream.
    Rng split() { return Rng(next_u64()); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
        return dist(engine_);
    }

    double normal(double mean, double stddev) {
        std::normal_distribution<double> dist(mean, stddev);
        return dist(engine_);
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace cosmix
