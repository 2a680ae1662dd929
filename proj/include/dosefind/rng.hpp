#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace dosefind {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// xoshiro256** generator. Every derived quantity (uniform doubles, bounded
/// integers) is computed here from raw 64-bit output, so streams are
/// bit-identical across compilers and standard libraries.
class RngStream {
   public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return next(); }
    result_type next();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) { return uniform() < p; }
    /// Unbiased integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

   private:
    std::array<std::uint64_t, 4> s_{};
};

/// Independent stream for one (scenario, trial) replay. The same triple always
/// gives the same stream.
RngStream derive_rng_stream(std::uint64_t master_seed, std::uint64_t scenario_id,
                            std::uint64_t trial_id);

/// Trial id reserved for scenario generation draws.
inline constexpr std::uint64_t kScenarioStreamId = std::numeric_limits<std::uint64_t>::max();

}  // namespace dosefind
