#include "dosefind/rng.hpp"

namespace dosefind {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) {
        x += 0x9E3779B97F4A7C15ull;
        word = splitmix64(x);
    }
}

RngStream::result_type RngStream::next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

std::uint64_t RngStream::below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    // Rejection on the top of the range keeps every residue equally likely.
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t x;
    do {
        x = next();
    } while (x >= limit);
    return x % bound;
}

RngStream derive_rng_stream(std::uint64_t master_seed, std::uint64_t scenario_id,
                            std::uint64_t trial_id) {
    std::uint64_t h = splitmix64(master_seed);
    h = splitmix64(h ^ splitmix64(scenario_id + 0x632BE59BD9B4E019ull));
    h = splitmix64(h ^ splitmix64(trial_id + 0x85157AF5D2A9E4C3ull));
    return RngStream(h);
}

}  // namespace dosefind
