#pragma once

#include <cstdint>

namespace cvpm {

// Counter-based random stream built on the splitmix64 mixing function.
// The k-th draw is a pure function of (seed, k), so identical seeds give
// identical sequences on every platform and substreams can be split off
// deterministically for parallel or common-random-number use.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), counter_(0) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();

    // Uniform draw in (0, 1].
    double next_uniform();

    // Standard normal via Box-Muller (two uniforms per pair, second cached).
    double next_normal();

    // Independent stream derived from (seed, key); does not advance *this.
    RngStream substream(std::uint64_t key) const;

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace cvpm
