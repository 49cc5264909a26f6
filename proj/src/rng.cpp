#include "cvpm/rng.hpp"

#include <cmath>

namespace cvpm {
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

}  // namespace

std::uint64_t RngStream::next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * kGamma);
}

double RngStream::next_uniform() {
    // 53-bit mantissa, shifted into (0, 1].
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::next_normal() {
    if (have_cached_normal_) {
        have_cached_normal_ = false;
        return cached_normal_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(theta);
    have_cached_normal_ = true;
    return r * std::cos(theta);
}

RngStream RngStream::substream(std::uint64_t key) const {
    return RngStream(mix64(seed_ ^ mix64(key + kGamma)));
}

}  // namespace cvpm
