// Counter-based random number generation with independent substreams.
//
// Every Monte Carlo trial, dataset example and model initialization gets its
// own stream addressed by (seed, domain, index). Streams never overlap, so
// results are reproducible regardless of how work is scheduled across
// threads.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>

namespace irsce {

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

// Philox-4x32 block function, 10 rounds.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t(kPhiloxM0) * ctr[0];
        const std::uint64_t p1 = std::uint64_t(kPhiloxM1) * ctr[2];
        const auto hi0 = std::uint32_t(p0 >> 32);
        const auto lo0 = std::uint32_t(p0);
        const auto hi1 = std::uint32_t(p1 >> 32);
        const auto lo1 = std::uint32_t(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kPhiloxW0;
        key[1] += kPhiloxW1;
    }
    return ctr;
}

}  // namespace detail

// Disjoint stream namespaces. Dataset generation and evaluation sweeps draw
// from different domains, so train/test leakage is impossible by
// construction.
enum class SeedDomain : std::uint64_t {
    kDataset = 1,
    kSweep = 2,
    kModelInit = 3,
    kShuffle = 4,
    kMisc = 5,
};

class RngStream {
  public:
    RngStream(std::uint64_t seed, SeedDomain domain, std::uint64_t index)
        : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
          stream_id_((static_cast<std::uint64_t>(domain) << 56) | (index & ((std::uint64_t(1) << 56) - 1))),
          counter_(0),
          buf_pos_(4) {}

    std::uint32_t next_u32() {
        if (buf_pos_ == 4) {
            buf_ = detail::philox4x32({std::uint32_t(counter_), std::uint32_t(counter_ >> 32),
                                       std::uint32_t(stream_id_), std::uint32_t(stream_id_ >> 32)},
                                      key_);
            ++counter_;
            buf_pos_ = 0;
        }
        return buf_[buf_pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_open01() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // Standard normal via Box-Muller.
    double normal() {
        const double u1 = uniform_open01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Circularly symmetric complex Gaussian with unit total variance
    // (real and imaginary parts each N(0, 1/2)).
    std::complex<double> complex_normal() {
        const double u1 = uniform_open01();
        const double u2 = uniform01();
        const double r = std::sqrt(-std::log(u1));
        return {r * std::cos(2.0 * M_PI * u2), r * std::sin(2.0 * M_PI * u2)};
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo is fine here: n is always tiny compared
        // to 2^64, so the bias is unobservable.
        return next_u64() % n;
    }

  private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_id_;
    std::uint64_t counter_;
    std::array<std::uint32_t, 4> buf_{};
    int buf_pos_;
};

inline RngStream make_stream(std::uint64_t seed, SeedDomain domain, std::uint64_t index) {
    return RngStream(seed, domain, index);
}

}  // namespace irsce
