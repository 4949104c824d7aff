#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace kinetics {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by a 64-bit key and a 64-bit stream id; the remaining
/// 64 counter bits enumerate blocks inside the stream. Streams with different
/// (key, id) are statistically independent, which is what makes per-pair and
/// per-batch randomness reproducible regardless of scheduling.
class Philox4x32 {
  public:
    using result_type = std::uint32_t;
    using block_type = std::array<std::uint32_t, 4>;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    Philox4x32() = default;
    Philox4x32(std::uint64_t key, std::uint64_t stream_id) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
          ctr_{0, 0, static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)} {}

    /// Raw bijection: encrypt one counter block under a key.
    static block_type block(block_type ctr, std::array<std::uint32_t, 2> key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

    result_type operator()() noexcept {
        if (used_ == 4) {
            buf_ = block(ctr_, key_);
            if (++ctr_[0] == 0) ++ctr_[1];
            used_ = 0;
        }
        return buf_[used_++];
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t hi = (*this)();
        return (hi << 32) | (*this)();
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    /// The same map applied to two words of a raw block.
    static double to_uniform(std::uint32_t hi, std::uint32_t lo) noexcept {
        const std::uint64_t x = (std::uint64_t{hi} << 32) | lo;
        return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Key words for a 64-bit seed, for use with block().
    static std::array<std::uint32_t, 2> key_of(std::uint64_t seed) noexcept {
        return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    }

    /// Standard normal via Box-Muller; both variates are used.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n) by Lemire's nearly-divisionless method.
    std::uint64_t below(std::uint64_t n) noexcept {
        std::uint32_t x = (*this)();
        if (n <= 0xFFFFFFFFull) {
            const auto n32 = static_cast<std::uint32_t>(n);
            std::uint64_t m = std::uint64_t{x} * n32;
            auto lo = static_cast<std::uint32_t>(m);
            if (lo < n32) {
                const std::uint32_t t = static_cast<std::uint32_t>(-n32) % n32;
                while (lo < t) {
                    x = (*this)();
                    m = std::uint64_t{x} * n32;
                    lo = static_cast<std::uint32_t>(m);
                }
            }
            return m >> 32;
        }
        // Large ranges: simple rejection on 64-bit draws.
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t y = next_u64();
        while (y >= limit) y = next_u64();
        return y % n;
    }

    /// Poisson variate: inversion for small means, PTRS (Hormann 1993) otherwise.
    std::uint64_t poisson(double mean) noexcept {
        if (!(mean > 0.0)) return 0;
        if (mean < 10.0) {
            const double limit = std::exp(-mean);
            double prod = uniform();
            std::uint64_t k = 0;
            while (prod > limit) {
                prod *= uniform();
                ++k;
            }
            return k;
        }
        const double smu = std::sqrt(mean);
        const double b = 0.931 + 2.53 * smu;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        const double log_mean = std::log(mean);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::abs(u);
            const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
                -mean + k * log_mean - std::lgamma(k + 1.0))
                return static_cast<std::uint64_t>(k);
        }
    }

  private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    std::array<std::uint32_t, 2> key_{};
    block_type ctr_{};
    block_type buf_{};
    int used_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Mix several integers into one 64-bit stream id (splitmix64 finalizer chain).
constexpr std::uint64_t stream_id(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(a) ^ b) ^ c);
}

}  // namespace kinetics
