#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace klmc {

/// Philox4x32-10 block function.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{M0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{M1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

/// Stream tags separating independent uses of one (seed, replica, step) triple.
enum class Tag : std::uint32_t {
    noise = 1,
    accept = 2,
    init = 3,
    sample = 4,
    test = 5,
};

/**
 * @brief Counter-based generator keyed by (seed, replica, tag, step).
 *
 * Two generators with the same key produce the same sequence regardless of
 * which thread constructs them or in what order.
 */
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t replica, Tag tag, std::uint64_t step)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          tag_word_(static_cast<std::uint32_t>(tag) |
                    (static_cast<std::uint32_t>(step >> 32) << 8)),
          step_(static_cast<std::uint32_t>(step)),
          replica_(static_cast<std::uint32_t>(replica)) {}

    std::uint32_t next_u32() {
        if (pos_ == 4) {
            buf_ = philox4x32({block_++, tag_word_, step_, replica_}, key_);
            pos_ = 0;
        }
        return buf_[pos_++];
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() {
        const std::uint64_t a = next_u32() >> 5;
        const std::uint64_t b = next_u32() >> 6;
        return (static_cast<double>(a * 67108864u + b) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        spare_ = rad * std::sin(ang);
        has_spare_ = true;
        return rad * std::cos(ang);
    }

    void fill_normal(std::span<double> out) {
        for (double& x : out) x = normal();
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint32_t tag_word_;
    std::uint32_t step_;
    std::uint32_t replica_;
    std::uint32_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace klmc
