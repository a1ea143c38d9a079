#pragma once

#include <array>
#include <cstdint>

namespace sparselda {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Every consumer opens its own stream addressed by (seed, stream kind,
// element id); the sequence depends only on that address, never on worker
// interleaving or chunk layout.
namespace philox {

inline constexpr std::uint32_t kW32A = 0x9E3779B9u;
inline constexpr std::uint32_t kW32B = 0xBB67AE85u;
inline constexpr std::uint32_t kM4x32A = 0xD2511F53u;
inline constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    lo = static_cast<std::uint32_t>(p);
    hi = static_cast<std::uint32_t>(p >> 32);
}

inline std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                          std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t lo0, hi0, lo1, hi1;
        mul_hi_lo(kM4x32A, ctr[0], lo0, hi0);
        mul_hi_lo(kM4x32B, ctr[2], lo1, hi1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kW32A;
        key[1] += kW32B;
    }
    return ctr;
}

}  // namespace philox

// Stream kinds. Training iterations use their iteration number directly;
// the reserved ranges below never collide with realistic iteration counts.
inline constexpr std::uint32_t kInitAssignStream = 0xFFFFFFFFu;
inline constexpr std::uint32_t kHeldoutInitStream = 0xFFFD0000u;
inline constexpr std::uint32_t kHeldoutSweepBase = 0xFFFE0000u;

// A deterministic stream of uniforms in [0, 1), reproducible from
// (seed, kind, element). Each Philox block yields two doubles.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint32_t kind, std::uint64_t element)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          base_{kind, static_cast<std::uint32_t>(element),
                static_cast<std::uint32_t>(element >> 32), 0} {}

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        if (cached_ == 0) refill();
        const std::uint64_t bits = buffer_[--cached_];
        return static_cast<double>(bits >> 11) * 0x1.0p-53;
    }

    std::uint64_t next_u64() {
        if (cached_ == 0) refill();
        return buffer_[--cached_];
    }

private:
    void refill() {
        auto ctr = base_;
        ctr[3] = block_index_++;
        const auto out = philox::block(ctr, key_);
        buffer_[1] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
        buffer_[0] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
        cached_ = 2;
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> base_;
    std::uint32_t block_index_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int cached_ = 0;
};

}  // namespace sparselda
