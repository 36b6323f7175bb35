#pragma once

#include <cmath>
#include <cstdint>

namespace divbar {

/// Philox-4x32-10 counter-based generator. Each (key, counter) pair maps to
/// four independent 32-bit words, so a (seed, path, step) triple addresses
/// its random draws directly: streams are reproducible for any execution
/// order and never overlap.
struct Philox4x32 {
    static constexpr std::uint32_t M0 = 0xD2511F53u;
    static constexpr std::uint32_t M1 = 0xCD9E8D57u;
    static constexpr std::uint32_t W0 = 0x9E3779B9u;
    static constexpr std::uint32_t W1 = 0xBB67AE85u;

    struct Block {
        std::uint32_t v[4];
    };

    static inline void round(std::uint32_t* ctr, const std::uint32_t* key) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        const std::uint32_t out[4] = {hi1 ^ ctr[1] ^ key[0], lo1,
                                      hi0 ^ ctr[3] ^ key[1], lo0};
        ctr[0] = out[0];
        ctr[1] = out[1];
        ctr[2] = out[2];
        ctr[3] = out[3];
    }

    static Block generate(std::uint64_t seed, std::uint64_t path,
                          std::uint64_t step) {
        std::uint32_t key[2] = {static_cast<std::uint32_t>(seed),
                                static_cast<std::uint32_t>(seed >> 32)};
        std::uint32_t ctr[4] = {static_cast<std::uint32_t>(path),
                                static_cast<std::uint32_t>(path >> 32),
                                static_cast<std::uint32_t>(step),
                                static_cast<std::uint32_t>(step >> 32)};
        for (int r = 0; r < 10; ++r) {
            round(ctr, key);
            key[0] += W0;
            key[1] += W1;
        }
        return {{ctr[0], ctr[1], ctr[2], ctr[3]}};
    }
};

/// Uniform in the open interval (0,1) from two 32-bit words.
inline double uniform_open(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits =
        (static_cast<std::uint64_t>(hi) << 32) | static_cast<std::uint64_t>(lo);
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

/// Inverse of the standard normal CDF (Wichura's AS 241, double precision).
double normal_inverse_cdf(double u);

/// One block per (seed, path, step): a standard normal via the inverse CDF
/// plus two auxiliary uniforms, one for the barrier bridge maximum and one
/// for the wall-crossing test. The auxiliaries only gate sub-step boundary
/// events, so 32-bit resolution is enough.
struct StepDraw {
    double z;
    double u_barrier;
    double u_wall;
};

inline StepDraw step_draw(std::uint64_t seed, std::uint64_t path,
                          std::uint64_t step) {
    const Philox4x32::Block b = Philox4x32::generate(seed, path, step);
    return {normal_inverse_cdf(uniform_open(b.v[0], b.v[1])),
            (static_cast<double>(b.v[2]) + 0.5) * 0x1.0p-32,
            (static_cast<double>(b.v[3]) + 0.5) * 0x1.0p-32};
}

} // namespace divbar
