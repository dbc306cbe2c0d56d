#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

#include "common.hpp"

namespace fluidlogic {

// ---------------------------------------------------------------------------
// Philox 4x32-10 (Salmon et al.).  Pure function of (counter, key), so any
// (path, step) cell of the noise tensor can be generated independently of
// evaluation order or thread placement.
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline std::uint32_t mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  return static_cast<std::uint32_t>(p);
}

}  // namespace detail

using PhiloxCtr = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxCtr philox4x32(PhiloxCtr ctr, PhiloxKey key) {
  using namespace detail;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, hi1;
    const std::uint32_t lo0 = mulhilo(kPhiloxM4x32A, ctr[0], hi0);
    const std::uint32_t lo1 = mulhilo(kPhiloxM4x32B, ctr[2], hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW32A;
    key[1] += kPhiloxW32B;
  }
  return ctr;
}

// ---------------------------------------------------------------------------
// Derived draws.  A 64-bit seed becomes the key; the counter indexes the
// logical position of the draw: (path, step, pair, stream tag).  Uniforms map
// the two u64 lanes through (x+1) * 2^-64 so they land in (0, 1] and
// log(u) below stays finite.
// ---------------------------------------------------------------------------

struct CounterRng {
  std::uint64_t seed = 0;
  std::uint32_t tag = 0;  // disambiguates independent streams under one seed

  std::array<double, 2> uniform2(std::uint32_t path, std::uint32_t step,
                                 std::uint32_t pair) const {
    const PhiloxKey key = {static_cast<std::uint32_t>(seed),
                           static_cast<std::uint32_t>(seed >> 32)};
    const PhiloxCtr out = philox4x32({path, step, pair, tag}, key);
    const std::uint64_t a =
        (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    const std::uint64_t b =
        (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    constexpr double scale = 0x1p-64;  // 2^-64
    return {(static_cast<double>(a) + 1.0) * scale,
            (static_cast<double>(b) + 1.0) * scale};
  }

  // Box-Muller on one counter cell -> two independent N(0,1) variates.
  std::array<double, 2> gauss2(std::uint32_t path, std::uint32_t step,
                               std::uint32_t pair) const {
    const auto [u1, u2] = uniform2(path, step, pair);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(th), r * std::sin(th)};
  }

  // Fill `out` with N(0,1) draws for one (path, step) cell, consuming
  // ceil(n/2) counter pairs.  Deterministic in (seed, tag, path, step).
  void fill_gauss(std::uint32_t path, std::uint32_t step,
                  std::span<double> out) const {
    for (std::size_t i = 0; i < out.size(); i += 2) {
      const auto g = gauss2(path, step, static_cast<std::uint32_t>(i / 2));
      out[i] = g[0];
      if (i + 1 < out.size()) out[i + 1] = g[1];
    }
  }

  double uniform(std::uint32_t path, std::uint32_t step,
                 std::uint32_t pair) const {
    return uniform2(path, step, pair)[0];
  }
};

}  // namespace fluidlogic
