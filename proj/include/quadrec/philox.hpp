#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11) and the
// bit conversions used to turn its output into doubles.
//
// Every random quantity in quadrec is a pure function of (key, counter), so a
// single matrix entry can be regenerated without replaying a stream.

#include <array>
#include <cstddef>
#include <cstdint>

namespace quadrec {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

namespace detail {
inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;
}  // namespace detail

constexpr PhiloxKey make_key(std::uint64_t seed) noexcept {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
  std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{detail::kPhiloxM0} * c0;
    const std::uint64_t p1 = std::uint64_t{detail::kPhiloxM1} * c2;
    const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
    const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
    c1 = static_cast<std::uint32_t>(p1);
    c3 = static_cast<std::uint32_t>(p0);
    c0 = n0;
    c2 = n2;
    k0 += detail::kPhiloxW0;
    k1 += detail::kPhiloxW1;
  }
  return {c0, c1, c2, c3};
}

/// Evaluates Philox on `count` counters {c0, c1, c2, c3_first + j}, writing
/// the four output words of counter j to out0[j]..out3[j]. Laid out as
/// structure-of-arrays so the rounds vectorize.
template <std::size_t Block>
inline void philox4x32_10_block(std::uint32_t c0, std::uint32_t c1, std::uint32_t c2,
                                std::uint32_t c3_first, PhiloxKey key, std::uint32_t* out0,
                                std::uint32_t* out1, std::uint32_t* out2,
                                std::uint32_t* out3) noexcept {
  std::uint32_t x0[Block], x1[Block], x2[Block], x3[Block];
  for (std::size_t j = 0; j < Block; ++j) {
    x0[j] = c0;
    x1[j] = c1;
    x2[j] = c2;
    x3[j] = c3_first + static_cast<std::uint32_t>(j);
  }
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    for (std::size_t j = 0; j < Block; ++j) {
      const std::uint64_t p0 = std::uint64_t{x0[j]} * detail::kPhiloxM0;
      const std::uint64_t p1 = std::uint64_t{x2[j]} * detail::kPhiloxM1;
      const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ x1[j] ^ k0;
      const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ x3[j] ^ k1;
      x1[j] = static_cast<std::uint32_t>(p1);
      x3[j] = static_cast<std::uint32_t>(p0);
      x0[j] = n0;
      x2[j] = n2;
    }
    k0 += detail::kPhiloxW0;
    k1 += detail::kPhiloxW1;
  }
  for (std::size_t j = 0; j < Block; ++j) {
    out0[j] = x0[j];
    out1[j] = x1[j];
    out2[j] = x2[j];
    out3[j] = x3[j];
  }
}

/// Two 32-bit words -> double in the open interval (0, 1), using the top 52 bits.
constexpr double open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1p-52;
}

/// 64-bit mixing hash (SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derives a child seed from a parent seed and an ordered list of coordinates.
/// Used for trial / cell / sub-stream seeds throughout the harness.
template <typename... Coords>
constexpr std::uint64_t derive_seed(std::uint64_t base, Coords... coords) noexcept {
  std::uint64_t h = mix64(base ^ 0x6A09E667F3BCC909ull);
  ((h = mix64(h ^ mix64(static_cast<std::uint64_t>(coords) + 0x3C6EF372FE94F82Bull))), ...);
  return h;
}

}  // namespace quadrec
