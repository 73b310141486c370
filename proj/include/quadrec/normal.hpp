#pragma once

// Standard normal variates from Philox output via Box–Muller.
//
// log and sin/cos are evaluated with fixed polynomials built from IEEE-754
// +, -, *, / only, so the variates do not depend on the platform libm. Build
// with -ffp-contract=off (the quadrec CMake target sets it) to keep
// compilers from fusing multiply-adds.
//
// Scheme, frozen:
//   words (w0, w1, w2, w3) = Philox4x32-10(counter, key)
//   k1 = (w0:w1) >> 12, k2 = (w2:w3) >> 12               52-bit integers
//   u1 = (k1 + 1/2) 2^-52                                   in (0, 1)
//   theta = 2 pi (k2 + 1/2) 2^-52, reduced exactly to quadrant k2 >> 50
//   rho = sqrt(-2 log u1)
//   (g0, g1) = (rho cos theta, rho sin theta)

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>

#include "quadrec/philox.hpp"

namespace quadrec {

namespace detail {

/// Exact conversion of an integer below 2^52 to double.
inline double small_int_to_double(std::uint64_t k) noexcept {
  return std::bit_cast<double>(k | 0x4330000000000000ull) - 4503599627370496.0;
}

inline std::uint64_t top52(std::uint32_t hi, std::uint32_t lo) noexcept {
  return ((std::uint64_t{hi} << 32) | lo) >> 12;
}

/// sqrt(-2 log u) for u = (k + 1/2) 2^-52. The log is 2 atanh((f-1)/(f+1))
/// on the mantissa f in [sqrt(1/2), sqrt(2)); relative error below 1e-15.
inline double box_muller_radius(std::uint64_t k) noexcept {
  const double u = (std::bit_cast<double>(k | 0x3FF0000000000000ull) - 1.0) + 0x1p-53;
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(u);
  const std::uint64_t mant = bits & 0x000FFFFFFFFFFFFFull;
  const std::uint64_t big = mant > 0x6A09E667F3BCDull ? 1 : 0;  // f > sqrt(2)
  const double e = small_int_to_double(((bits >> 52) & 0x7FF) + big) - 1023.0;
  const double f = std::bit_cast<double>(mant | ((0x3FFull - big) << 52));
  const double s = (f - 1.0) / (f + 1.0);
  const double s2 = s * s;
  double p = 1.0 / 23;
  p = p * s2 + 1.0 / 21;
  p = p * s2 + 1.0 / 19;
  p = p * s2 + 1.0 / 17;
  p = p * s2 + 1.0 / 15;
  p = p * s2 + 1.0 / 13;
  p = p * s2 + 1.0 / 11;
  p = p * s2 + 1.0 / 9;
  p = p * s2 + 1.0 / 7;
  p = p * s2 + 1.0 / 5;
  p = p * s2 + 1.0 / 3;
  const double log_f = 2.0 * s + 2.0 * s * s2 * p;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  return std::sqrt(-2.0 * (e * kLn2Hi + (log_f + e * kLn2Lo)));
}

/// (cos theta, sin theta) for theta = 2 pi (k + 1/2) 2^-52; abs error below 1e-15.
inline std::pair<double, double> box_muller_angle(std::uint64_t k) noexcept {
  const std::uint64_t quadrant = k >> 50;
  // theta = quadrant * pi/2 + pi/4 + phi, phi in (-pi/4, pi/4)
  const double frac = small_int_to_double(k & ((std::uint64_t{1} << 50) - 1));
  const double phi = ((frac + 0.5) * 0x1p-50 - 0.5) * 1.5707963267948966;
  const double p2 = phi * phi;
  double sp = -1.0 / 355687428096000.0;
  sp = sp * p2 + 1.0 / 1307674368000.0;
  sp = sp * p2 - 1.0 / 6227020800.0;
  sp = sp * p2 + 1.0 / 39916800.0;
  sp = sp * p2 - 1.0 / 362880.0;
  sp = sp * p2 + 1.0 / 5040.0;
  sp = sp * p2 - 1.0 / 120.0;
  sp = sp * p2 + 1.0 / 6.0;
  const double sin_phi = phi - phi * p2 * sp;
  double cp = 1.0 / 20922789888000.0;
  cp = cp * p2 - 1.0 / 87178291200.0;
  cp = cp * p2 + 1.0 / 479001600.0;
  cp = cp * p2 - 1.0 / 3628800.0;
  cp = cp * p2 + 1.0 / 40320.0;
  cp = cp * p2 - 1.0 / 720.0;
  cp = cp * p2 + 1.0 / 24.0;
  cp = cp * p2 - 0.5;
  const double cos_phi = 1.0 + p2 * cp;
  constexpr double kHalfSqrt2 = 0.70710678118654752440;
  const double c0 = (cos_phi - sin_phi) * kHalfSqrt2;  // cos(pi/4 + phi)
  const double s0 = (cos_phi + sin_phi) * kHalfSqrt2;  // sin(pi/4 + phi)
  // Rotate by quadrant * pi/2.
  const double sin_r = (quadrant & 1) ? c0 : s0;
  const double cos_r = (quadrant & 1) ? s0 : c0;
  const double sin_t = quadrant >= 2 ? -sin_r : sin_r;
  const double cos_t = ((quadrant + 1) & 2) ? -cos_r : cos_r;
  return {cos_t, sin_t};
}

}  // namespace detail

/// Box–Muller on one Philox output block; returns (g0, g1).
inline std::pair<double, double> normal_pair(std::uint32_t w0, std::uint32_t w1,
                                             std::uint32_t w2, std::uint32_t w3) noexcept {
  const double rho = detail::box_muller_radius(detail::top52(w0, w1));
  const auto [c, s] = detail::box_muller_angle(detail::top52(w2, w3));
  return {rho * c, rho * s};
}

inline std::pair<double, double> normal_pair(PhiloxCounter ctr, PhiloxKey key) noexcept {
  const PhiloxCounter w = philox4x32_10(ctr, key);
  return normal_pair(w[0], w[1], w[2], w[3]);
}

/// Block form of normal_pair over Philox counters {c0, c1, c2, c3_first + j};
/// same arithmetic as the scalar form, laid out so the loops vectorize.
template <std::size_t Block>
inline void normal_pairs_block(std::uint32_t c0, std::uint32_t c1, std::uint32_t c2,
                               std::uint32_t c3_first, PhiloxKey key, double* g0,
                               double* g1) noexcept {
  std::uint32_t w0[Block], w1[Block], w2[Block], w3[Block];
  philox4x32_10_block<Block>(c0, c1, c2, c3_first, key, w0, w1, w2, w3);
  double rho[Block];
  for (std::size_t j = 0; j < Block; ++j) rho[j] = detail::box_muller_radius(detail::top52(w0[j], w1[j]));
  for (std::size_t j = 0; j < Block; ++j) {
    const auto [c, s] = detail::box_muller_angle(detail::top52(w2[j], w3[j]));
    g0[j] = rho[j] * c;
    g1[j] = rho[j] * s;
  }
}

/// Deterministic stream of uniforms / normals addressed by (seed, stream id).
/// Draw j of stream s uses counter (s_lo, s_hi, j_lo, j_hi); each draw
/// consumes one Philox block.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(make_key(seed)), stream_(stream) {}

  double uniform() noexcept {
    const PhiloxCounter w = philox4x32_10(next_counter(), key_);
    return open_unit(w[0], w[1]);
  }

  /// Uniform integer in [0, bound) by rejection on 64-bit words; bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    for (;;) {
      const PhiloxCounter w = philox4x32_10(next_counter(), key_);
      const std::uint64_t v = (std::uint64_t{w[0]} << 32) | w[1];
      if (v < limit) return v % bound;
    }
  }

  double normal() noexcept {
    const PhiloxCounter w = philox4x32_10(next_counter(), key_);
    return normal_pair(w[0], w[1], w[2], w[3]).first;
  }

  std::uint64_t draws() const noexcept { return draw_; }

 private:
  PhiloxCounter next_counter() noexcept {
    const std::uint64_t j = draw_++;
    return {static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32),
            static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(j >> 32)};
  }

  PhiloxKey key_;
  std::uint64_t stream_;
  std::uint64_t draw_ = 0;
};

}  // namespace quadrec
