#pragma once

#include <cstdint>

// Q3.12 fixed-point helpers.
//
// A q3.12 value is a 16-bit two's-complement integer scaled by 2^-12:
// representable range [-8.0, 8.0 - 2^-12], resolution 2^-12. Products of two
// q3.12 values are 32-bit integers scaled by 2^-24; accumulation happens in a
// 32-bit accumulator with wrap-around (mod 2^32) semantics, which keeps
// addition associative/commutative so summation order never changes results.
// Requantization back to q3.12 is an arithmetic right shift (truncating
// toward -inf) followed by saturation to the int16 range.

namespace rvnn::fixp {

inline constexpr int kFracBits = 12;
inline constexpr int32_t kOne = 1 << kFracBits;  // 1.0 in q3.12
inline constexpr int32_t kMaxRaw = 32767;
inline constexpr int32_t kMinRaw = -32768;

using q312_t = int16_t;   // raw q3.12 value
using acc32_t = int32_t;  // wrap-around accumulator, scale 2^-24 for products

static_assert((-1 >> 1) == -1, "arithmetic shift on signed integers required");

constexpr q312_t sat16(int32_t v) {
  if (v > kMaxRaw) return static_cast<q312_t>(kMaxRaw);
  if (v < kMinRaw) return static_cast<q312_t>(kMinRaw);
  return static_cast<q312_t>(v);
}

// Round-to-nearest conversion from a real value, saturating at the range ends.
constexpr q312_t from_real(double v) {
  double scaled = v * kOne;
  int32_t r = static_cast<int32_t>(scaled >= 0 ? scaled + 0.5 : scaled - 0.5);
  return sat16(r);
}

constexpr double to_real(q312_t v) { return static_cast<double>(v) / kOne; }

// Full-precision product; result carries 24 fractional bits.
constexpr int32_t q_mul(q312_t a, q312_t b) {
  return static_cast<int32_t>(a) * static_cast<int32_t>(b);
}

// Wrap-around 32-bit addition (mod 2^32).
constexpr acc32_t add_wrap(acc32_t a, acc32_t b) {
  return static_cast<acc32_t>(static_cast<uint32_t>(a) + static_cast<uint32_t>(b));
}

// Arithmetic right shift then saturate; shift must be in [0, 31].
constexpr q312_t requantize(acc32_t acc, int shift = kFracBits) {
  return sat16(acc >> shift);
}

// Two q3.12 values packed in one 32-bit word; element 0 is the low half.
constexpr uint32_t pack_pair(q312_t lo, q312_t hi) {
  return (static_cast<uint32_t>(static_cast<uint16_t>(hi)) << 16) |
         static_cast<uint32_t>(static_cast<uint16_t>(lo));
}

constexpr q312_t pair_lo(uint32_t w) { return static_cast<q312_t>(w & 0xFFFFu); }
constexpr q312_t pair_hi(uint32_t w) { return static_cast<q312_t>(w >> 16); }

// Packed sum-dot-product: acc + a[0]*b[0] + a[1]*b[1], signed 16-bit
// products, wrap-around 32-bit accumulation.
constexpr acc32_t sdotp(uint32_t a, uint32_t b, acc32_t acc) {
  acc = add_wrap(acc, q_mul(pair_lo(a), pair_lo(b)));
  acc = add_wrap(acc, q_mul(pair_hi(a), pair_hi(b)));
  return acc;
}

}  // namespace rvnn::fixp
