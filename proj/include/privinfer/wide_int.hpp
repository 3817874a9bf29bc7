#pragma once

// Coefficient words for Z_q with q = 2^q_bits. Arithmetic on the word type
// wraps modulo 2^bits, so reduction mod q is a mask.

#include <bit>
#include <concepts>
#include <cstdint>
#include <limits>

#include <boost/multiprecision/cpp_int.hpp>

namespace privinfer {

using u128 = unsigned __int128;
using u256 = boost::multiprecision::uint256_t;

template <class U>
struct word_traits;

template <>
struct word_traits<std::uint64_t> {
  static constexpr int bits = 64;
  static std::uint64_t max() { return ~std::uint64_t{0}; }
  static int bit_length(std::uint64_t x) { return x == 0 ? 0 : 64 - std::countl_zero(x); }
  static std::uint64_t limb(std::uint64_t x, int i) { return i == 0 ? x : 0; }
};

template <>
struct word_traits<u128> {
  static constexpr int bits = 128;
  static u128 max() { return ~u128{0}; }
  static int bit_length(u128 x) {
    const auto hi = static_cast<std::uint64_t>(x >> 64);
    if (hi != 0) return 128 - std::countl_zero(hi);
    return word_traits<std::uint64_t>::bit_length(static_cast<std::uint64_t>(x));
  }
  static std::uint64_t limb(u128 x, int i) { return static_cast<std::uint64_t>(x >> (64 * i)); }
};

template <>
struct word_traits<u256> {
  static constexpr int bits = 256;
  static u256 max() { return std::numeric_limits<u256>::max(); }
  static int bit_length(const u256& x) {
    return x == 0 ? 0 : static_cast<int>(boost::multiprecision::msb(x)) + 1;
  }
  static std::uint64_t limb(const u256& x, int i) {
    return static_cast<std::uint64_t>((x >> (64 * i)) & u256(~std::uint64_t{0}));
  }
};

template <class U>
concept CoeffWord = requires { word_traits<U>::bits; };

template <CoeffWord U>
inline constexpr int word_bits = word_traits<U>::bits;

template <CoeffWord U>
U word_max() {
  return word_traits<U>::max();
}

template <CoeffWord U>
U pow2(int k) {
  return U(1) << k;
}

// 2^k - 1, or all ones when k covers the word.
template <CoeffWord U>
U low_mask(int k) {
  if (k >= word_bits<U>) return word_max<U>();
  return (U(1) << k) - 1;
}

template <CoeffWord U>
int bit_length(const U& x) {
  return word_traits<U>::bit_length(x);
}

// Product clamped to the word maximum when it might not fit.
template <CoeffWord U>
U saturating_mul(const U& a, const U& b) {
  if (a == 0 || b == 0) return U(0);
  if (bit_length(a) + bit_length(b) > word_bits<U>) return word_max<U>();
  return a * b;
}

template <CoeffWord U>
U saturating_add(const U& a, const U& b) {
  const U s = a + b;
  return s < a ? word_max<U>() : s;
}

template <CoeffWord U>
U from_u64(std::uint64_t v) {
  return U(v);
}

template <CoeffWord U>
std::uint64_t low_u64(const U& v) {
  return word_traits<U>::limb(v, 0);
}

}  // namespace privinfer
