#pragma once

// Arithmetic in Z_q[X]/(X^N + 1) with q = 2^q_bits. Because q is a power of
// two there is no NTT; products are schoolbook (or Karatsuba on request).

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "privinfer/errors.hpp"
#include "privinfer/wide_int.hpp"

namespace privinfer {

struct PolyParams {
  std::size_t n = 0;  // degree bound N, a power of two
  int q_bits = 128;   // q = 2^q_bits
  int t_bits = 64;    // plaintext modulus t = 2^t_bits; 0 for plain polynomials

  int delta_bits() const { return q_bits - t_bits; }

  template <CoeffWord U>
  void validate() const {
    PRIVINFER_ENFORCE(n >= 1 && std::has_single_bit(n), "N must be a power of two");
    PRIVINFER_ENFORCE(q_bits >= 1 && q_bits <= word_bits<U>, "q_bits exceeds the coefficient word");
    PRIVINFER_ENFORCE(t_bits >= 0 && t_bits < q_bits, "t_bits must be below q_bits");
  }
  friend bool operator==(const PolyParams&, const PolyParams&) = default;
};

template <CoeffWord U>
struct Poly {
  PolyParams params;
  std::vector<U> coeffs;

  Poly() = default;
  explicit Poly(const PolyParams& p) : params(p), coeffs(p.n, U(0)) { p.template validate<U>(); }

  std::size_t size() const { return coeffs.size(); }
  U q_mask() const { return low_mask<U>(params.q_bits); }
  bool is_zero() const {
    return std::all_of(coeffs.begin(), coeffs.end(), [](const U& c) { return c == 0; });
  }
  friend bool operator==(const Poly&, const Poly&) = default;
};

// Plaintext polynomials over Z_{2^ell}: q_bits = ell, t_bits = 0.
using PlainPoly = Poly<std::uint64_t>;

inline PolyParams plain_params(std::size_t n, int ell) { return PolyParams{n, ell, 0}; }

template <CoeffWord U>
void check_same_params(const Poly<U>& a, const Poly<U>& b) {
  PRIVINFER_ENFORCE(a.params == b.params, "polynomial parameters differ");
}

template <CoeffWord U>
Poly<U> poly_add(const Poly<U>& a, const Poly<U>& b) {
  check_same_params(a, b);
  Poly<U> c = a;
  const U mask = a.q_mask();
  for (std::size_t i = 0; i < c.coeffs.size(); ++i) c.coeffs[i] = (a.coeffs[i] + b.coeffs[i]) & mask;
  return c;
}

template <CoeffWord U>
Poly<U> poly_sub(const Poly<U>& a, const Poly<U>& b) {
  check_same_params(a, b);
  Poly<U> c = a;
  const U mask = a.q_mask();
  for (std::size_t i = 0; i < c.coeffs.size(); ++i) c.coeffs[i] = (a.coeffs[i] - b.coeffs[i]) & mask;
  return c;
}

template <CoeffWord U>
Poly<U> poly_negate(const Poly<U>& a) {
  Poly<U> c = a;
  const U mask = a.q_mask();
  for (auto& x : c.coeffs) x = (U(0) - x) & mask;
  return c;
}

template <CoeffWord U>
Poly<U> scalar_mul(const U& c, const Poly<U>& a) {
  Poly<U> out = a;
  const U mask = a.q_mask();
  for (auto& x : out.coeffs) x = (x * c) & mask;
  return out;
}

// a * X^steps: coefficient j moves to j + steps, wrapped coefficients negate.
template <CoeffWord U>
Poly<U> monomial_shift(const Poly<U>& a, std::size_t steps) {
  const std::size_t n = a.params.n;
  PRIVINFER_ENFORCE(steps < n, "shift must be below N");
  Poly<U> out(a.params);
  const U mask = a.q_mask();
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t d = j + steps;
    if (d < n) {
      out.coeffs[d] = a.coeffs[j];
    } else {
      out.coeffs[d - n] = (U(0) - a.coeffs[j]) & mask;
    }
  }
  return out;
}

enum class MulAlgorithm { schoolbook, karatsuba };

namespace detail {

// Full (non-reduced) product of equal-length operands, written to out[0, 2n-1).
template <CoeffWord U>
void karatsuba_full(std::span<const U> a, std::span<const U> b, std::span<U> out) {
  const std::size_t n = a.size();
  if (n <= 32) {
    std::fill(out.begin(), out.begin() + (2 * n - 1), U(0));
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] == 0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i + j] += a[i] * b[j];
    }
    return;
  }
  const std::size_t h = n / 2;
  auto a0 = a.subspan(0, h), a1 = a.subspan(h, n - h);
  auto b0 = b.subspan(0, h), b1 = b.subspan(h, n - h);
  std::vector<U> z0(2 * h - 1), z2(2 * (n - h) - 1), z1(2 * (n - h) - 1);
  karatsuba_full<U>(a0, b0, z0);
  karatsuba_full<U>(a1, b1, z2);
  std::vector<U> sa(n - h), sb(n - h);
  for (std::size_t i = 0; i < n - h; ++i) {
    sa[i] = a1[i] + (i < h ? a0[i] : U(0));
    sb[i] = b1[i] + (i < h ? b0[i] : U(0));
  }
  karatsuba_full<U>(sa, sb, z1);
  for (std::size_t i = 0; i < z0.size(); ++i) z1[i] -= z0[i];
  for (std::size_t i = 0; i < z2.size(); ++i) z1[i] -= z2[i];
  std::fill(out.begin(), out.begin() + (2 * n - 1), U(0));
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] += z0[i];
  for (std::size_t i = 0; i < z1.size(); ++i) out[i + h] += z1[i];
  for (std::size_t i = 0; i < z2.size(); ++i) out[i + 2 * h] += z2[i];
}

}  // namespace detail

// a * b mod (X^N + 1, q). Zero coefficients of a are skipped, so a sparse left
// operand costs nnz(a) * N word products.
template <CoeffWord U>
Poly<U> negacyclic_mul(const Poly<U>& a, const Poly<U>& b,
                       MulAlgorithm algo = MulAlgorithm::schoolbook) {
  check_same_params(a, b);
  const std::size_t n = a.params.n;
  Poly<U> c(a.params);
  const U mask = a.q_mask();
  if (algo == MulAlgorithm::karatsuba && n > 32) {
    std::vector<U> full(2 * n - 1);
    detail::karatsuba_full<U>(a.coeffs, b.coeffs, full);
    for (std::size_t i = 0; i < n; ++i) {
      U v = full[i];
      if (i + n < full.size()) v -= full[i + n];
      c.coeffs[i] = v & mask;
    }
    return c;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const U ai = a.coeffs[i];
    if (ai == 0) continue;
    for (std::size_t j = 0; j < n - i; ++j) c.coeffs[i + j] += ai * b.coeffs[j];
    for (std::size_t j = n - i; j < n; ++j) c.coeffs[i + j - n] -= ai * b.coeffs[j];
  }
  for (auto& x : c.coeffs) x &= mask;
  return c;
}

// a * s for a ternary s given by the positions of its +1 and -1 coefficients.
// Costs (|plus| + |minus|) * N additions.
template <CoeffWord U>
Poly<U> negacyclic_mul_ternary(const Poly<U>& a, std::span<const std::uint32_t> plus,
                               std::span<const std::uint32_t> minus) {
  const std::size_t n = a.params.n;
  Poly<U> c(a.params);
  auto accumulate = [&](std::size_t shift, bool negative) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t d = j + shift;
      const bool wrapped = d >= n;
      const std::size_t idx = wrapped ? d - n : d;
      if (wrapped != negative) {
        c.coeffs[idx] -= a.coeffs[j];
      } else {
        c.coeffs[idx] += a.coeffs[j];
      }
    }
  };
  for (auto i : plus) accumulate(i, false);
  for (auto i : minus) accumulate(i, true);
  const U mask = a.q_mask();
  for (auto& x : c.coeffs) x &= mask;
  return c;
}

}  // namespace privinfer
