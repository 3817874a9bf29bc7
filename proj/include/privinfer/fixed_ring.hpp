#pragma once

// Fixed-point arithmetic over Z_{2^ell}, 8 <= ell <= 64 (smaller widths are
// accepted for exhaustive tests). Residues live in 64-bit words and are masked
// to ell bits after every operation.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "privinfer/errors.hpp"

namespace privinfer {

using u64 = std::uint64_t;
using i64 = std::int64_t;

inline constexpr u64 ring_mask(int ell) {
  return ell >= 64 ? ~u64{0} : (u64{1} << ell) - 1;
}

struct RingParams {
  int ell = 64;
  int scale = 18;

  constexpr u64 mask() const { return ring_mask(ell); }
  constexpr u64 half() const { return u64{1} << (ell - 1); }

  void validate() const {
    PRIVINFER_ENFORCE(ell >= 1 && ell <= 64, "ell must be in [1, 64]");
    PRIVINFER_ENFORCE(scale >= 0 && (scale < ell - 1 || (ell <= 2 && scale == 0)),
                   "scale must satisfy 0 <= s <= ell - 2");
  }
  friend bool operator==(const RingParams&, const RingParams&) = default;
};

// Signed two's-complement reading of an ell-bit residue.
inline i64 to_signed(u64 r, int ell) {
  r &= ring_mask(ell);
  if (ell == 64) return static_cast<i64>(r);
  if (r & (u64{1} << (ell - 1))) r |= ~ring_mask(ell);
  return static_cast<i64>(r);
}

inline u64 from_signed(i64 v, int ell) { return static_cast<u64>(v) & ring_mask(ell); }

// floor(x * 2^s) mod 2^ell; negatives land in the upper half of the ring.
inline u64 encode_real(double x, const RingParams& p) {
  const double scaled = std::floor(std::ldexp(x, p.scale));
  const double bound = std::ldexp(1.0, p.ell - 1);
  if (!std::isfinite(scaled) || scaled >= bound || scaled < -bound) {
    throw OverflowError("encode_real: |x| * 2^s does not fit in ell - 1 bits");
  }
  return from_signed(static_cast<i64>(scaled), p.ell);
}

inline double decode_real(u64 r, const RingParams& p) {
  return std::ldexp(static_cast<double>(to_signed(r, p.ell)), -p.scale);
}

// Row-major matrix of residues in Z_{2^ell} at a fixed-point scale.
struct RingTensor {
  RingParams params;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<u64> data;

  RingTensor() = default;
  RingTensor(RingParams p, std::size_t r, std::size_t c)
      : params(p), rows(r), cols(c), data(r * c, 0) {}

  static RingTensor filled(RingParams p, std::size_t r, std::size_t c, u64 v) {
    RingTensor t(p, r, c);
    for (auto& x : t.data) x = v & p.mask();
    return t;
  }
  static RingTensor from_reals(RingParams p, std::size_t r, std::size_t c,
                               std::span<const double> values) {
    PRIVINFER_ENFORCE(values.size() == r * c, "value count does not match shape");
    RingTensor t(p, r, c);
    for (std::size_t i = 0; i < values.size(); ++i) t.data[i] = encode_real(values[i], p);
    return t;
  }

  std::size_t size() const { return data.size(); }
  u64& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  u64 at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::vector<double> to_reals() const {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = decode_real(data[i], params);
    return out;
  }

  bool same_shape(const RingTensor& o) const { return rows == o.rows && cols == o.cols; }
  friend bool operator==(const RingTensor&, const RingTensor&) = default;
};

inline void check_compatible(const RingTensor& a, const RingTensor& b) {
  PRIVINFER_ENFORCE(a.same_shape(b), "shape mismatch");
  PRIVINFER_ENFORCE(a.params.ell == b.params.ell, "ring width mismatch");
}

inline RingTensor add(const RingTensor& a, const RingTensor& b) {
  check_compatible(a, b);
  RingTensor out = a;
  const u64 mask = a.params.mask();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (a.data[i] + b.data[i]) & mask;
  return out;
}

inline RingTensor sub(const RingTensor& a, const RingTensor& b) {
  check_compatible(a, b);
  RingTensor out = a;
  const u64 mask = a.params.mask();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (a.data[i] - b.data[i]) & mask;
  return out;
}

inline RingTensor negate(const RingTensor& a) {
  RingTensor out = a;
  for (auto& x : out.data) x = (u64{0} - x) & a.params.mask();
  return out;
}

inline RingTensor add_constant(const RingTensor& a, u64 c) {
  RingTensor out = a;
  for (auto& x : out.data) x = (x + c) & a.params.mask();
  return out;
}

inline RingTensor mul_constant(const RingTensor& a, u64 c) {
  RingTensor out = a;
  for (auto& x : out.data) x = (x * c) & a.params.mask();
  return out;
}

// Z = W X mod 2^ell with scale s_W + s_X; the caller truncates.
inline RingTensor ring_matmul(const RingTensor& w, const RingTensor& x) {
  PRIVINFER_ENFORCE(w.cols == x.rows, "inner dimensions differ");
  PRIVINFER_ENFORCE(w.params.ell == x.params.ell, "ring width mismatch");
  RingParams p{w.params.ell, w.params.scale + x.params.scale};
  RingTensor z;
  z.params = p;
  z.rows = w.rows;
  z.cols = x.cols;
  z.data.assign(w.rows * x.cols, 0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    u64* zrow = &z.data[i * z.cols];
    for (std::size_t k = 0; k < w.cols; ++k) {
      const u64 a = w.data[i * w.cols + k];
      if (a == 0) continue;
      const u64* xrow = &x.data[k * x.cols];
      for (std::size_t j = 0; j < x.cols; ++j) zrow[j] += a * xrow[j];
    }
  }
  for (auto& v : z.data) v &= p.mask();
  return z;
}

inline RingTensor transpose(const RingTensor& a) {
  RingTensor t(a.params, a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// Reduce every element mod 2^ell_small. Works share-wise: the downcast of two
// shares reconstructs the downcast of the secret.
inline RingTensor local_downcast(const RingTensor& t, int ell_small) {
  PRIVINFER_ENFORCE(ell_small >= 1 && ell_small <= t.params.ell, "target width must not exceed ell");
  RingTensor out = t;
  out.params.ell = ell_small;
  for (auto& x : out.data) x &= ring_mask(ell_small);
  return out;
}

// Plain arithmetic right shift of a public (non-shared) tensor.
inline RingTensor truncate_public(const RingTensor& t, int s) {
  RingTensor out = t;
  out.params.scale = t.params.scale - s;
  for (auto& x : out.data) x = from_signed(to_signed(x, t.params.ell) >> s, t.params.ell);
  return out;
}

// Local share truncation: party 0 shifts its share, party 1 shifts the negated
// share and negates back. Off by one ulp with probability ~1/2, and fails
// outright with probability about |x| / 2^ell.
inline RingTensor local_truncate_share(const RingTensor& share, int s, bool is_party0) {
  RingTensor out = share;
  out.params.scale = share.params.scale - s;
  const u64 mask = share.params.mask();
  for (auto& x : out.data) {
    x = is_party0 ? (x >> s) : ((u64{0} - (((u64{0} - x) & mask) >> s)) & mask);
  }
  return out;
}

}  // namespace privinfer
