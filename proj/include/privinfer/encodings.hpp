#pragma once

// Matrix <-> polynomial encodings.
//
// Window encoding (server-side inner product): for a k_w x m_w block X and an
// m_w x n_w block W,
//   x[i*m_w*n_w + (m_w-1) - j] = X[i][j],   w[j*m_w + i] = W[i][j],
// and the product polynomial holds (XW)[i][j] at i*m_w*n_w + j*m_w + (m_w-1).
//
// Row-wise encoding (client-side outer product): row beta of W becomes the low
// n coefficients of one polynomial. Outputs for consecutive rows of X are packed
// into one ciphertext at offsets 0, n, 2n, ... via monomial shifts.

#include <cstddef>
#include <span>
#include <vector>

#include "privinfer/fixed_ring.hpp"
#include "privinfer/poly_ring.hpp"
#include "privinfer/toy_he.hpp"

namespace privinfer {

struct WindowShape {
  std::size_t k_w = 1;
  std::size_t m_w = 1;
  std::size_t n_w = 1;

  std::size_t volume() const { return k_w * m_w * n_w; }
  void validate(std::size_t poly_n) const {
    PRIVINFER_ENFORCE(k_w > 0 && m_w > 0 && n_w > 0, "window dimensions must be positive");
    PRIVINFER_ENFORCE(volume() <= poly_n, "window k_w*m_w*n_w exceeds N");
  }
  friend bool operator==(const WindowShape&, const WindowShape&) = default;
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Encodes the block of x starting at (row0, col0); entries past the matrix
// edge are treated as zero.
inline PlainPoly window_encode_left(const RingTensor& x, const WindowShape& shape, std::size_t poly_n,
                                    std::size_t row0 = 0, std::size_t col0 = 0) {
  shape.validate(poly_n);
  PlainPoly p(plain_params(poly_n, x.params.ell));
  for (std::size_t i = 0; i < shape.k_w && row0 + i < x.rows; ++i) {
    for (std::size_t j = 0; j < shape.m_w && col0 + j < x.cols; ++j) {
      p.coeffs[i * shape.m_w * shape.n_w + (shape.m_w - 1) - j] = x.at(row0 + i, col0 + j);
    }
  }
  return p;
}

inline PlainPoly window_encode_right(const RingTensor& w, const WindowShape& shape, std::size_t poly_n,
                                     std::size_t row0 = 0, std::size_t col0 = 0) {
  shape.validate(poly_n);
  PlainPoly p(plain_params(poly_n, w.params.ell));
  for (std::size_t i = 0; i < shape.m_w && row0 + i < w.rows; ++i) {
    for (std::size_t j = 0; j < shape.n_w && col0 + j < w.cols; ++j) {
      p.coeffs[j * shape.m_w + i] = w.at(row0 + i, col0 + j);
    }
  }
  return p;
}

inline std::size_t window_output_index(const WindowShape& shape, std::size_t i, std::size_t j) {
  return i * shape.m_w * shape.n_w + j * shape.m_w + (shape.m_w - 1);
}

// Reads the k_w x n_w output block out of a product polynomial.
inline RingTensor window_decode(const PlainPoly& z, const WindowShape& shape, RingParams params) {
  shape.validate(z.params.n);
  RingTensor out(params, shape.k_w, shape.n_w);
  const u64 mask = params.mask();
  for (std::size_t i = 0; i < shape.k_w; ++i)
    for (std::size_t j = 0; j < shape.n_w; ++j)
      out.at(i, j) = z.coeffs[window_output_index(shape, i, j)] & mask;
  return out;
}

inline PlainPoly rowwise_encode(std::span<const u64> row, int ell, std::size_t poly_n) {
  PRIVINFER_ENFORCE(row.size() <= poly_n, "row width n exceeds N");
  PlainPoly p(plain_params(poly_n, ell));
  for (std::size_t j = 0; j < row.size(); ++j) p.coeffs[j] = row[j] & ring_mask(ell);
  return p;
}

struct PackingPlan {
  std::size_t rows_per_ct = 1;  // floor(N / n)
  std::size_t shift_stride = 1; // n
  std::size_t ct_count = 0;     // ceil(k / rows_per_ct)

  friend bool operator==(const PackingPlan&, const PackingPlan&) = default;
};

inline PackingPlan make_packing_plan(std::size_t k, std::size_t n, std::size_t poly_n) {
  PRIVINFER_ENFORCE(n >= 1 && n <= poly_n, "row width n must be in [1, N]");
  PackingPlan plan;
  plan.rows_per_ct = poly_n / n;
  plan.shift_stride = n;
  plan.ct_count = ceil_div(k, plan.rows_per_ct);
  return plan;
}

// Output theta = sum_r RShift(cts[theta*rows_per_ct + r], r*n). Missing tail
// rows contribute nothing.
template <CoeffWord U>
std::vector<Ciphertext<U>> pack_outputs(HeEvaluator<U>& eval, const std::vector<Ciphertext<U>>& cts,
                                        const PackingPlan& plan) {
  std::vector<Ciphertext<U>> out;
  out.reserve(plan.ct_count);
  for (std::size_t theta = 0; theta < plan.ct_count; ++theta) {
    Ciphertext<U> acc = cts.at(theta * plan.rows_per_ct);
    for (std::size_t r = 1; r < plan.rows_per_ct; ++r) {
      const std::size_t alpha = theta * plan.rows_per_ct + r;
      if (alpha >= cts.size()) break;
      acc = eval.add(acc, eval.rshift(cts[alpha], r * plan.shift_stride));
    }
    out.push_back(std::move(acc));
  }
  return out;
}

inline RingTensor unpack_outputs(std::span<const PlainPoly> plaintexts, const PackingPlan& plan,
                                 std::size_t k, std::size_t n, RingParams params) {
  PRIVINFER_ENFORCE(plaintexts.size() >= ceil_div(k, plan.rows_per_ct), "too few packed plaintexts");
  RingTensor z(params, k, n);
  const u64 mask = params.mask();
  for (std::size_t alpha = 0; alpha < k; ++alpha) {
    const PlainPoly& p = plaintexts[alpha / plan.rows_per_ct];
    const std::size_t base = (alpha % plan.rows_per_ct) * plan.shift_stride;
    PRIVINFER_ENFORCE(base + n <= p.params.n, "packed row exceeds polynomial degree");
    for (std::size_t j = 0; j < n; ++j) z.at(alpha, j) = p.coeffs[base + j] & mask;
  }
  return z;
}

}  // namespace privinfer
