#pragma once

// Secure evaluation of the fitted piecewise templates on shared inputs, the
// softmax built on them, and the fused truncation + ring upcast.
//
// All functions here take and return the calling party's own share; the
// *_pair drivers run both parties and return both shares.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "privinfer/approx.hpp"
#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"
#include "privinfer/mpc/runtime.hpp"
#include "privinfer/mpc/share.hpp"

namespace privinfer {

// Fixed-point form of a fitted template. horner[0] is the leading coefficient.
struct SecurePiecewise {
  Template kind = Template::gelu;
  RingParams ring{32, 12};
  std::vector<u64> horner;
  std::vector<u64> breakpoints;
  PiecewisePoly source;
};

// Encodes p for ring rp and sweeps [check_lo, check_hi] through the
// fixed-point oracle; any intermediate overflow is an error.
inline SecurePiecewise make_secure_piecewise(const PiecewisePoly& p, RingParams rp, double check_lo,
                                             double check_hi) {
  p.validate();
  rp.validate();
  PRIVINFER_ENFORCE(p.kind != Template::plain, "secure evaluation needs the exp or gelu template");
  SecurePiecewise sp;
  sp.kind = p.kind;
  sp.ring = rp;
  sp.source = p;
  const auto& c = p.poly();
  for (auto it = c.rbegin(); it != c.rend(); ++it) sp.horner.push_back(encode_real(*it, rp));
  sp.breakpoints = encode_breakpoints(p, rp);
  if (check_hi > check_lo) {
    const auto rep = fixed_degradation(p, rp, check_lo, check_hi, 1);
    if (rep.overflows) throw OverflowError("fixed-point evaluation overflows on the checked input range");
  }
  return sp;
}

// Checks the range where the polynomial piece is actually selected; outside
// it the mux discards the (possibly wrapped) polynomial value.
inline SecurePiecewise make_secure_piecewise(const PiecewisePoly& p, RingParams rp = {32, 12}) {
  p.validate();
  if (p.kind == Template::gelu) return make_secure_piecewise(p, rp, p.breakpoints[0], p.breakpoints[1]);
  return make_secure_piecewise(p, rp, p.breakpoints.at(0), 0.0);
}

namespace detail {

inline ShareTensor add_public(PartyContext& ctx, ShareTensor x, u64 c) {
  if (ctx.is_server()) x.inner = add_constant(x.inner, c);
  return x;
}

// A_1 = F_mul(b_0, X) + b_1, A_{i+1} = F_mul(A_i, X) + b_{i+1}, truncating by
// s after every product. b_0 enters as a sharing held by the server alone.
inline ShareTensor horner_chain(PartyContext& ctx, const ShareTensor& x, const SecurePiecewise& sp) {
  const RingParams rp = sp.ring;
  ShareTensor acc = ctx.public_share(rp, x.rows(), x.cols(), sp.horner[0]);
  for (std::size_t i = 1; i < sp.horner.size(); ++i) {
    acc = ctx.f_mul(acc, x, rp.scale);
    acc = add_public(ctx, std::move(acc), sp.horner[i]);
  }
  return acc;
}

inline BoolShare xor_shares(const BoolShare& a, const BoolShare& b) {
  PRIVINFER_ENFORCE(a.bits.size() == b.bits.size(), "bit share sizes differ");
  BoolShare out = a;
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] ^= b.bits[i];
  return out;
}

inline void check_input(const ShareTensor& x, const SecurePiecewise& sp) {
  PRIVINFER_ENFORCE(x.params().ell == sp.ring.ell && x.params().scale == sp.ring.scale,
                 "input ring/scale differs from the template encoding");
}

}  // namespace detail

// 0 for x <= T1, P2(x) on (T1, T2], x for x > T2.
inline ShareTensor secure_gelu(PartyContext& ctx, const ShareTensor& x, const SecurePiecewise& sp) {
  PRIVINFER_ENFORCE(sp.kind == Template::gelu, "secure_gelu needs the gelu template");
  detail::check_input(x, sp);
  const RingParams rp = sp.ring;
  const ShareTensor a2 = detail::horner_chain(ctx, x, sp);

  const ShareTensor t1 = ctx.public_share(rp, x.rows(), x.cols(), sp.breakpoints[0]);
  const ShareTensor t2 = ctx.public_share(rp, x.rows(), x.cols(), sp.breakpoints[1]);
  const BoolShare above1 = ctx.f_less(t1, x);  // 1{T1 < x}
  const BoolShare above2 = ctx.f_less(t2, x);  // 1{T2 < x}
  // above2 implies above1, so the middle indicator is their XOR; the left
  // piece is zero and drops out of the mux.
  const BoolShare mid = detail::xor_shares(above1, above2);
  return ctx.mux_sum({{&mid, &a2}, {&above2, &x}});
}

// 0 for x < T, P3(x) otherwise.
inline ShareTensor secure_exp(PartyContext& ctx, const ShareTensor& x, const SecurePiecewise& sp) {
  PRIVINFER_ENFORCE(sp.kind == Template::exp, "secure_exp needs the exp template");
  detail::check_input(x, sp);
  const ShareTensor a3 = detail::horner_chain(ctx, x, sp);
  const ShareTensor t = ctx.public_share(sp.ring, x.rows(), x.cols(), sp.breakpoints[0]);
  const BoolShare below = ctx.f_less(x, t);  // 1{x < T}
  const BoolShare keep = ctx.xor_public(below, 1);
  return ctx.mux(keep, a3);
}

// Row-wise maximum by a balanced tournament; ties keep the lower index.
inline ShareTensor secure_row_max(PartyContext& ctx, const ShareTensor& x) {
  const RingParams rp = x.params();
  const std::size_t rows = x.rows();
  std::vector<std::vector<u64>> cur(rows);
  for (std::size_t r = 0; r < rows; ++r)
    cur[r].assign(x.inner.data.begin() + r * x.cols(), x.inner.data.begin() + (r + 1) * x.cols());
  std::size_t width = x.cols();
  while (width > 1) {
    const std::size_t pairs = width / 2;
    ShareTensor a{ctx.party(), RingTensor(rp, 1, rows * pairs)};
    ShareTensor b{ctx.party(), RingTensor(rp, 1, rows * pairs)};
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < pairs; ++i) {
        a.inner.data[r * pairs + i] = cur[r][2 * i];
        b.inner.data[r * pairs + i] = cur[r][2 * i + 1];
      }
    }
    const BoolShare take_b = ctx.f_less(a, b);  // 1{a < b}
    const ShareTensor diff{ctx.party(), sub(b.inner, a.inner)};
    const ShareTensor picked = ctx.mux(take_b, diff);
    const std::size_t next = (width + 1) / 2;
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<u64> nv(next);
      for (std::size_t i = 0; i < pairs; ++i)
        nv[i] = (a.inner.data[r * pairs + i] + picked.inner.data[r * pairs + i]) & rp.mask();
      if (width % 2) nv[pairs] = cur[r][width - 1];
      cur[r] = std::move(nv);
    }
    width = next;
  }
  RingTensor out(rp, rows, 1);
  for (std::size_t r = 0; r < rows; ++r) out.data[r] = cur[r][0];
  return ShareTensor{ctx.party(), std::move(out)};
}

// exp(x_i - max x) / sum_j exp(x_j - max x) per row.
inline ShareTensor secure_softmax(PartyContext& ctx, const ShareTensor& x, const SecurePiecewise& exp_sp) {
  detail::check_input(x, exp_sp);
  const RingParams rp = x.params();
  const std::size_t rows = x.rows(), cols = x.cols();
  const ShareTensor mx = secure_row_max(ctx, x);
  ShareTensor shifted{ctx.party(), RingTensor(rp, rows, cols)};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      shifted.inner.at(r, c) = (x.inner.at(r, c) - mx.inner.data[r]) & rp.mask();
  const ShareTensor e = secure_exp(ctx, shifted, exp_sp);

  ShareTensor sum{ctx.party(), RingTensor(rp, rows, 1)};
  for (std::size_t r = 0; r < rows; ++r) {
    u64 s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += e.inner.at(r, c);
    sum.inner.data[r] = s & rp.mask();
  }
  // The reciprocal is produced with as many fractional bits as the following
  // product can hold: e <= ~1 at scale s times 1/S at scale s_r stays below
  // 2^(ell-1) when s + s_r <= ell - 2.
  const int recip_scale = std::max(rp.scale, rp.ell - 2 - rp.scale);
  const ShareTensor inv = ctx.f_recip(sum, recip_scale);
  ShareTensor inv_b{ctx.party(), RingTensor(inv.params(), rows, cols)};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) inv_b.inner.at(r, c) = inv.inner.data[r];
  return ctx.f_mul(e, inv_b, recip_scale);
}

// ---------------------------------------------------------------------------
// Fused truncation and upcast: x over Z_{2^ell} (unsigned reading) to
// floor(x / 2^s) or floor(x / 2^s) + 1 over Z_{2^ell_big}.
//
// With w the wrap bit of x_c + x_s, x = x_c + x_s - w 2^ell, so
//   x / 2^s = x_c / 2^s + x_s / 2^s - w 2^(ell-s).
// The client floors its part and the server takes the ceiling; together they
// never undershoot, and overshoot by at most one.
inline ShareTensor trunc_upcast(PartyContext& ctx, const ShareTensor& x, int s, int ell_big) {
  const RingParams p = x.params();
  PRIVINFER_ENFORCE(ell_big > p.ell && ell_big <= 64, "need ell < ell' <= 64");
  PRIVINFER_ENFORCE(s > 0 && s < p.ell, "need 0 < s < ell");
  const BoolShare w = ctx.f_wrap(x);
  const ShareTensor wa = ctx.f_b2a(w, ell_big - p.ell + s);
  const u64 big_mask = ring_mask(ell_big);
  const u64 carry_weight = u64{1} << (p.ell - s);
  RingTensor y(RingParams{ell_big, p.scale - s}, x.rows(), x.cols());
  const u64 round_up = (u64{1} << s) - 1;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const u64 xi = x.inner.data[i];
    const u64 q = ctx.is_client() ? (xi >> s) : ((xi >> s) + ((xi & round_up) != 0 ? 1 : 0));
    y.data[i] = (q - carry_weight * wa.inner.data[i]) & big_mask;
  }
  return ShareTensor{ctx.party(), std::move(y)};
}

// Signed variant: valid for |x| < 2^(ell-1) - 2^s. The client shifts the input
// into the nonnegative half before, and removes the shifted offset after.
inline ShareTensor signed_trunc_upcast(PartyContext& ctx, const ShareTensor& x, int s, int ell_big) {
  const RingParams p = x.params();
  ShareTensor biased = x;
  if (ctx.is_client()) biased.inner = add_constant(x.inner, u64{1} << (p.ell - 1));
  ShareTensor y = trunc_upcast(ctx, biased, s, ell_big);
  if (ctx.is_client()) y.inner = add_constant(y.inner, ring_mask(ell_big) & (u64{0} - (u64{1} << (p.ell - 1 - s))));
  return y;
}

// ---------------------------------------------------------------------------
// Two-party drivers

struct PairResult {
  ShareTensor yc;
  ShareTensor ys;
  Transcript transcript;
  double wall_ms = 0;

  RingTensor output() const { return reconstruct(yc, ys); }
};

using ShareFn = std::function<ShareTensor(PartyContext&, const ShareTensor&)>;

inline PairResult run_pair(const ShareTensor& xc, const ShareTensor& xs, const ShareFn& fn,
                           const RunOptions& opts = {}) {
  PairResult res;
  auto run = run_two_party(
      opts, [&](PartyContext& ctx) { res.yc = fn(ctx, xc); }, [&](PartyContext& ctx) { res.ys = fn(ctx, xs); });
  res.transcript = std::move(run.transcript);
  res.wall_ms = run.wall_ms;
  return res;
}

inline PairResult secure_gelu_pair(const ShareTensor& xc, const ShareTensor& xs, const SecurePiecewise& sp,
                                   const RunOptions& opts = {}) {
  return run_pair(xc, xs, [&](PartyContext& ctx, const ShareTensor& x) { return secure_gelu(ctx, x, sp); }, opts);
}

inline PairResult secure_exp_pair(const ShareTensor& xc, const ShareTensor& xs, const SecurePiecewise& sp,
                                  const RunOptions& opts = {}) {
  return run_pair(xc, xs, [&](PartyContext& ctx, const ShareTensor& x) { return secure_exp(ctx, x, sp); }, opts);
}

inline PairResult secure_softmax_pair(const ShareTensor& xc, const ShareTensor& xs, const SecurePiecewise& sp,
                                      const RunOptions& opts = {}) {
  return run_pair(xc, xs, [&](PartyContext& ctx, const ShareTensor& x) { return secure_softmax(ctx, x, sp); },
                  opts);
}

inline PairResult trunc_upcast_pair(const ShareTensor& xc, const ShareTensor& xs, int s, int ell_big,
                                    bool is_signed = false, const RunOptions& opts = {}) {
  return run_pair(
      xc, xs,
      [&](PartyContext& ctx, const ShareTensor& x) {
        return is_signed ? signed_trunc_upcast(ctx, x, s, ell_big) : trunc_upcast(ctx, x, s, ell_big);
      },
      opts);
}

}  // namespace privinfer
