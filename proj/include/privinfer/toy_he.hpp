#pragma once

// Symmetric RLWE encryption with plaintext modulus t = 2^t_bits and ciphertext
// modulus q = 2^q_bits. Every ciphertext carries a conservative bound on the
// absolute value of its error term; decryption refuses once the bound reaches
// delta/2. Not secure: no circuit privacy and toy-sized parameters.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"
#include "privinfer/poly_ring.hpp"

namespace privinfer {

inline constexpr int kFreshNoiseBound = 8;

// 128-bit words cover t <= 2^32 with plenty of headroom; wider plaintexts need
// a 192-bit q (see default_q_bits).
inline int default_q_bits(int t_bits) { return t_bits <= 32 ? 128 : 192; }

template <CoeffWord U>
U uniform_word(std::mt19937_64& rng, int bits) {
  U v(0);
  for (int shift = 0; shift < bits; shift += 64) v |= U(rng()) << shift;
  return v & low_mask<U>(bits);
}

template <CoeffWord U>
struct SecretKey {
  Poly<U> s;                         // coefficients in {q-1, 0, 1}
  std::vector<std::uint32_t> plus;   // positions holding +1
  std::vector<std::uint32_t> minus;  // positions holding -1
};

template <CoeffWord U>
struct Ciphertext {
  Poly<U> b;
  Poly<U> a;
  U noise_bound = U(0);
  int level_scale = 0;

  const PolyParams& params() const { return b.params; }
  friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

struct OpCounters {
  std::uint64_t scalar_mults = 0;  // ciphertext x scalar
  std::uint64_t poly_mults = 0;    // ciphertext x plaintext polynomial
  std::uint64_t coeff_mults = 0;   // word products performed by the above
  std::uint64_t additions = 0;
  std::uint64_t shifts = 0;
  std::uint64_t encryptions = 0;
  std::uint64_t decryptions = 0;

  void reset() { *this = OpCounters{}; }
};

template <CoeffWord U>
U half_delta(const PolyParams& p) {
  return pow2<U>(p.delta_bits() - 1);
}

// Lift a plaintext residue c in Z_t to its signed representative mod q.
template <CoeffWord U>
U lift_signed(std::uint64_t c, const PolyParams& p) {
  const std::uint64_t tmask = ring_mask(p.t_bits);
  c &= tmask;
  const std::uint64_t half = std::uint64_t{1} << (p.t_bits - 1);
  if (c < half) return U(c);
  const std::uint64_t neg = (tmask - c) + 1;  // t - c
  return (U(0) - U(neg)) & low_mask<U>(p.q_bits);
}

// min(c, t - c): the multiplier a scalar applies to the error term.
inline std::uint64_t signed_magnitude(std::uint64_t c, int t_bits) {
  const std::uint64_t tmask = ring_mask(t_bits);
  c &= tmask;
  if (c == 0) return 0;
  return std::min(c, (tmask - c) + 1);
}

template <CoeffWord U>
SecretKey<U> keygen(const PolyParams& params, std::uint64_t seed, std::size_t hamming_weight = 0) {
  params.template validate<U>();
  const std::size_t n = params.n;
  if (hamming_weight == 0) hamming_weight = std::max<std::size_t>(1, std::min<std::size_t>(64, n / 2));
  PRIVINFER_ENFORCE(hamming_weight <= n, "hamming weight exceeds N");
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  // Partial Fisher-Yates with raw engine output for cross-platform determinism.
  for (std::size_t i = 0; i < hamming_weight; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  SecretKey<U> sk{Poly<U>(params), {}, {}};
  const U minus_one = low_mask<U>(params.q_bits);
  for (std::size_t i = 0; i < hamming_weight; ++i) {
    if (rng() & 1) {
      sk.plus.push_back(idx[i]);
      sk.s.coeffs[idx[i]] = U(1);
    } else {
      sk.minus.push_back(idx[i]);
      sk.s.coeffs[idx[i]] = minus_one;
    }
  }
  std::sort(sk.plus.begin(), sk.plus.end());
  std::sort(sk.minus.begin(), sk.minus.end());
  return sk;
}

// Centered binomial with 8 coin pairs: values in [-8, 8].
inline int sample_cbd8(std::mt19937_64& rng) {
  const std::uint64_t r = rng();
  return std::popcount(r & 0xFF) - std::popcount((r >> 8) & 0xFF);
}

template <CoeffWord U>
Poly<U> embed_plain(const PlainPoly& m, const PolyParams& p) {
  PRIVINFER_ENFORCE(m.params.n == p.n, "plaintext degree differs from ciphertext degree");
  PRIVINFER_ENFORCE(m.params.q_bits == p.t_bits, "plaintext modulus differs from t");
  Poly<U> out(p);
  const int shift = p.delta_bits();
  const U mask = low_mask<U>(p.q_bits);
  for (std::size_t i = 0; i < p.n; ++i) out.coeffs[i] = (U(m.coeffs[i]) << shift) & mask;
  return out;
}

template <CoeffWord U>
Ciphertext<U> encrypt(const PlainPoly& m, const SecretKey<U>& sk, std::mt19937_64& rng,
                      OpCounters* counters = nullptr) {
  const PolyParams& p = sk.s.params;
  const std::uint64_t tmask = ring_mask(p.t_bits);
  for (auto c : m.coeffs) {
    PRIVINFER_ENFORCE(c <= tmask, "plaintext coefficient not below t");
  }
  Ciphertext<U> ct;
  ct.a = Poly<U>(p);
  for (auto& c : ct.a.coeffs) c = uniform_word<U>(rng, p.q_bits);
  ct.b = negacyclic_mul_ternary(ct.a, std::span<const std::uint32_t>(sk.plus),
                                std::span<const std::uint32_t>(sk.minus));
  const Poly<U> dm = embed_plain<U>(m, p);
  const U mask = low_mask<U>(p.q_bits);
  for (std::size_t i = 0; i < p.n; ++i) {
    const int e = sample_cbd8(rng);
    U v = ct.b.coeffs[i] + dm.coeffs[i];
    v = e >= 0 ? v + U(static_cast<std::uint64_t>(e)) : v - U(static_cast<std::uint64_t>(-e));
    ct.b.coeffs[i] = v & mask;
  }
  ct.noise_bound = U(kFreshNoiseBound);
  if (counters) ++counters->encryptions;
  return ct;
}

// b - a*s mod q, i.e. delta*m + e.
template <CoeffWord U>
Poly<U> phase(const Ciphertext<U>& ct, const SecretKey<U>& sk) {
  PRIVINFER_ENFORCE(ct.params() == sk.s.params, "key and ciphertext parameters differ");
  const Poly<U> as = negacyclic_mul_ternary(ct.a, std::span<const std::uint32_t>(sk.plus),
                                            std::span<const std::uint32_t>(sk.minus));
  return poly_sub(ct.b, as);
}

template <CoeffWord U>
PlainPoly decrypt(const Ciphertext<U>& ct, const SecretKey<U>& sk, OpCounters* counters = nullptr) {
  const PolyParams& p = ct.params();
  if (ct.noise_bound >= half_delta<U>(p)) {
    throw NoiseBudgetExceeded("decrypt: noise bound reached delta/2");
  }
  const Poly<U> v = phase(ct, sk);
  PlainPoly m(plain_params(p.n, p.t_bits));
  const U round = half_delta<U>(p);
  const U qmask = low_mask<U>(p.q_bits);
  const std::uint64_t tmask = ring_mask(p.t_bits);
  for (std::size_t i = 0; i < p.n; ++i) {
    const U r = ((v.coeffs[i] + round) & qmask) >> p.delta_bits();
    m.coeffs[i] = low_u64(r) & tmask;
  }
  if (counters) ++counters->decryptions;
  return m;
}

// Largest |e_i| of b - a*s - delta*m, the actual error the bound must cover.
template <CoeffWord U>
U measure_noise(const Ciphertext<U>& ct, const SecretKey<U>& sk, const PlainPoly& expected) {
  const PolyParams& p = ct.params();
  const Poly<U> e = poly_sub(phase(ct, sk), embed_plain<U>(expected, p));
  const U half_q = pow2<U>(p.q_bits - 1);
  const U qmask = low_mask<U>(p.q_bits);
  U worst(0);
  for (const auto& c : e.coeffs) {
    const U mag = c >= half_q ? ((U(0) - c) & qmask) : c;
    worst = std::max(worst, mag);
  }
  return worst;
}

template <CoeffWord U>
class HeEvaluator {
 public:
  explicit HeEvaluator(PolyParams params, bool strict = false)
      : params_(params), strict_(strict) {
    params_.template validate<U>();
  }

  const PolyParams& params() const { return params_; }
  OpCounters& counters() { return counters_; }
  const OpCounters& counters() const { return counters_; }

  Ciphertext<U> zero() const {
    return Ciphertext<U>{Poly<U>(params_), Poly<U>(params_), U(0), 0};
  }

  Ciphertext<U> add(const Ciphertext<U>& x, const Ciphertext<U>& y) {
    PRIVINFER_ENFORCE(x.params() == y.params(), "ciphertext parameters differ");
    ++counters_.additions;
    return checked(Ciphertext<U>{poly_add(x.b, y.b), poly_add(x.a, y.a),
                                 saturating_add(x.noise_bound, y.noise_bound),
                                 std::max(x.level_scale, y.level_scale)});
  }

  Ciphertext<U> add_plain(const Ciphertext<U>& x, const PlainPoly& m) {
    Ciphertext<U> out = x;
    out.b = poly_add(x.b, embed_plain<U>(m, x.params()));
    return out;
  }

  Ciphertext<U> sub_plain(const Ciphertext<U>& x, const PlainPoly& r) {
    Ciphertext<U> out = x;
    out.b = poly_sub(x.b, embed_plain<U>(r, x.params()));
    return out;
  }

  Ciphertext<U> scalar_mul(std::uint64_t c, const Ciphertext<U>& x) {
    const PolyParams& p = x.params();
    const U lifted = lift_signed<U>(c, p);
    counters_.scalar_mults += 1;
    counters_.coeff_mults += p.n;
    return checked(Ciphertext<U>{privinfer::scalar_mul(lifted, x.b), privinfer::scalar_mul(lifted, x.a),
                                 saturating_mul(x.noise_bound, U(signed_magnitude(c, p.t_bits))),
                                 x.level_scale});
  }

  // acc += c (x) x without temporaries; same accounting as scalar_mul + add.
  void scalar_mul_accumulate(Ciphertext<U>& acc, std::uint64_t c, const Ciphertext<U>& x) {
    const PolyParams& p = x.params();
    PRIVINFER_ENFORCE(acc.params() == p, "ciphertext parameters differ");
    const U lifted = lift_signed<U>(c, p);
    counters_.scalar_mults += 1;
    counters_.coeff_mults += p.n;
    ++counters_.additions;
    const U mask = low_mask<U>(p.q_bits);
    U* ab = acc.b.coeffs.data();
    U* aa = acc.a.coeffs.data();
    const U* xb = x.b.coeffs.data();
    const U* xa = x.a.coeffs.data();
    for (std::size_t i = 0; i < p.n; ++i) {
      ab[i] += lifted * xb[i];
      aa[i] += lifted * xa[i];
    }
    if (mask != word_max<U>()) {
      for (std::size_t i = 0; i < p.n; ++i) {
        ab[i] &= mask;
        aa[i] &= mask;
      }
    }
    acc.noise_bound = saturating_add(
        acc.noise_bound, saturating_mul(x.noise_bound, U(signed_magnitude(c, p.t_bits))));
    checked_ref(acc);
  }

  // Plaintext-ciphertext polynomial product. Worst-case error growth N * max|p|.
  Ciphertext<U> poly_mul(const PlainPoly& m, const Ciphertext<U>& x,
                         MulAlgorithm algo = MulAlgorithm::schoolbook) {
    const PolyParams& p = x.params();
    PRIVINFER_ENFORCE(m.params.n == p.n && m.params.q_bits == p.t_bits,
                   "plaintext does not match ciphertext parameters");
    Poly<U> lifted(p);
    std::uint64_t max_mag = 0;
    std::uint64_t nnz = 0;
    for (std::size_t i = 0; i < p.n; ++i) {
      lifted.coeffs[i] = lift_signed<U>(m.coeffs[i], p);
      max_mag = std::max(max_mag, signed_magnitude(m.coeffs[i], p.t_bits));
      nnz += m.coeffs[i] != 0;
    }
    counters_.poly_mults += 1;
    counters_.coeff_mults += nnz * p.n;
    const U growth = saturating_mul(U(static_cast<std::uint64_t>(p.n)), U(max_mag));
    return checked(Ciphertext<U>{negacyclic_mul(lifted, x.b, algo), negacyclic_mul(lifted, x.a, algo),
                                 saturating_mul(x.noise_bound, growth), x.level_scale});
  }

  // Multiply by X^steps: a coefficient permutation with sign flips, noise unchanged.
  Ciphertext<U> rshift(const Ciphertext<U>& x, std::size_t steps) {
    ++counters_.shifts;
    return Ciphertext<U>{monomial_shift(x.b, steps), monomial_shift(x.a, steps), x.noise_bound,
                         x.level_scale};
  }

  bool within_budget(const Ciphertext<U>& x) const {
    return x.noise_bound < half_delta<U>(x.params());
  }

 private:
  Ciphertext<U> checked(Ciphertext<U> ct) const {
    checked_ref(ct);
    return ct;
  }
  void checked_ref(const Ciphertext<U>& ct) const {
    if (strict_ && !within_budget(ct)) {
      throw NoiseBudgetExceeded("homomorphic operation exhausted the noise budget");
    }
  }

  PolyParams params_;
  bool strict_;
  OpCounters counters_;
};

// Wire / file layout: u32 N, u16 q_bits, u16 t_bits, noise bound, then the 2N
// coefficients of b followed by a. Coefficients and the noise bound are
// little-endian, ceil(q_bits / 8) bytes each (16 bytes at q = 2^128).
inline std::size_t coeff_bytes(int q_bits) { return static_cast<std::size_t>((q_bits + 7) / 8); }

inline std::size_t serialized_size(const PolyParams& p) {
  return 8 + coeff_bytes(p.q_bits) * (2 * p.n + 1);
}

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t bytes) {
  for (std::size_t i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(const std::uint8_t* in, std::size_t bytes) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bytes; ++i) v |= std::uint64_t{in[i]} << (8 * i);
  return v;
}

template <CoeffWord U>
void put_word(std::vector<std::uint8_t>& out, const U& v, std::size_t bytes) {
  for (std::size_t i = 0; i < bytes; ++i) {
    const std::uint64_t limb = word_traits<U>::limb(v, static_cast<int>(i / 8));
    out.push_back(static_cast<std::uint8_t>(limb >> (8 * (i % 8))));
  }
}

template <CoeffWord U>
U get_word(const std::uint8_t* in, std::size_t bytes) {
  U v(0);
  for (std::size_t i = 0; i < bytes; ++i) v |= U(std::uint64_t{in[i]}) << (8 * i);
  return v;
}

}  // namespace detail

template <CoeffWord U>
void serialize_into(const Ciphertext<U>& ct, std::vector<std::uint8_t>& out) {
  const PolyParams& p = ct.params();
  const std::size_t w = coeff_bytes(p.q_bits);
  out.reserve(out.size() + serialized_size(p));
  detail::put_le(out, p.n, 4);
  detail::put_le(out, static_cast<std::uint64_t>(p.q_bits), 2);
  detail::put_le(out, static_cast<std::uint64_t>(p.t_bits), 2);
  detail::put_word<U>(out, std::min(ct.noise_bound, low_mask<U>(p.q_bits)), w);
  for (const auto& c : ct.b.coeffs) detail::put_word<U>(out, c, w);
  for (const auto& c : ct.a.coeffs) detail::put_word<U>(out, c, w);
}

template <CoeffWord U>
std::vector<std::uint8_t> serialize(const Ciphertext<U>& ct) {
  std::vector<std::uint8_t> out;
  serialize_into(ct, out);
  return out;
}

template <CoeffWord U>
Ciphertext<U> deserialize(std::span<const std::uint8_t> in) {
  if (in.size() < 8) throw ProtocolError("ciphertext: truncated header");
  PolyParams p;
  p.n = static_cast<std::size_t>(detail::get_le(in.data(), 4));
  p.q_bits = static_cast<int>(detail::get_le(in.data() + 4, 2));
  p.t_bits = static_cast<int>(detail::get_le(in.data() + 6, 2));
  if (p.q_bits > word_bits<U> || p.n == 0 || !std::has_single_bit(p.n) || p.t_bits >= p.q_bits) {
    throw ProtocolError("ciphertext: invalid header");
  }
  if (in.size() != serialized_size(p)) throw ProtocolError("ciphertext: size does not match header");
  const std::size_t w = coeff_bytes(p.q_bits);
  const std::uint8_t* cur = in.data() + 8;
  Ciphertext<U> ct{Poly<U>(p), Poly<U>(p), U(0), 0};
  ct.noise_bound = detail::get_word<U>(cur, w);
  cur += w;
  for (auto& c : ct.b.coeffs) {
    c = detail::get_word<U>(cur, w);
    cur += w;
  }
  for (auto& c : ct.a.coeffs) {
    c = detail::get_word<U>(cur, w);
    cur += w;
  }
  return ct;
}

}  // namespace privinfer
