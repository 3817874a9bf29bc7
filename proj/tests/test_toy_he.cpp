#include <gtest/gtest.h>

#include <random>

#include "privinfer/toy_he.hpp"

using namespace privinfer;

namespace {

PlainPoly random_plain(std::size_t n, int t_bits, std::mt19937_64& rng) {
  PlainPoly m(plain_params(n, t_bits));
  for (auto& c : m.coeffs) c = rng() & ring_mask(t_bits);
  return m;
}

}  // namespace

template <class U>
class ToyHe : public ::testing::Test {};
using Words = ::testing::Types<u128, u256>;
TYPED_TEST_SUITE(ToyHe, Words);

TYPED_TEST(ToyHe, EncryptDecrypt) {
  using U = TypeParam;
  const int t = std::is_same_v<U, u128> ? 32 : 64;
  const PolyParams p{64, default_q_bits(t), t};
  std::mt19937_64 rng(1);
  const auto sk = keygen<U>(p, 7);
  for (int i = 0; i < 20; ++i) {
    const PlainPoly m = random_plain(64, t, rng);
    const auto ct = encrypt(m, sk, rng);
    EXPECT_EQ(decrypt(ct, sk), m);
    EXPECT_LE(measure_noise(ct, sk, m), U(kFreshNoiseBound));
  }
}

TYPED_TEST(ToyHe, HomomorphicOpsAgreeWithPlaintext) {
  using U = TypeParam;
  const int t = std::is_same_v<U, u128> ? 32 : 64;
  const PolyParams p{32, default_q_bits(t), t};
  std::mt19937_64 rng(2);
  const auto sk = keygen<U>(p, 8);
  HeEvaluator<U> ev(p);
  const PlainPoly a = random_plain(32, t, rng), b = random_plain(32, t, rng);
  const auto ca = encrypt(a, sk, rng), cb = encrypt(b, sk, rng);
  EXPECT_EQ(decrypt(ev.add(ca, cb), sk), poly_add(a, b));
  EXPECT_EQ(decrypt(ev.add_plain(ca, b), sk), poly_add(a, b));
  EXPECT_EQ(decrypt(ev.sub_plain(ca, b), sk), poly_sub(a, b));
  const std::uint64_t c = rng() & ring_mask(t);
  EXPECT_EQ(decrypt(ev.scalar_mul(c, ca), sk), scalar_mul<std::uint64_t>(c, a));
  auto acc = ev.zero();
  ev.scalar_mul_accumulate(acc, c, ca);
  ev.scalar_mul_accumulate(acc, 3, cb);
  EXPECT_EQ(decrypt(acc, sk), poly_add(scalar_mul<std::uint64_t>(c, a), scalar_mul<std::uint64_t>(3, b)));
  EXPECT_EQ(decrypt(ev.rshift(ca, 5), sk), monomial_shift(a, 5));
  PlainPoly small(plain_params(32, t));
  for (auto& x : small.coeffs) x = rng() % 16;
  EXPECT_EQ(decrypt(ev.poly_mul(small, ca), sk), negacyclic_mul(small, a));
}

TYPED_TEST(ToyHe, SerializationRoundTrip) {
  using U = TypeParam;
  const int t = std::is_same_v<U, u128> ? 32 : 64;
  const PolyParams p{16, default_q_bits(t), t};
  std::mt19937_64 rng(3);
  const auto sk = keygen<U>(p, 9);
  const auto ct = encrypt(random_plain(16, t, rng), sk, rng);
  const auto bytes = serialize(ct);
  EXPECT_EQ(bytes.size(), serialized_size(p));
  EXPECT_EQ(bytes.size(), 8 + coeff_bytes(p.q_bits) * 33);
  EXPECT_EQ(deserialize<U>(bytes), ct);
  auto cut = bytes;
  cut.pop_back();
  EXPECT_THROW(deserialize<U>(cut), ProtocolError);
}

TEST(ToyHe, CoefficientWidthFollowsModulus) {
  EXPECT_EQ(coeff_bytes(128), 16u);
  EXPECT_EQ(coeff_bytes(192), 24u);
  EXPECT_EQ(default_q_bits(32), 128);
  EXPECT_EQ(default_q_bits(64), 192);
}

TEST(ToyHe, KeyIsSparseTernary) {
  const auto sk = keygen<u128>(PolyParams{256, 128, 32}, 1);
  EXPECT_EQ(sk.plus.size() + sk.minus.size(), 64u);
  const auto small = keygen<u128>(PolyParams{16, 128, 32}, 1);
  EXPECT_EQ(small.plus.size() + small.minus.size(), 8u);
}

TEST(ToyHe, ExhaustedBudgetRefusesDecryption) {
  const PolyParams p{8, 40, 16};  // delta = 2^24
  std::mt19937_64 rng(4);
  const auto sk = keygen<u128>(p, 1);
  HeEvaluator<u128> ev(p);
  auto ct = encrypt(random_plain(8, 16, rng), sk, rng);
  while (ev.within_budget(ct)) ct = ev.scalar_mul(0x7FFF, ct);
  EXPECT_THROW(decrypt(ct, sk), NoiseBudgetExceeded);
  HeEvaluator<u128> strict(p, true);
  auto ct2 = encrypt(random_plain(8, 16, rng), sk, rng);
  EXPECT_THROW(
      {
        for (int i = 0; i < 10; ++i) ct2 = strict.scalar_mul(0x7FFF, ct2);
      },
      NoiseBudgetExceeded);
}

TEST(ToyHe, NoiseBoundCoversTrueNoise) {
  const PolyParams p{32, 64, 16};
  std::mt19937_64 rng(5);
  const auto sk = keygen<u128>(p, 2);
  HeEvaluator<u128> ev(p);
  PlainPoly m = random_plain(32, 16, rng);
  auto ct = encrypt(m, sk, rng);
  for (int i = 0; i < 6; ++i) {
    const std::uint64_t c = rng() & 0xFFFF;
    ct = ev.add(ev.scalar_mul(c, ct), encrypt(m, sk, rng));
    m = poly_add(scalar_mul<std::uint64_t>(c, m), m);
    EXPECT_LE(measure_noise(ct, sk, m), ct.noise_bound);
  }
}

TEST(ToyHe, CountersTrackWork) {
  const PolyParams p{16, 128, 32};
  std::mt19937_64 rng(6);
  const auto sk = keygen<u128>(p, 3);
  HeEvaluator<u128> ev(p);
  const auto ct = encrypt(random_plain(16, 32, rng), sk, rng);
  auto acc = ev.zero();
  for (int i = 0; i < 5; ++i) ev.scalar_mul_accumulate(acc, 3, ct);
  EXPECT_EQ(ev.counters().coeff_mults, 5u * 16u);
  EXPECT_EQ(ev.counters().scalar_mults, 5u);
}
