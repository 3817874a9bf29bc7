#include <gtest/gtest.h>

#include <random>

#include "privinfer/encodings.hpp"

using namespace privinfer;

namespace {

RingTensor random_matrix(RingParams p, std::size_t r, std::size_t c, std::mt19937_64& rng) {
  RingTensor t(p, r, c);
  for (auto& v : t.data) v = rng() & p.mask();
  return t;
}

}  // namespace

// The product of the two window encodings carries each block product at the
// documented output positions.
TEST(Encodings, WindowProductDecodesToMatmul) {
  std::mt19937_64 rng(1);
  const RingParams p{32, 0};
  for (const WindowShape w : {WindowShape{2, 3, 4}, WindowShape{1, 8, 2}, WindowShape{4, 4, 4}, WindowShape{1, 1, 1}}) {
    const std::size_t n = 64;
    const RingTensor x = random_matrix(p, w.k_w, w.m_w, rng);
    const RingTensor wt = random_matrix(p, w.m_w, w.n_w, rng);
    const PlainPoly z = negacyclic_mul(window_encode_left(x, w, n), window_encode_right(wt, w, n));
    EXPECT_EQ(window_decode(z, w, p), ring_matmul(x, wt));
  }
}

TEST(Encodings, WindowEdgesAreZeroPadded) {
  std::mt19937_64 rng(2);
  const RingParams p{16, 0};
  const WindowShape w{4, 4, 4};
  const RingTensor x = random_matrix(p, 3, 5, rng);
  const PlainPoly e = window_encode_left(x, w, 64, 0, 4);
  std::size_t nnz = 0;
  for (auto c : e.coeffs) nnz += c != 0;
  EXPECT_LE(nnz, 3u);
  EXPECT_EQ(e.coeffs[w.m_w - 1], x.at(0, 4));
}

TEST(Encodings, WindowTooLargeThrows) {
  const RingTensor x(RingParams{16, 0}, 4, 4);
  EXPECT_THROW(window_encode_left(x, WindowShape{4, 4, 4}, 32), std::invalid_argument);
}

TEST(Encodings, PackingPlanFormula) {
  EXPECT_EQ(make_packing_plan(128, 768, 8192).ct_count, 13u);
  EXPECT_EQ(make_packing_plan(128, 2304, 8192).ct_count, 43u);
  EXPECT_EQ(make_packing_plan(128, 3072, 8192).ct_count, 64u);
  EXPECT_EQ(make_packing_plan(5, 3, 8).rows_per_ct, 2u);
  EXPECT_EQ(make_packing_plan(5, 3, 8).ct_count, 3u);
  EXPECT_THROW(make_packing_plan(4, 9, 8), std::invalid_argument);
}

TEST(Encodings, PackUnpackRoundTrip) {
  std::mt19937_64 rng(3);
  const PolyParams hp{32, 128, 16};
  const auto sk = keygen<u128>(hp, 4);
  HeEvaluator<u128> ev(hp);
  const std::size_t k = 7, n = 5;
  const RingParams rp{16, 0};
  const RingTensor z = random_matrix(rp, k, n, rng);
  std::vector<Ciphertext<u128>> rows;
  for (std::size_t a = 0; a < k; ++a)
    rows.push_back(encrypt(rowwise_encode(std::span<const u64>(&z.data[a * n], n), 16, 32), sk, rng));
  const PackingPlan plan = make_packing_plan(k, n, 32);
  const auto packed = pack_outputs(ev, rows, plan);
  ASSERT_EQ(packed.size(), plan.ct_count);
  std::vector<PlainPoly> pts;
  for (const auto& c : packed) pts.push_back(decrypt(c, sk));
  EXPECT_EQ(unpack_outputs(pts, plan, k, n, rp), z);
}
