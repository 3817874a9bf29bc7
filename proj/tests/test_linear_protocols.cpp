#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "privinfer/linear_protocols.hpp"

using namespace privinfer;

namespace {

struct Fixture {
  LinearLayerSpec spec;
  RingTensor x, w;
  ShareTensor xc, xs;
};

Fixture make_setup(std::size_t k, std::size_t m, std::size_t n, int ell, std::size_t poly_n, std::uint64_t seed) {
  Fixture s;
  s.spec.k = k;
  s.spec.m = m;
  s.spec.n = n;
  s.spec.ring = RingParams{ell, ell / 4};
  s.spec.poly_n = poly_n;
  std::mt19937_64 rng(seed);
  s.x = random_tensor(s.spec.ring, k, m, rng);
  s.w = random_tensor(s.spec.ring, m, n, rng);
  std::tie(s.xc, s.xs) = share(s.x, rng);
  return s;
}

// Naive triple loop over unsigned __int128 as an independent product.
RingTensor naive_product(const RingTensor& x, const RingTensor& w) {
  RingTensor z(RingParams{x.params.ell, x.params.scale + w.params.scale}, x.rows, w.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < w.cols; ++j) {
      unsigned __int128 acc = 0;
      for (std::size_t t = 0; t < x.cols; ++t) acc += static_cast<unsigned __int128>(x.at(i, t)) * w.at(t, j);
      z.at(i, j) = static_cast<u64>(acc) & x.params.mask();
    }
  return z;
}

}  // namespace

TEST(Cop, ExactAndCountsMatchFormula) {
  const Fixture s = make_setup(9, 7, 20, 32, 64, 1);
  std::mt19937_64 rng(2);
  const auto sk = keygen<u128>(s.spec.he_params(), 3);
  const auto store = cop_setup(s.w, sk, s.spec, rng);
  const LinearResult r = cop_matmul(store, sk, s.xc, s.xs, s.w, RunOptions{});
  EXPECT_EQ(r.output(), naive_product(s.x, s.w));
  EXPECT_EQ(r.transcript.ct_in, 0u);
  EXPECT_EQ(r.transcript.ct_out, cop_output_cts(s.spec));
  EXPECT_EQ(r.transcript.ct_out, 3u);  // ceil(9 / floor(64 / 20))
  EXPECT_EQ(r.transcript.rounds("online"), 1);
  EXPECT_EQ(r.client_ops.coeff_mults, 9u * 7u * 64u);
  EXPECT_EQ(r.transcript.ct_setup, 7u);
}

TEST(Cop, WideRingUses192BitModulus) {
  const Fixture s = make_setup(4, 5, 6, 64, 32, 4);
  EXPECT_EQ(s.spec.effective_q_bits(), 192);
  std::mt19937_64 rng(5);
  const auto sk = keygen<u256>(s.spec.he_params(), 6);
  const auto store = cop_setup(s.w, sk, s.spec, rng);
  EXPECT_EQ(cop_matmul(store, sk, s.xc, s.xs, s.w, RunOptions{}).output(), naive_product(s.x, s.w));
}

TEST(Cop, RejectsRowsWiderThanN) {
  const Fixture s = make_setup(2, 2, 40, 32, 32, 7);
  std::mt19937_64 rng(8);
  const auto sk = keygen<u128>(s.spec.he_params(), 9);
  EXPECT_THROW(cop_setup(s.w, sk, s.spec, rng), std::invalid_argument);
}

TEST(Sip, ExactWithPartialWindows) {
  const Fixture s = make_setup(5, 7, 6, 32, 64, 10);
  const auto sk = keygen<u128>(s.spec.he_params(), 11);
  const WindowShape w{2, 4, 4};
  const LinearResult r = sip_matmul(s.xc, s.xs, s.w, w, sk, s.spec, RunOptions{});
  EXPECT_EQ(r.output(), naive_product(s.x, s.w));
  EXPECT_EQ(r.transcript.ct_in, sip_input_cts(s.spec, w));
  EXPECT_EQ(r.transcript.ct_out, sip_output_cts(s.spec, w));
  EXPECT_EQ(r.transcript.rounds("online"), 2);
}

TEST(Sip, SixteenBitRing) {
  const Fixture s = make_setup(3, 9, 4, 16, 128, 12);
  const auto sk = keygen<u128>(s.spec.he_params(), 13);
  EXPECT_EQ(sip_matmul(s.xc, s.xs, s.w, WindowShape{2, 8, 4}, sk, s.spec, RunOptions{}).output(),
            naive_product(s.x, s.w));
}

TEST(Store, FileRoundTripAndStreaming) {
  const Fixture s = make_setup(3, 6, 8, 32, 32, 14);
  std::mt19937_64 rng(15);
  const auto sk = keygen<u128>(s.spec.he_params(), 16);
  const auto mem = cop_setup(s.w, sk, s.spec, rng);
  const auto path = (std::filesystem::temp_directory_path() / "privinfer_store_test.bin").string();
  mem.save(path);
  const auto loaded = WeightStore<u128>::load(path);
  EXPECT_EQ(loaded.spec().he_params(), s.spec.he_params());
  EXPECT_EQ(loaded.spec().ring, s.spec.ring);
  ASSERT_EQ(loaded.size(), 6u);
  for (std::size_t b = 0; b < 6; ++b) EXPECT_EQ(loaded.at(b), mem.at(b));
  const auto streamed = WeightStore<u128>::open(path);
  std::size_t seen = 0;
  streamed.for_each([&](std::size_t b, const Ciphertext<u128>& ct) {
    EXPECT_EQ(ct, mem.at(b));
    ++seen;
  });
  EXPECT_EQ(seen, 6u);
  EXPECT_EQ(cop_matmul(streamed, sk, s.xc, s.xs, s.w, RunOptions{}).output(), naive_product(s.x, s.w));
  std::filesystem::remove(path);
}

TEST(Store, CorruptHeaderRejected) {
  const auto path = (std::filesystem::temp_directory_path() / "privinfer_store_bad.bin").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTASTORE-------------------------------";
  }
  EXPECT_THROW(WeightStore<u128>::load(path), ProtocolError);
  std::filesystem::remove(path);
}
