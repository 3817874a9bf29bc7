#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <thread>

#include "privinfer/mpc/runtime.hpp"

using namespace privinfer;

namespace {

std::vector<std::uint8_t> bytes_of(std::initializer_list<int> v) {
  std::vector<std::uint8_t> out;
  for (int x : v) out.push_back(static_cast<std::uint8_t>(x));
  return out;
}

}  // namespace

TEST(Framing, HeaderLayoutIsLittleEndian) {
  const auto payload = bytes_of({1, 2, 3});
  const auto f = encode_frame(0x1234, payload);
  ASSERT_EQ(f.size(), 9u);
  EXPECT_EQ(f[0], 3);
  EXPECT_EQ(f[1], 0);
  EXPECT_EQ(f[4], 0x34);
  EXPECT_EQ(f[5], 0x12);
  const auto [len, tag] = decode_header(f.data());
  EXPECT_EQ(len, 3u);
  EXPECT_EQ(tag, 0x1234);
}

TEST(Framing, OversizedLengthIsMalformed) {
  const auto h = bytes_of({0xFF, 0xFF, 0xFF, 0xFF, 0, 0});
  EXPECT_THROW(decode_header(h.data()), ProtocolError);
}

TEST(Channels, InprocAndTcpDeliverFrames) {
  for (bool tcp : {false, true}) {
    auto [a, b] = tcp ? make_tcp_pair(0) : make_inproc_pair();
    std::vector<std::uint8_t> big(100000);
    for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<std::uint8_t>(i * 7);
    std::thread t([&, a = a] {
      a->send_frame(7, big);
      a->send_frame(8, {});
    });
    const Frame f1 = b->recv_frame();
    const Frame f2 = b->recv_frame();
    t.join();
    EXPECT_EQ(f1.tag, 7);
    EXPECT_EQ(f1.payload, big);
    EXPECT_EQ(f2.tag, 8);
    EXPECT_TRUE(f2.payload.empty());
  }
}

TEST(Channels, AbortUnblocksReader) {
  for (bool tcp : {false, true}) {
    auto [a, b] = tcp ? make_tcp_pair(0) : make_inproc_pair();
    std::thread t([a = a] {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      a->abort();
    });
    EXPECT_THROW(b->recv_frame(), TransportError);
    t.join();
  }
}

TEST(Runtime, WrongTagIsProtocolError) {
  EXPECT_THROW(run_two_party(
                   RunOptions{}, [](PartyContext& c) { c.send(1, bytes_of({1})); },
                   [](PartyContext& s) { s.recv(2); }),
               ProtocolError);
}

TEST(Runtime, PeerFailurePropagatesRootCause) {
  EXPECT_THROW(run_two_party(
                   RunOptions{}, [](PartyContext& c) { c.recv(1); },
                   [](PartyContext&) { throw std::invalid_argument("server failed"); }),
               std::invalid_argument);
}

TEST(Runtime, PackRingRoundTrip) {
  std::mt19937_64 rng(1);
  for (int ell : {4, 12, 32, 61, 64}) {
    std::vector<u64> v(37);
    for (auto& x : v) x = rng() & ring_mask(ell);
    const auto bytes = pack_ring(v, ell);
    EXPECT_EQ(bytes.size(), 37u * ((ell + 7) / 8));
    EXPECT_EQ(unpack_ring(bytes, ell, 37), v);
  }
}

// Exhaustive over Z_16: every functionality reconstructs to its plain
// definition for all operand pairs.
TEST(Functionalities, ExhaustiveFourBitRing) {
  const int ell = 4;
  const RingParams p{ell, 0};
  RingTensor a(p, 16, 16), b(p, 16, 16);
  for (u64 i = 0; i < 16; ++i)
    for (u64 j = 0; j < 16; ++j) {
      a.at(i, j) = i;
      b.at(i, j) = j;
    }
  std::mt19937_64 rng(2);
  auto [ac, as] = share(a, rng);
  auto [bc, bs] = share(b, rng);
  ShareTensor mul_out[2], mul_trunc[2], b2a_out[2], wa[2];
  BoolShare less_out[2], wrap_out[2];
  run_two_party(
      RunOptions{},
      [&](PartyContext& c) {
        mul_out[0] = c.f_mul(ac, bc);
        mul_trunc[0] = c.f_mul(ac, bc, 1);
        less_out[0] = c.f_less(ac, bc);
        b2a_out[0] = c.f_b2a(less_out[0], 8);
        wrap_out[0] = c.f_wrap(ac);
      },
      [&](PartyContext& s) {
        mul_out[1] = s.f_mul(as, bs);
        mul_trunc[1] = s.f_mul(as, bs, 1);
        less_out[1] = s.f_less(as, bs);
        b2a_out[1] = s.f_b2a(less_out[1], 8);
        wrap_out[1] = s.f_wrap(as);
      });
  const RingTensor m = reconstruct(mul_out[0], mul_out[1]);
  const RingTensor mt = reconstruct(mul_trunc[0], mul_trunc[1]);
  const auto lt = reconstruct_bits(less_out[0], less_out[1]);
  const RingTensor ba = reconstruct(b2a_out[0], b2a_out[1]);
  const auto wr = reconstruct_bits(wrap_out[0], wrap_out[1]);
  for (u64 i = 0; i < 16; ++i)
    for (u64 j = 0; j < 16; ++j) {
      const std::size_t k = i * 16 + j;
      const i64 si = to_signed(i, ell), sj = to_signed(j, ell);
      EXPECT_EQ(m.data[k], (i * j) & 15);
      // Signed product wrapped to 4 bits, then floor-divided by 2.
      EXPECT_EQ(to_signed(mt.data[k], ell), to_signed((i * j) & 15, ell) >> 1);
      EXPECT_EQ(lt[k], si < sj ? 1 : 0);
      EXPECT_EQ(ba.data[k], lt[k]);
      EXPECT_EQ(wr[k], ac.inner.data[k] + as.inner.data[k] >= 16 ? 1 : 0);
    }
}

TEST(Functionalities, ReciprocalRoundsToNearest) {
  EXPECT_EQ(ideal::recip(from_signed(3 << 4, 16), 16, 4, 8), static_cast<u64>(std::lround(256.0 / 3)));
  EXPECT_EQ(ideal::recip(0, 16, 4, 4), 0u);
  EXPECT_EQ(ideal::recip(from_signed(-5, 16), 16, 4, 4), 0u);
}

// The dealer's re-sharing must be uniform: the client's share of a fixed
// product is close to uniform over Z_16.
TEST(Dealer, OutputSharesLookUniform) {
  const RingParams p{4, 0};
  const std::size_t n = 16000;
  RingTensor ones = RingTensor::filled(p, 1, n, 3);
  std::mt19937_64 rng(3);
  auto [ac, as] = share(ones, rng);
  ShareTensor out;
  run_two_party(
      RunOptions{}, [&](PartyContext& c) { out = c.f_mul(ac, ac); },
      [&](PartyContext& s) { (void)s.f_mul(as, as); });
  std::vector<double> hist(16, 0);
  for (auto v : out.inner.data) hist[v] += 1;
  double chi2 = 0;
  const double e = static_cast<double>(n) / 16;
  for (double h : hist) chi2 += (h - e) * (h - e) / e;
  EXPECT_LT(chi2, 37.7);  // 15 degrees of freedom, p = 0.001
}

TEST(Dealer, MismatchedCallsAreProtocolErrors) {
  const RingParams p{8, 0};
  RingTensor x(p, 1, 2);
  EXPECT_THROW(run_two_party(
                   RunOptions{}, [&](PartyContext& c) { c.f_mul(ShareTensor{c.party(), x}, ShareTensor{c.party(), x}); },
                   [&](PartyContext& s) { s.f_less(ShareTensor{s.party(), x}, ShareTensor{s.party(), x}); }),
               ProtocolError);
}

TEST(Transcript, RoundsFollowCausalDepth) {
  // ping-pong-ping: 3 rounds. Two concurrent sends: 1 round.
  auto t1 = run_two_party(
      RunOptions{},
      [](PartyContext& c) {
        c.send(1, bytes_of({1}));
        c.recv(2);
        c.send(3, bytes_of({3}));
      },
      [](PartyContext& s) {
        s.recv(1);
        s.send(2, bytes_of({2}));
        s.recv(3);
      });
  EXPECT_EQ(t1.transcript.rounds(), 3);
  EXPECT_EQ(t1.transcript.messages.size(), 3u);
  EXPECT_EQ(t1.transcript.bytes(), 3u * 7u);

  auto t2 = run_two_party(
      RunOptions{},
      [](PartyContext& c) {
        c.send(1, bytes_of({1}));
        c.recv(2);
      },
      [](PartyContext& s) {
        s.send(2, bytes_of({2}));
        s.recv(1);
      });
  EXPECT_EQ(t2.transcript.rounds(), 1);

  // A message after a two-round functionality sits at depth 3.
  RingTensor x(RingParams{8, 0}, 1, 1);
  auto t3 = run_two_party(
      RunOptions{},
      [&](PartyContext& c) {
        c.f_less(ShareTensor{c.party(), x}, ShareTensor{c.party(), x});
        c.send(1, bytes_of({1}));
      },
      [&](PartyContext& s) {
        s.f_less(ShareTensor{s.party(), x}, ShareTensor{s.party(), x});
        s.recv(1);
      });
  EXPECT_EQ(t3.transcript.rounds(), 3);
  EXPECT_EQ(t3.transcript.calls("F_less"), 1u);
}

TEST(Transcript, PhasesAreCountedSeparately) {
  auto r = run_two_party(
      RunOptions{},
      [](PartyContext& c) {
        c.set_phase("setup");
        c.recv(1);
        c.set_phase("online");
        c.send(2, bytes_of({2}));
      },
      [](PartyContext& s) {
        s.set_phase("setup");
        s.send(1, bytes_of({1, 1}));
        s.set_phase("online");
        s.recv(2);
      });
  EXPECT_EQ(r.transcript.rounds("setup"), 1);
  EXPECT_EQ(r.transcript.rounds("online"), 1);
  EXPECT_EQ(r.transcript.bytes("setup"), 8u);
}

TEST(Transcript, SameSeedSameDigestsAcrossTransports) {
  auto script = [](PartyContext& ctx) {
    std::vector<std::uint8_t> v(64);
    for (auto& b : v) b = static_cast<std::uint8_t>(ctx.rng()());
    if (ctx.is_client()) {
      ctx.send(1, v);
      ctx.recv(2);
    } else {
      ctx.recv(1);
      ctx.send(2, v);
    }
  };
  RunOptions a, b;
  a.seed = b.seed = 5;
  parse_transport("tcp", b);
  EXPECT_EQ(run_two_party(a, script, script).transcript.messages, run_two_party(b, script, script).transcript.messages);
}

TEST(Runtime, ParseTransport) {
  RunOptions o;
  parse_transport("tcp:5555", o);
  EXPECT_EQ(o.transport, Transport::tcp);
  EXPECT_EQ(o.port, 5555);
  EXPECT_THROW(parse_transport("udp", o), std::invalid_argument);
}

TEST(Shares, ReconstructRequiresBothParties) {
  std::mt19937_64 rng(4);
  const RingTensor x = random_tensor(RingParams{32, 0}, 2, 2, rng);
  auto [c, s] = share(x, rng);
  EXPECT_EQ(reconstruct(c, s), x);
  EXPECT_THROW(reconstruct(c, c), std::invalid_argument);
}
