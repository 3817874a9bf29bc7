#pragma once

// Trusted-dealer stand-ins for the sub-protocols the nonlinear layers call as
// black boxes. The dealer reconstructs, computes in the clear and re-shares
// with fresh randomness. Functionally identical to the real protocols; not
// secure.

#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <utility>
#include <vector>

#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"
#include "privinfer/mpc/transcript.hpp"

namespace privinfer {

// Plain (dealer-side) semantics of each functionality on reconstructed values.
namespace ideal {

// Signed product mod 2^ell, then an arithmetic right shift by trunc bits.
inline u64 mul(u64 a, u64 b, int ell, int trunc) {
  const u64 p = (a * b) & ring_mask(ell);
  if (trunc == 0) return p;
  return from_signed(to_signed(p, ell) >> trunc, ell);
}

// 1{a < b} under two's complement: flip the top bit, compare unsigned.
inline std::uint8_t less(u64 a, u64 b, int ell) {
  const u64 top = u64{1} << (ell - 1);
  return ((a ^ top) & ring_mask(ell)) < ((b ^ top) & ring_mask(ell)) ? 1 : 0;
}

inline std::uint8_t wrap(u64 xc, u64 xs, int ell) {
  const u64 m = ring_mask(ell);
  xc &= m;
  xs &= m;
  if (ell == 64) return xc + xs < xc ? 1 : 0;
  return ((xc + xs) >> ell) & 1;
}

// 1 / S for S at scale s_in, rounded to nearest at scale s_out; nonpositive S
// maps to 0.
inline u64 recip(u64 s_val, int ell, int s_in, int s_out) {
  const i64 v = to_signed(s_val, ell);
  if (v <= 0) return 0;
  const unsigned __int128 num = (static_cast<unsigned __int128>(1) << (s_in + s_out));
  const auto den = static_cast<unsigned __int128>(v);
  const auto q = static_cast<u64>((num + den / 2) / den);
  return q & ring_mask(ell);
}

}  // namespace ideal

struct DealerRequest {
  FuncKind kind = FuncKind::mul;
  int ell = 0;      // input ring (F_B2A: unused for input bits)
  int aux = 0;      // F_mul: truncation bits; F_B2A: target width; F_recip: input scale
  int aux2 = 0;     // F_recip: output scale
  std::vector<u64> a;  // arithmetic share or bits
  std::vector<u64> b;  // second operand share (F_mul, F_less)
};

// Rendezvous point for both party threads. Call i of the client pairs with
// call i of the server; whichever arrives second computes.
class Dealer {
 public:
  explicit Dealer(std::uint64_t seed) : rng_(seed) {}

  std::vector<u64> call(Party party, DealerRequest req) {
    std::unique_lock lk(mu_);
    if (aborted_) throw TransportError("dealer aborted");
    const int p = party_index(party);
    const std::uint64_t id = next_[p]++;
    Slot& slot = slots_[id];
    slot.req[p] = std::move(req);
    slot.present[p] = true;
    if (slot.present[1 - p]) {
      compute(slot);
      cv_.notify_all();
    } else {
      cv_.wait(lk, [&] { return aborted_ || slot.done; });
      if (!slot.done) throw TransportError("dealer aborted");
    }
    if (slot.error) throw ProtocolError(slot.error_message);
    std::vector<u64> out = std::move(slot.out[p]);
    if (++slot.taken == 2) slots_.erase(id);
    return out;
  }

  void abort() {
    std::lock_guard lk(mu_);
    aborted_ = true;
    cv_.notify_all();
  }

 private:
  struct Slot {
    DealerRequest req[2];
    bool present[2] = {false, false};
    bool done = false;
    bool error = false;
    std::string error_message;
    std::vector<u64> out[2];
    int taken = 0;
  };

  void reshare_arith(const std::vector<u64>& v, int ell, Slot& slot) {
    const u64 m = ring_mask(ell);
    slot.out[0].resize(v.size());
    slot.out[1].resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const u64 r = rng_() & m;
      slot.out[0][i] = r;
      slot.out[1][i] = (v[i] - r) & m;
    }
  }

  void reshare_bool(const std::vector<u64>& v, Slot& slot) {
    slot.out[0].resize(v.size());
    slot.out[1].resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const u64 r = rng_() & 1;
      slot.out[0][i] = r;
      slot.out[1][i] = (v[i] & 1) ^ r;
    }
  }

  void compute(Slot& slot) {
    const DealerRequest& c = slot.req[0];
    const DealerRequest& s = slot.req[1];
    slot.done = true;
    if (c.kind != s.kind || c.ell != s.ell || c.aux != s.aux || c.aux2 != s.aux2 || c.a.size() != s.a.size() ||
        c.b.size() != s.b.size()) {
      slot.error = true;
      slot.error_message = std::string("dealer: mismatched ") + func_name(c.kind) + " / " + func_name(s.kind) + " call";
      return;
    }
    const std::size_t n = c.a.size();
    const int ell = c.ell;
    const u64 m = ring_mask(ell);
    std::vector<u64> v(n);
    switch (c.kind) {
      case FuncKind::mul:
        for (std::size_t i = 0; i < n; ++i) v[i] = ideal::mul((c.a[i] + s.a[i]) & m, (c.b[i] + s.b[i]) & m, ell, c.aux);
        reshare_arith(v, ell, slot);
        break;
      case FuncKind::less:
        for (std::size_t i = 0; i < n; ++i) v[i] = ideal::less((c.a[i] + s.a[i]) & m, (c.b[i] + s.b[i]) & m, ell);
        reshare_bool(v, slot);
        break;
      case FuncKind::b2a:
        for (std::size_t i = 0; i < n; ++i) v[i] = (c.a[i] ^ s.a[i]) & 1;
        reshare_arith(v, c.aux, slot);
        break;
      case FuncKind::wrap:
        for (std::size_t i = 0; i < n; ++i) v[i] = ideal::wrap(c.a[i], s.a[i], ell);
        reshare_bool(v, slot);
        break;
      case FuncKind::recip:
        for (std::size_t i = 0; i < n; ++i) v[i] = ideal::recip((c.a[i] + s.a[i]) & m, ell, c.aux, c.aux2);
        reshare_arith(v, ell, slot);
        break;
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::mt19937_64 rng_;
  std::map<std::uint64_t, Slot> slots_;
  std::uint64_t next_[2] = {0, 0};
  bool aborted_ = false;
};

}  // namespace privinfer
