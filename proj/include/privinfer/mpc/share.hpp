#pragma once

// Additive (arithmetic) and XOR (Boolean) two-party sharings.

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"

namespace privinfer {

enum class Party : int { client = 0, server = 1 };

inline constexpr int party_index(Party p) { return static_cast<int>(p); }
inline constexpr Party other(Party p) { return p == Party::client ? Party::server : Party::client; }
inline const char* party_name(Party p) { return p == Party::client ? "client" : "server"; }

struct ShareTensor {
  Party party = Party::client;
  RingTensor inner;

  const RingParams& params() const { return inner.params; }
  std::size_t rows() const { return inner.rows; }
  std::size_t cols() const { return inner.cols; }
};

struct BoolShare {
  Party party = Party::client;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;  // one bit per byte, row-major

  BoolShare() = default;
  BoolShare(Party p, std::size_t r, std::size_t c) : party(p), rows(r), cols(c), bits(r * c, 0) {}
  std::size_t size() const { return bits.size(); }
};

inline RingTensor random_tensor(RingParams p, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  RingTensor t(p, rows, cols);
  for (auto& x : t.data) x = rng() & p.mask();
  return t;
}

inline std::pair<ShareTensor, ShareTensor> share(const RingTensor& x, std::mt19937_64& rng) {
  ShareTensor c{Party::client, random_tensor(x.params, x.rows, x.cols, rng)};
  ShareTensor s{Party::server, sub(x, c.inner)};
  return {std::move(c), std::move(s)};
}

inline RingTensor reconstruct(const ShareTensor& a, const ShareTensor& b) {
  PRIVINFER_ENFORCE(a.party != b.party, "reconstruct needs one share from each party");
  RingTensor out = add(a.inner, b.inner);
  out.params.scale = a.inner.params.scale;
  return out;
}

inline std::pair<BoolShare, BoolShare> share_bits(const std::vector<std::uint8_t>& bits, std::size_t rows,
                                                  std::size_t cols, std::mt19937_64& rng) {
  PRIVINFER_ENFORCE(bits.size() == rows * cols, "bit count does not match shape");
  BoolShare c(Party::client, rows, cols), s(Party::server, rows, cols);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    c.bits[i] = static_cast<std::uint8_t>(rng() & 1);
    s.bits[i] = static_cast<std::uint8_t>((bits[i] & 1) ^ c.bits[i]);
  }
  return {std::move(c), std::move(s)};
}

inline std::vector<std::uint8_t> reconstruct_bits(const BoolShare& a, const BoolShare& b) {
  PRIVINFER_ENFORCE(a.bits.size() == b.bits.size(), "bit share sizes differ");
  std::vector<std::uint8_t> out(a.bits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (a.bits[i] ^ b.bits[i]) & 1;
  return out;
}

}  // namespace privinfer
