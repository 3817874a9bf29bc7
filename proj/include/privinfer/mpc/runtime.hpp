#pragma once

// Two-party execution: each party runs its script on its own thread against a
// framed channel and the shared dealer. Logs are merged into one Transcript
// after both threads join.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"
#include "privinfer/mpc/channel.hpp"
#include "privinfer/mpc/dealer.hpp"
#include "privinfer/mpc/share.hpp"
#include "privinfer/mpc/transcript.hpp"

namespace privinfer {

enum class Transport { inproc, tcp };

struct RunOptions {
  Transport transport = Transport::inproc;
  std::uint16_t port = 0;  // tcp only; 0 = ephemeral
  std::uint64_t seed = 1;
  CostTable costs;
};

// "inproc", "tcp" or "tcp:<port>".
inline void parse_transport(const std::string& s, RunOptions& opts) {
  if (s == "inproc") {
    opts.transport = Transport::inproc;
  } else if (s == "tcp") {
    opts.transport = Transport::tcp;
  } else if (s.rfind("tcp:", 0) == 0) {
    opts.transport = Transport::tcp;
    const long port = std::strtol(s.c_str() + 4, nullptr, 10);
    PRIVINFER_ENFORCE(port >= 0 && port <= 65535, "tcp port out of range");
    opts.port = static_cast<std::uint16_t>(port);
  } else {
    throw std::invalid_argument("unknown transport '" + s + "' (expected inproc, tcp or tcp:PORT)");
  }
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

// Little-endian packing of ring elements, ceil(ell / 8) bytes each.
inline std::vector<std::uint8_t> pack_ring(std::span<const u64> v, int ell) {
  const std::size_t w = static_cast<std::size_t>((ell + 7) / 8);
  std::vector<std::uint8_t> out;
  out.reserve(v.size() * w);
  for (u64 x : v)
    for (std::size_t i = 0; i < w; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  return out;
}

inline std::vector<u64> unpack_ring(std::span<const std::uint8_t> bytes, int ell, std::size_t count) {
  const std::size_t w = static_cast<std::size_t>((ell + 7) / 8);
  if (bytes.size() != w * count) throw ProtocolError("ring payload has the wrong size");
  std::vector<u64> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    u64 x = 0;
    for (std::size_t i = 0; i < w; ++i) x |= u64{bytes[k * w + i]} << (8 * i);
    out[k] = x & ring_mask(ell);
  }
  return out;
}

class PartyContext {
 public:
  PartyContext(Party party, std::shared_ptr<Channel> channel, Dealer& dealer, std::uint64_t seed)
      : party_(party), channel_(std::move(channel)), dealer_(dealer), rng_(seed) {
    log_.party = party;
  }

  Party party() const { return party_; }
  bool is_server() const { return party_ == Party::server; }
  bool is_client() const { return party_ == Party::client; }
  std::mt19937_64& rng() { return rng_; }
  PartyLog& log() { return log_; }
  const std::string& phase() const { return log_.phase; }
  void set_phase(std::string p) { log_.phase = std::move(p); }

  void send(std::uint16_t tag, std::span<const std::uint8_t> payload, std::uint64_t ciphertexts = 0,
            CtRole role = CtRole::none) {
    const auto frame = encode_frame(tag, payload);
    Event e;
    e.kind = Event::Kind::send;
    e.phase = log_.phase;
    e.tag = tag;
    e.bytes = frame.size();
    e.digest = fnv1a(frame.data(), frame.size());
    e.ciphertexts = ciphertexts;
    e.role = role;
    log_.events.push_back(std::move(e));
    channel_->write(frame);
  }

  std::vector<std::uint8_t> recv(std::uint16_t expected_tag) {
    Frame f = channel_->recv_frame();
    if (f.tag != expected_tag) {
      throw ProtocolError("unexpected frame tag " + std::to_string(f.tag) + ", expected " +
                          std::to_string(expected_tag));
    }
    Event e;
    e.kind = Event::Kind::recv;
    e.phase = log_.phase;
    e.tag = f.tag;
    e.bytes = kFrameHeader + f.payload.size();
    log_.events.push_back(std::move(e));
    return std::move(f.payload);
  }

  // Charges an input-independent transfer (e.g. a downloaded weight store)
  // without moving the bytes through the channel.
  void charge_offline(std::uint64_t bytes, std::uint64_t ciphertexts, CtRole role = CtRole::setup) {
    Event e;
    e.kind = Event::Kind::offline;
    e.phase = log_.phase;
    e.bytes = bytes;
    e.ciphertexts = ciphertexts;
    e.role = role;
    log_.events.push_back(std::move(e));
  }

  void send_ring(std::uint16_t tag, const RingTensor& t) { send(tag, pack_ring(t.data, t.params.ell)); }
  RingTensor recv_ring(std::uint16_t tag, RingParams p, std::size_t rows, std::size_t cols) {
    RingTensor t(p, rows, cols);
    t.data = unpack_ring(recv(tag), p.ell, rows * cols);
    return t;
  }

  // Share of a public constant: the server holds it, the client holds 0.
  ShareTensor public_share(RingParams p, std::size_t rows, std::size_t cols, u64 value) const {
    return ShareTensor{party_, RingTensor::filled(p, rows, cols, is_server() ? value : 0)};
  }

  // ---- functionalities (local share in, local share out) ----

  ShareTensor f_mul(const ShareTensor& a, const ShareTensor& b, int trunc = 0, const char* label = "F_mul") {
    PRIVINFER_ENFORCE(a.inner.same_shape(b.inner), "F_mul shape mismatch");
    PRIVINFER_ENFORCE(a.params().ell == b.params().ell, "F_mul ring mismatch");
    const int ell = a.params().ell;
    auto out = call(FuncKind::mul, label, ell, trunc, a.inner.data, b.inner.data);
    RingTensor r(RingParams{ell, a.params().scale + b.params().scale - trunc}, a.rows(), a.cols());
    r.data = std::move(out);
    return ShareTensor{party_, std::move(r)};
  }

  BoolShare f_less(const ShareTensor& a, const ShareTensor& b, const char* label = "F_less") {
    PRIVINFER_ENFORCE(a.inner.same_shape(b.inner), "F_less shape mismatch");
    PRIVINFER_ENFORCE(a.params().ell == b.params().ell, "F_less ring mismatch");
    auto out = call(FuncKind::less, label, a.params().ell, 0, a.inner.data, b.inner.data);
    return to_bool(out, a.rows(), a.cols());
  }

  ShareTensor f_b2a(const BoolShare& b, int ell_target, const char* label = "F_B2A") {
    PRIVINFER_ENFORCE(ell_target >= 1 && ell_target <= 64, "F_B2A target width out of range");
    std::vector<u64> bits(b.bits.begin(), b.bits.end());
    auto out = call(FuncKind::b2a, label, ell_target, ell_target, bits, {});
    RingTensor r(RingParams{ell_target, 0}, b.rows, b.cols);
    r.data = std::move(out);
    return ShareTensor{party_, std::move(r)};
  }

  BoolShare f_wrap(const ShareTensor& x, const char* label = "F_wrap") {
    auto out = call(FuncKind::wrap, label, x.params().ell, 0, x.inner.data, {});
    return to_bool(out, x.rows(), x.cols());
  }

  // Reciprocal of x, returned at scale out_scale (x's own scale when negative).
  ShareTensor f_recip(const ShareTensor& x, int out_scale = -1, const char* label = "F_recip") {
    const RingParams p = x.params();
    if (out_scale < 0) out_scale = p.scale;
    PRIVINFER_ENFORCE(p.scale + out_scale < 127, "reciprocal scale too large");
    auto out = call(FuncKind::recip, label, p.ell, p.scale, x.inner.data, {}, out_scale);
    RingTensor r(RingParams{p.ell, out_scale}, x.rows(), x.cols());
    r.data = std::move(out);
    return ShareTensor{party_, std::move(r)};
  }

  // sel * v for shared bits: one F_B2A and one F_mul over the whole batch.
  // Returns sum_i sel_i * v_i.
  ShareTensor mux_sum(const std::vector<std::pair<const BoolShare*, const ShareTensor*>>& terms) {
    PRIVINFER_ENFORCE(!terms.empty(), "mux needs at least one term");
    const ShareTensor& first = *terms.front().second;
    const RingParams p = first.params();
    const std::size_t n = first.inner.size();
    BoolShare sel(party_, 1, n * terms.size());
    ShareTensor vals{party_, RingTensor(RingParams{p.ell, 0}, 1, n * terms.size())};
    for (std::size_t t = 0; t < terms.size(); ++t) {
      PRIVINFER_ENFORCE(terms[t].first->size() == n && terms[t].second->inner.size() == n, "mux shape mismatch");
      PRIVINFER_ENFORCE(terms[t].second->params().ell == p.ell, "mux ring mismatch");
      std::copy(terms[t].first->bits.begin(), terms[t].first->bits.end(), sel.bits.begin() + t * n);
      std::copy(terms[t].second->inner.data.begin(), terms[t].second->inner.data.end(),
                vals.inner.data.begin() + t * n);
    }
    const ShareTensor a = f_b2a(sel, p.ell, "mux.F_B2A");
    const ShareTensor prod = f_mul(a, vals, 0, "mux.F_mul");
    RingTensor out(p, first.rows(), first.cols());
    for (std::size_t t = 0; t < terms.size(); ++t)
      for (std::size_t i = 0; i < n; ++i) out.data[i] += prod.inner.data[t * n + i];
    for (auto& x : out.data) x &= p.mask();
    return ShareTensor{party_, std::move(out)};
  }

  ShareTensor mux(const BoolShare& sel, const ShareTensor& v) { return mux_sum({{&sel, &v}}); }

  // Local XOR with a public bit (only the server applies it).
  BoolShare xor_public(const BoolShare& b, std::uint8_t bit) const {
    BoolShare out = b;
    if (is_server() && bit)
      for (auto& x : out.bits) x ^= 1;
    return out;
  }

 private:
  BoolShare to_bool(const std::vector<u64>& v, std::size_t rows, std::size_t cols) const {
    BoolShare b(party_, rows, cols);
    for (std::size_t i = 0; i < v.size(); ++i) b.bits[i] = static_cast<std::uint8_t>(v[i] & 1);
    return b;
  }

  std::vector<u64> call(FuncKind kind, const char* label, int ell, int aux, std::vector<u64> a,
                        std::vector<u64> b, int aux2 = 0) {
    Event e;
    e.kind = Event::Kind::func;
    e.phase = log_.phase;
    e.func = kind;
    e.label = label;
    e.elements = a.size();
    e.ell = ell;
    log_.events.push_back(std::move(e));
    return dealer_.call(party_, DealerRequest{kind, ell, aux, aux2, std::move(a), std::move(b)});
  }

  Party party_;
  std::shared_ptr<Channel> channel_;
  Dealer& dealer_;
  std::mt19937_64 rng_;
  PartyLog log_;
};

struct RunResult {
  Transcript transcript;
  PartyLog client_log;
  PartyLog server_log;
  double wall_ms = 0;
};

inline std::pair<std::shared_ptr<Channel>, std::shared_ptr<Channel>> make_channels(const RunOptions& opts) {
  return opts.transport == Transport::tcp ? make_tcp_pair(opts.port) : make_inproc_pair();
}

// Runs both scripts concurrently. If either throws, the channel and dealer are
// aborted so the peer unblocks, and the root-cause exception is rethrown.
inline RunResult run_two_party(const RunOptions& opts, const std::function<void(PartyContext&)>& client_fn,
                               const std::function<void(PartyContext&)>& server_fn) {
  opts.costs.validate();
  auto [client_ch, server_ch] = make_channels(opts);
  Dealer dealer(derive_seed(opts.seed, 2));
  PartyContext client(Party::client, client_ch, dealer, derive_seed(opts.seed, 0));
  PartyContext server(Party::server, server_ch, dealer, derive_seed(opts.seed, 1));

  std::exception_ptr errors[2];
  auto body = [&](PartyContext& ctx, const std::function<void(PartyContext&)>& fn, int slot) {
    try {
      fn(ctx);
    } catch (...) {
      errors[slot] = std::current_exception();
      client_ch->abort();
      server_ch->abort();
      dealer.abort();
    }
  };
  const auto start = std::chrono::steady_clock::now();
  std::thread ts(body, std::ref(server), std::cref(server_fn), 1);
  body(client, client_fn, 0);
  ts.join();
  const auto stop = std::chrono::steady_clock::now();

  auto is_transport = [](const std::exception_ptr& e) {
    try {
      std::rethrow_exception(e);
    } catch (const TransportError&) {
      return true;
    } catch (...) {
      return false;
    }
  };
  for (auto& e : errors)
    if (e && !is_transport(e)) std::rethrow_exception(e);
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  RunResult r;
  r.transcript = merge_logs(client.log(), server.log(), opts.costs);
  r.client_log = client.log();
  r.server_log = server.log();
  r.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  return r;
}

}  // namespace privinfer
