#pragma once

// Secure matrix multiplication Z = X W for X (k x m) additively shared between
// client and server and W (m x n) held by the server.
//
// SIP: the client owns the HE key, sends encrypted window-encoded input blocks,
// the server multiplies by window-encoded weights and returns masked results.
// COP: the server owns the key and ships m encrypted weight rows once (setup).
// Online, the client forms c_alpha = sum_beta x_{alpha,beta} * Enc(w_beta),
// packs rows, masks and sends. One message flight, no input ciphertexts.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "privinfer/encodings.hpp"
#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"
#include "privinfer/mpc/runtime.hpp"
#include "privinfer/mpc/share.hpp"
#include "privinfer/poly_ring.hpp"
#include "privinfer/toy_he.hpp"

namespace privinfer {

inline constexpr std::uint16_t kTagSipInput = 0x10;
inline constexpr std::uint16_t kTagSipOutput = 0x11;
inline constexpr std::uint16_t kTagCopPacked = 0x20;

struct LinearLayerSpec {
  std::size_t k = 1, m = 1, n = 1;
  RingParams ring{64, 18};
  std::size_t poly_n = 128;
  int q_bits = 0;  // 0 selects default_q_bits(ell)

  int effective_q_bits() const { return q_bits ? q_bits : default_q_bits(ring.ell); }
  PolyParams he_params() const { return PolyParams{poly_n, effective_q_bits(), ring.ell}; }

  void validate() const {
    PRIVINFER_ENFORCE(k > 0 && m > 0 && n > 0, "matrix dimensions must be positive");
    ring.validate();
    PRIVINFER_ENFORCE(poly_n >= 1 && std::has_single_bit(poly_n), "N must be a power of two");
  }
  friend bool operator==(const LinearLayerSpec&, const LinearLayerSpec&) = default;
};

// Calls f.template operator()<U>() with the coefficient word wide enough for
// the layer's q.
template <class F>
decltype(auto) dispatch_word(int q_bits, F&& f) {
  if (q_bits <= 128) return std::forward<F>(f).template operator()<u128>();
  PRIVINFER_ENFORCE(q_bits <= 256, "q_bits above 256 is not supported");
  return std::forward<F>(f).template operator()<u256>();
}

// ---------------------------------------------------------------------------
// Weight store

inline constexpr char kStoreMagic[8] = {'N', 'I', 'M', 'B', 'W', 'S', 'T', 'R'};
inline constexpr std::uint16_t kStoreVersion = 1;
inline constexpr std::size_t kStoreHeaderBytes = 8 + 2 + 4 * 4 + 2 * 3;

namespace detail {

inline std::vector<std::uint8_t> store_header(const LinearLayerSpec& spec) {
  std::vector<std::uint8_t> h(kStoreMagic, kStoreMagic + 8);
  put_le(h, kStoreVersion, 2);
  put_le(h, spec.k, 4);
  put_le(h, spec.m, 4);
  put_le(h, spec.n, 4);
  put_le(h, spec.poly_n, 4);
  put_le(h, static_cast<std::uint64_t>(spec.ring.ell), 2);
  put_le(h, static_cast<std::uint64_t>(spec.ring.scale), 2);
  put_le(h, static_cast<std::uint64_t>(spec.effective_q_bits()), 2);
  return h;
}

inline LinearLayerSpec parse_store_header(const std::uint8_t* h) {
  if (std::memcmp(h, kStoreMagic, 8) != 0) throw ProtocolError("weight store: bad magic");
  if (get_le(h + 8, 2) != kStoreVersion) throw ProtocolError("weight store: unsupported version");
  LinearLayerSpec s;
  s.k = get_le(h + 10, 4);
  s.m = get_le(h + 14, 4);
  s.n = get_le(h + 18, 4);
  s.poly_n = get_le(h + 22, 4);
  s.ring.ell = static_cast<int>(get_le(h + 26, 2));
  s.ring.scale = static_cast<int>(get_le(h + 28, 2));
  s.q_bits = static_cast<int>(get_le(h + 30, 2));
  return s;
}

}  // namespace detail

// The m encrypted weight rows of one layer. Either resident in memory or
// backed by a file that is streamed row by row.
template <CoeffWord U>
class WeightStore {
 public:
  WeightStore() = default;
  WeightStore(LinearLayerSpec spec, std::vector<Ciphertext<U>> rows)
      : spec_(std::move(spec)), rows_(std::move(rows)), loaded_(true) {
    PRIVINFER_ENFORCE(rows_.size() == spec_.m, "weight store needs exactly m ciphertexts");
  }

  const LinearLayerSpec& spec() const { return spec_; }
  std::size_t size() const { return spec_.m; }
  bool loaded() const { return loaded_; }
  const std::string& path() const { return path_; }
  std::uint64_t serialized_bytes() const {
    return kStoreHeaderBytes + spec_.m * serialized_size(spec_.he_params());
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write weight store " + path);
    const auto h = detail::store_header(spec_);
    out.write(reinterpret_cast<const char*>(h.data()), static_cast<std::streamsize>(h.size()));
    for_each([&](std::size_t, const Ciphertext<U>& ct) {
      const auto bytes = serialize(ct);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    });
    if (!out) throw std::runtime_error("short write to weight store " + path);
  }

  // File-backed store; rows are read on demand.
  static WeightStore open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open weight store " + path);
    std::uint8_t h[kStoreHeaderBytes];
    in.read(reinterpret_cast<char*>(h), kStoreHeaderBytes);
    if (!in) throw ProtocolError("weight store: truncated header");
    WeightStore s;
    s.spec_ = detail::parse_store_header(h);
    s.path_ = path;
    const auto expect = s.serialized_bytes();
    if (std::filesystem::file_size(path) != expect) throw ProtocolError("weight store: file size mismatch");
    return s;
  }

  static WeightStore load(const std::string& path) {
    WeightStore s = open(path);
    s.rows_.reserve(s.spec_.m);
    s.for_each([&](std::size_t, const Ciphertext<U>& ct) { s.rows_.push_back(ct); });
    s.loaded_ = true;
    return s;
  }

  // Visits rows in order beta = 0 .. m-1.
  void for_each(const std::function<void(std::size_t, const Ciphertext<U>&)>& fn) const {
    if (loaded_) {
      for (std::size_t b = 0; b < rows_.size(); ++b) fn(b, rows_[b]);
      return;
    }
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open weight store " + path_);
    in.seekg(static_cast<std::streamoff>(kStoreHeaderBytes));
    std::vector<std::uint8_t> buf(serialized_size(spec_.he_params()));
    for (std::size_t b = 0; b < spec_.m; ++b) {
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
      if (!in) throw ProtocolError("weight store: truncated ciphertext");
      fn(b, deserialize<U>(buf));
    }
  }

  Ciphertext<U> at(std::size_t beta) const {
    PRIVINFER_ENFORCE(beta < spec_.m, "row index out of range");
    if (loaded_) return rows_[beta];
    std::ifstream in(path_, std::ios::binary);
    const std::size_t sz = serialized_size(spec_.he_params());
    in.seekg(static_cast<std::streamoff>(kStoreHeaderBytes + beta * sz));
    std::vector<std::uint8_t> buf(sz);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(sz));
    if (!in) throw ProtocolError("weight store: truncated ciphertext");
    return deserialize<U>(buf);
  }

 private:
  LinearLayerSpec spec_;
  std::vector<Ciphertext<U>> rows_;
  std::string path_;
  bool loaded_ = false;
};

// Background load, for overlapping the next layer's store with current work.
template <CoeffWord U>
std::future<WeightStore<U>> load_store_async(std::string path) {
  return std::async(std::launch::async, [p = std::move(path)] { return WeightStore<U>::load(p); });
}

namespace detail {

template <CoeffWord U>
Ciphertext<U> encrypt_weight_row(const RingTensor& w, std::size_t beta, const SecretKey<U>& sk,
                                 const LinearLayerSpec& spec, std::mt19937_64& rng, OpCounters* counters) {
  std::span<const u64> row(&w.data[beta * w.cols], w.cols);
  return encrypt(rowwise_encode(row, spec.ring.ell, spec.poly_n), sk, rng, counters);
}

inline void check_weights(const RingTensor& w, const LinearLayerSpec& spec) {
  spec.validate();
  PRIVINFER_ENFORCE(w.rows == spec.m && w.cols == spec.n, "W must be m x n");
  PRIVINFER_ENFORCE(w.params.ell == spec.ring.ell, "W ring width differs from the spec");
  PRIVINFER_ENFORCE(spec.n <= spec.poly_n, "COP needs n <= N");
}

}  // namespace detail

// Server-side setup: one ciphertext per weight row.
template <CoeffWord U>
WeightStore<U> cop_setup(const RingTensor& w, const SecretKey<U>& sk, const LinearLayerSpec& spec,
                         std::mt19937_64& rng, OpCounters* counters = nullptr) {
  detail::check_weights(w, spec);
  PRIVINFER_ENFORCE(sk.s.params == spec.he_params(), "key parameters differ from the spec");
  std::vector<Ciphertext<U>> rows;
  rows.reserve(spec.m);
  for (std::size_t b = 0; b < spec.m; ++b) rows.push_back(detail::encrypt_weight_row(w, b, sk, spec, rng, counters));
  return WeightStore<U>(spec, std::move(rows));
}

// Same, streamed straight to a file so large layers never sit in memory.
template <CoeffWord U>
WeightStore<U> cop_setup_to_file(const RingTensor& w, const SecretKey<U>& sk, const LinearLayerSpec& spec,
                                 std::mt19937_64& rng, const std::string& path, OpCounters* counters = nullptr) {
  detail::check_weights(w, spec);
  PRIVINFER_ENFORCE(sk.s.params == spec.he_params(), "key parameters differ from the spec");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write weight store " + path);
    const auto h = detail::store_header(spec);
    out.write(reinterpret_cast<const char*>(h.data()), static_cast<std::streamsize>(h.size()));
    std::vector<std::uint8_t> buf;
    for (std::size_t b = 0; b < spec.m; ++b) {
      buf.clear();
      serialize_into(detail::encrypt_weight_row(w, b, sk, spec, rng, counters), buf);
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw std::runtime_error("short write to weight store " + path);
  }
  return WeightStore<U>::open(path);
}

// ---------------------------------------------------------------------------
// COP online phase

// Client: returns its output share (the mask R).
template <CoeffWord U>
ShareTensor cop_client(PartyContext& ctx, const WeightStore<U>& store, const ShareTensor& xc,
                       OpCounters* counters = nullptr) {
  const LinearLayerSpec& spec = store.spec();
  PRIVINFER_ENFORCE(xc.rows() == spec.k && xc.cols() == spec.m, "X must be k x m");
  PRIVINFER_ENFORCE(xc.params().ell == spec.ring.ell, "X ring width differs from the spec");
  const PolyParams hp = spec.he_params();
  HeEvaluator<U> eval(hp);
  const PackingPlan plan = make_packing_plan(spec.k, spec.n, spec.poly_n);

  std::vector<Ciphertext<U>> acc(spec.k, eval.zero());
  store.for_each([&](std::size_t beta, const Ciphertext<U>& w_ct) {
    for (std::size_t alpha = 0; alpha < spec.k; ++alpha) {
      eval.scalar_mul_accumulate(acc[alpha], xc.inner.at(alpha, beta), w_ct);
    }
  });
  const auto packed = pack_outputs(eval, acc, plan);
  acc.clear();

  // Every coefficient is masked, including the unused tail slots.
  std::vector<PlainPoly> masks;
  masks.reserve(plan.ct_count);
  for (std::size_t t = 0; t < plan.ct_count; ++t) {
    PlainPoly r(plain_params(spec.poly_n, spec.ring.ell));
    for (auto& c : r.coeffs) c = ctx.rng()() & spec.ring.mask();
    ctx.send(kTagCopPacked, serialize(eval.sub_plain(packed[t], r)), 1, CtRole::output);
    masks.push_back(std::move(r));
  }
  if (counters) *counters = eval.counters();
  RingParams out_params{spec.ring.ell, xc.params().scale + spec.ring.scale};
  return ShareTensor{ctx.party(), unpack_outputs(masks, plan, spec.k, spec.n, out_params)};
}

template <CoeffWord U>
ShareTensor cop_server(PartyContext& ctx, const SecretKey<U>& sk, const ShareTensor& xs, const RingTensor& w,
                       const LinearLayerSpec& spec, OpCounters* counters = nullptr) {
  detail::check_weights(w, spec);
  PRIVINFER_ENFORCE(xs.rows() == spec.k && xs.cols() == spec.m, "X must be k x m");
  const PackingPlan plan = make_packing_plan(spec.k, spec.n, spec.poly_n);
  OpCounters local;
  std::vector<PlainPoly> plains;
  plains.reserve(plan.ct_count);
  for (std::size_t t = 0; t < plan.ct_count; ++t) {
    const auto ct = deserialize<U>(ctx.recv(kTagCopPacked));
    if (!(ct.params() == spec.he_params())) throw ProtocolError("COP: ciphertext parameters differ");
    plains.push_back(decrypt(ct, sk, &local));
  }
  if (counters) *counters = local;
  RingParams out_params{spec.ring.ell, xs.params().scale + w.params.scale};
  RingTensor y = unpack_outputs(plains, plan, spec.k, spec.n, out_params);
  RingTensor local_part = ring_matmul(xs.inner, w);
  y = add(y, local_part);
  y.params = out_params;
  return ShareTensor{ctx.party(), std::move(y)};
}

// Server-side accounting of the setup download, charged to phase "setup".
template <CoeffWord U>
void cop_charge_setup(PartyContext& ctx, const WeightStore<U>& store) {
  const std::string prev = ctx.phase();
  ctx.set_phase("setup");
  ctx.charge_offline(store.serialized_bytes(), store.size(), CtRole::setup);
  ctx.set_phase(prev);
}

// ---------------------------------------------------------------------------
// SIP

template <CoeffWord U>
ShareTensor sip_client(PartyContext& ctx, const SecretKey<U>& sk, const ShareTensor& xc,
                       const LinearLayerSpec& spec, const WindowShape& shape, OpCounters* counters = nullptr) {
  spec.validate();
  shape.validate(spec.poly_n);
  PRIVINFER_ENFORCE(xc.rows() == spec.k && xc.cols() == spec.m, "X must be k x m");
  PRIVINFER_ENFORCE(sk.s.params == spec.he_params(), "key parameters differ from the spec");
  const std::size_t kb = ceil_div(spec.k, shape.k_w), mb = ceil_div(spec.m, shape.m_w),
                    nb = ceil_div(spec.n, shape.n_w);
  OpCounters local;
  for (std::size_t i = 0; i < kb; ++i) {
    for (std::size_t j = 0; j < mb; ++j) {
      const PlainPoly x = window_encode_left(xc.inner, shape, spec.poly_n, i * shape.k_w, j * shape.m_w);
      ctx.send(kTagSipInput, serialize(encrypt(x, sk, ctx.rng(), &local)), 1, CtRole::input);
    }
  }
  RingParams out_params{spec.ring.ell, xc.params().scale + spec.ring.scale};
  RingTensor y(out_params, spec.k, spec.n);
  for (std::size_t i = 0; i < kb; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const auto ct = deserialize<U>(ctx.recv(kTagSipOutput));
      if (!(ct.params() == spec.he_params())) throw ProtocolError("SIP: ciphertext parameters differ");
      const RingTensor blk = window_decode(decrypt(ct, sk, &local), shape, out_params);
      for (std::size_t a = 0; a < shape.k_w && i * shape.k_w + a < spec.k; ++a)
        for (std::size_t b = 0; b < shape.n_w && j * shape.n_w + b < spec.n; ++b)
          y.at(i * shape.k_w + a, j * shape.n_w + b) = blk.at(a, b);
    }
  }
  if (counters) *counters = local;
  return ShareTensor{ctx.party(), std::move(y)};
}

template <CoeffWord U>
ShareTensor sip_server(PartyContext& ctx, const ShareTensor& xs, const RingTensor& w, const LinearLayerSpec& spec,
                       const WindowShape& shape, OpCounters* counters = nullptr) {
  spec.validate();
  shape.validate(spec.poly_n);
  PRIVINFER_ENFORCE(xs.rows() == spec.k && xs.cols() == spec.m, "X must be k x m");
  PRIVINFER_ENFORCE(w.rows == spec.m && w.cols == spec.n, "W must be m x n");
  const std::size_t kb = ceil_div(spec.k, shape.k_w), mb = ceil_div(spec.m, shape.m_w),
                    nb = ceil_div(spec.n, shape.n_w);
  HeEvaluator<U> eval(spec.he_params());

  // Enc(Xc) + Xs per input window.
  std::vector<Ciphertext<U>> in;
  in.reserve(kb * mb);
  for (std::size_t i = 0; i < kb; ++i) {
    for (std::size_t j = 0; j < mb; ++j) {
      auto ct = deserialize<U>(ctx.recv(kTagSipInput));
      if (!(ct.params() == spec.he_params())) throw ProtocolError("SIP: ciphertext parameters differ");
      const PlainPoly x = window_encode_left(xs.inner, shape, spec.poly_n, i * shape.k_w, j * shape.m_w);
      in.push_back(eval.add_plain(ct, x));
    }
  }
  std::vector<PlainPoly> w_enc;
  w_enc.reserve(mb * nb);
  for (std::size_t j = 0; j < mb; ++j)
    for (std::size_t l = 0; l < nb; ++l)
      w_enc.push_back(window_encode_right(w, shape, spec.poly_n, j * shape.m_w, l * shape.n_w));

  RingParams out_params{spec.ring.ell, xs.params().scale + w.params.scale};
  RingTensor y(out_params, spec.k, spec.n);
  for (std::size_t i = 0; i < kb; ++i) {
    for (std::size_t l = 0; l < nb; ++l) {
      Ciphertext<U> acc = eval.poly_mul(w_enc[0 * nb + l], in[i * mb + 0]);
      for (std::size_t j = 1; j < mb; ++j) acc = eval.add(acc, eval.poly_mul(w_enc[j * nb + l], in[i * mb + j]));
      PlainPoly r(plain_params(spec.poly_n, spec.ring.ell));
      for (auto& c : r.coeffs) c = ctx.rng()() & spec.ring.mask();
      ctx.send(kTagSipOutput, serialize(eval.sub_plain(acc, r)), 1, CtRole::output);
      const RingTensor blk = window_decode(r, shape, out_params);
      for (std::size_t a = 0; a < shape.k_w && i * shape.k_w + a < spec.k; ++a)
        for (std::size_t b = 0; b < shape.n_w && l * shape.n_w + b < spec.n; ++b)
          y.at(i * shape.k_w + a, l * shape.n_w + b) = blk.at(a, b);
    }
  }
  if (counters) *counters = eval.counters();
  return ShareTensor{ctx.party(), std::move(y)};
}

// ---------------------------------------------------------------------------
// Two-party drivers

struct LinearResult {
  ShareTensor yc;
  ShareTensor ys;
  Transcript transcript;
  OpCounters client_ops;
  OpCounters server_ops;
  double wall_ms = 0;

  RingTensor output() const { return reconstruct(yc, ys); }
};

template <CoeffWord U>
LinearResult cop_matmul(const WeightStore<U>& store, const SecretKey<U>& sk, const ShareTensor& xc,
                        const ShareTensor& xs, const RingTensor& w, const RunOptions& opts) {
  LinearResult res;
  auto run = run_two_party(
      opts, [&](PartyContext& ctx) { res.yc = cop_client(ctx, store, xc, &res.client_ops); },
      [&](PartyContext& ctx) {
        cop_charge_setup(ctx, store);
        res.ys = cop_server(ctx, sk, xs, w, store.spec(), &res.server_ops);
      });
  res.transcript = std::move(run.transcript);
  res.wall_ms = run.wall_ms;
  return res;
}

template <CoeffWord U>
LinearResult sip_matmul(const ShareTensor& xc, const ShareTensor& xs, const RingTensor& w, const WindowShape& shape,
                        const SecretKey<U>& sk_client, const LinearLayerSpec& spec, const RunOptions& opts) {
  LinearResult res;
  auto run = run_two_party(
      opts, [&](PartyContext& ctx) { res.yc = sip_client(ctx, sk_client, xc, spec, shape, &res.client_ops); },
      [&](PartyContext& ctx) { res.ys = sip_server<U>(ctx, xs, w, spec, shape, &res.server_ops); });
  res.transcript = std::move(run.transcript);
  res.wall_ms = run.wall_ms;
  return res;
}

// Ciphertext counts predicted by the communication formulas.
inline std::size_t sip_input_cts(const LinearLayerSpec& s, const WindowShape& w) {
  return ceil_div(s.k, w.k_w) * ceil_div(s.m, w.m_w);
}
inline std::size_t sip_output_cts(const LinearLayerSpec& s, const WindowShape& w) {
  return ceil_div(s.k, w.k_w) * ceil_div(s.n, w.n_w);
}
inline std::size_t cop_output_cts(const LinearLayerSpec& s) {
  return make_packing_plan(s.k, s.n, s.poly_n).ct_count;
}

}  // namespace privinfer
