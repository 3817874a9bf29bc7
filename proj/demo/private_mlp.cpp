// Two-party evaluation of softmax(gelu(X * W1)) on a toy 4x8 input.
// The server owns W1 and the HE key; the client owns X. Neither sees the
// other's data in the clear; the result is revealed at the end for printing.

#include <iomanip>
#include <iostream>
#include <random>

#include "privinfer/privinfer.hpp"

using namespace privinfer;

int main() {
  const RingParams big{64, 18};
  const RingParams small{32, 12};
  std::mt19937_64 rng(7);

  LinearLayerSpec spec;
  spec.k = 4;
  spec.m = 8;
  spec.n = 8;
  spec.ring = big;
  spec.poly_n = 256;

  const RingTensor x = random_real_tensor(big, spec.k, spec.m, 1.0, rng);
  const RingTensor w = random_real_tensor(big, spec.m, spec.n, 1.0, rng);
  auto [xc, xs] = share(x, rng);

  const SearchResult g = template_gelu(synthetic_gelu_histogram());
  const SearchResult e = template_exp(synthetic_softmax_histogram());
  const SecurePiecewise gelu_sp = make_secure_piecewise(g.poly, small);
  const SecurePiecewise exp_sp = make_secure_piecewise(e.poly, small);

  const auto sk = keygen<u256>(spec.he_params(), 11);
  const auto store = cop_setup(w, sk, spec, rng);

  auto body = [&](PartyContext& ctx, const ShareTensor& z) {
    ShareTensor t{ctx.party(), local_truncate_share(z.inner, 2 * big.scale - small.scale, ctx.is_client())};
    t.inner = local_downcast(t.inner, small.ell);
    t.inner.params = small;
    return secure_softmax(ctx, secure_gelu(ctx, t, gelu_sp), exp_sp);
  };

  ShareTensor yc, ys;
  const RunResult run = run_two_party(
      RunOptions{}, [&](PartyContext& ctx) { yc = body(ctx, cop_client(ctx, store, xc, nullptr)); },
      [&](PartyContext& ctx) {
        cop_charge_setup(ctx, store);
        ys = body(ctx, cop_server(ctx, sk, xs, w, spec, nullptr));
      });

  const RingTensor y = reconstruct(yc, ys);
  std::cout << std::fixed << std::setprecision(4);
  for (std::size_t r = 0; r < y.rows; ++r) {
    for (std::size_t c = 0; c < y.cols; ++c) std::cout << decode_real(y.at(r, c), small) << ' ';
    std::cout << '\n';
  }
  std::cout << "online bytes " << run.transcript.bytes("online") << ", rounds " << run.transcript.rounds("online")
            << ", ciphertexts " << run.transcript.ct_out << '\n';
}
