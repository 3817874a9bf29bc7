#pragma once

// Drivers behind the command-line tool: secure matmul runs, template fitting,
// secure nonlinear evaluation of a tensor, and a small encoder-block pipeline.
// Each returns a Report whose rows are written as CSV.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "privinfer/approx.hpp"
#include "privinfer/encodings.hpp"
#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"
#include "privinfer/linear_protocols.hpp"
#include "privinfer/mpc/runtime.hpp"
#include "privinfer/secure_nonlinear.hpp"
#include "privinfer/tensor_io.hpp"

namespace privinfer {

struct ReportRow {
  std::string phase;
  std::string party;
  std::uint64_t bytes = 0;
  int rounds = 0;
  std::uint64_t ciphertexts = 0;
  std::uint64_t coeff_mults = 0;
  double wall_ms = 0;
  double max_err = 0;
};

struct Report {
  std::vector<ReportRow> rows;
  bool verified = true;
  std::string note;
  Transcript transcript;
};

inline constexpr const char* kReportHeader = "phase,party,bytes,rounds,ciphertexts,coeff_mults,wall_ms,max_err";

inline void write_report_csv(std::ostream& out, const Report& r) {
  out << kReportHeader << '\n';
  for (const auto& row : r.rows) {
    out << row.phase << ',' << row.party << ',' << row.bytes << ',' << row.rounds << ',' << row.ciphertexts << ','
        << row.coeff_mults << ',' << std::fixed << std::setprecision(3) << row.wall_ms << ','
        << std::defaultfloat << std::setprecision(6) << row.max_err << '\n';
  }
}

inline void save_report_csv(const std::string& path, const Report& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report " + path);
  write_report_csv(out, r);
}

// One row per (phase, party): bytes and ciphertexts sent by that party.
inline std::vector<ReportRow> transcript_rows(const Transcript& t, const OpCounters& client_ops,
                                              const OpCounters& server_ops, double wall_ms, double max_err) {
  std::vector<ReportRow> rows;
  for (const auto& [phase, st] : t.phases) {
    for (Party p : {Party::client, Party::server}) {
      ReportRow r;
      r.phase = phase;
      r.party = party_name(p);
      r.rounds = st.rounds;
      r.bytes = p == Party::client ? st.bytes_client_to_server : st.bytes_server_to_client;
      for (const auto& m : t.messages)
        if (m.phase == phase && m.from == p) r.ciphertexts += m.ciphertexts;
      if (phase == "setup" && p == Party::server) {
        r.bytes += st.offline_bytes;
        r.ciphertexts += t.ct_setup;
      }
      if (phase == "online") r.coeff_mults = (p == Party::client ? client_ops : server_ops).coeff_mults;
      r.wall_ms = wall_ms;
      r.max_err = max_err;
      rows.push_back(r);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Configuration

struct LayerPreset {
  std::string name;
  std::size_t k, m, n;
};

// BERT-base shapes at sequence length 128. "qkv" is the fused projection;
// "q" is one of the three separate 768 -> 768 projections.
inline const std::vector<LayerPreset>& bert_presets() {
  static const std::vector<LayerPreset> p = {
      {"qkv", 128, 768, 2304}, {"q", 128, 768, 768}, {"o", 128, 768, 768},
      {"h1", 128, 768, 3072},  {"h2", 128, 3072, 768},
  };
  return p;
}

inline LayerPreset find_preset(const std::string& name) {
  for (const auto& p : bert_presets())
    if (p.name == name) return p;
  throw std::invalid_argument("unknown preset '" + name + "' (qkv, q, o, h1, h2)");
}

struct RunConfig {
  // matmul
  std::string protocol = "cop";
  std::size_t k = 8, m = 16, n = 16;
  std::string preset;
  std::size_t poly_n = 1024;
  bool full = false;  // N = 8192
  int ell = 64, scale = 18;
  int q_bits = 0;
  WindowShape window{0, 0, 0};  // all zero: choose automatically
  std::string store_path;       // COP: stream the weight store through this file
  bool verify = true;
  RunOptions run;
  std::string report_path;
  // fit
  std::string histogram_path;  // empty: synthetic histogram for the template
  std::string template_name = "gelu";
  std::vector<double> init;
  double radius = 0.5, step = 0.05;
  std::string model_out;
  // nonlinear
  std::string model_path;
  std::string tensor_path;
  std::string output_path;
  std::string op = "gelu";
};

inline LinearLayerSpec layer_spec(const RunConfig& cfg) {
  LinearLayerSpec s;
  s.k = cfg.k;
  s.m = cfg.m;
  s.n = cfg.n;
  if (!cfg.preset.empty()) {
    const auto p = find_preset(cfg.preset);
    s.k = p.k;
    s.m = p.m;
    s.n = p.n;
  }
  s.ring = RingParams{cfg.ell, cfg.scale};
  s.poly_n = cfg.full ? 8192 : cfg.poly_n;
  s.q_bits = cfg.q_bits;
  s.validate();
  return s;
}

// Largest power-of-two window with k_w * m_w * n_w <= N that does not exceed
// the matrix (rounded up to a power of two).
inline WindowShape auto_window(const LinearLayerSpec& s) {
  auto cap = [](std::size_t v) { return std::bit_ceil(v); };
  WindowShape w{1, 1, 1};
  const std::size_t lim[3] = {cap(s.k), cap(s.m), cap(s.n)};
  std::size_t* dims[3] = {&w.n_w, &w.m_w, &w.k_w};
  const std::size_t* lims[3] = {&lim[2], &lim[1], &lim[0]};
  bool grew = true;
  while (grew) {
    grew = false;
    for (int i = 0; i < 3; ++i) {
      if (*dims[i] * 2 <= *lims[i] && w.volume() * 2 <= s.poly_n) {
        *dims[i] *= 2;
        grew = true;
      }
    }
  }
  return w;
}

// Fixed-point test data: uniform reals in [-range, range].
inline RingTensor random_real_tensor(RingParams p, std::size_t rows, std::size_t cols, double range,
                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-range, range);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = d(rng);
  return RingTensor::from_reals(p, rows, cols, v);
}

// Largest |a - b| of two tensors, measured in real units.
inline double max_abs_diff(const RingTensor& a, const RingTensor& b) {
  PRIVINFER_ENFORCE(a.same_shape(b), "shape mismatch");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(decode_real(a.data[i], a.params) - decode_real(b.data[i], b.params)));
  return m;
}

// ---------------------------------------------------------------------------
// matmul

template <CoeffWord U>
Report run_matmul_typed(const RunConfig& cfg, const LinearLayerSpec& spec) {
  std::mt19937_64 rng(derive_seed(cfg.run.seed, 10));
  const RingTensor x = random_tensor(spec.ring, spec.k, spec.m, rng);
  const RingTensor w = random_tensor(spec.ring, spec.m, spec.n, rng);
  auto [xc, xs] = share(x, rng);

  LinearResult res;
  if (cfg.protocol == "cop") {
    const auto sk = keygen<U>(spec.he_params(), derive_seed(cfg.run.seed, 11));
    const WeightStore<U> store = cfg.store_path.empty()
                                     ? cop_setup(w, sk, spec, rng)
                                     : cop_setup_to_file(w, sk, spec, rng, cfg.store_path);
    res = cop_matmul(store, sk, xc, xs, w, cfg.run);
  } else if (cfg.protocol == "sip") {
    const WindowShape shape = cfg.window.volume() ? cfg.window : auto_window(spec);
    const auto sk = keygen<U>(spec.he_params(), derive_seed(cfg.run.seed, 12));
    res = sip_matmul(xc, xs, w, shape, sk, spec, cfg.run);
  } else {
    throw std::invalid_argument("protocol must be sip or cop");
  }

  Report rep;
  const RingTensor got = res.output();
  const RingTensor want = ring_matmul(x, w);
  std::uint64_t mismatches = 0;
  for (std::size_t i = 0; i < got.size(); ++i) mismatches += got.data[i] != want.data[i];
  rep.verified = mismatches == 0;
  if (!rep.verified) rep.note = std::to_string(mismatches) + " output elements differ from the plaintext product";
  // Exact ring arithmetic: the error column counts mismatching elements.
  rep.rows = transcript_rows(res.transcript, res.client_ops, res.server_ops, res.wall_ms,
                             static_cast<double>(mismatches));
  rep.transcript = std::move(res.transcript);
  return rep;
}

inline Report cmd_matmul(const RunConfig& cfg) {
  const LinearLayerSpec spec = layer_spec(cfg);
  return dispatch_word(spec.effective_q_bits(), [&]<class U>() { return run_matmul_typed<U>(cfg, spec); });
}

// ---------------------------------------------------------------------------
// fit

struct FitOutcome {
  PiecewisePoly model;
  double loss = 0;
  double weighted_rmse = 0;
  double fixed_max_err = 0;  // fixed (ell=32, s=12) vs real evaluation
  std::uint64_t fixed_overflows = 0;
  std::size_t candidates = 0;
};

inline Histogram histogram_for(const RunConfig& cfg, Template kind) {
  if (!cfg.histogram_path.empty()) return load_histogram(cfg.histogram_path);
  return kind == Template::exp ? synthetic_softmax_histogram() : synthetic_gelu_histogram();
}

inline FitOutcome cmd_fit(const RunConfig& cfg) {
  const Template kind = parse_template(cfg.template_name);
  PRIVINFER_ENFORCE(kind != Template::plain, "fit supports the exp and gelu templates");
  const Histogram hist = histogram_for(cfg, kind);
  std::vector<double> init = cfg.init;
  if (init.empty()) init = kind == Template::exp ? std::vector<double>{-4.0} : std::vector<double>{-2.1, 0.2};
  const RealFn f = kind == Template::exp ? RealFn([](double x) { return std::exp(x); }) : RealFn(gelu);
  const SearchResult sr = search_breakpoints(f, kind, init, hist, SearchOptions{cfg.radius, cfg.step});
  FitOutcome out;
  out.model = sr.poly;
  out.loss = sr.loss;
  out.candidates = sr.candidates;
  out.weighted_rmse = weighted_rmse(f, sr.poly, hist, hist.lower(), hist.upper());
  const RingParams rp{32, 12};
  const auto deg = fixed_degradation(sr.poly, rp, hist.lower(), hist.upper(), 1);
  out.fixed_max_err = deg.max_abs_err;
  out.fixed_overflows = deg.overflows;
  if (!cfg.model_out.empty()) save_model(cfg.model_out, sr.poly);
  return out;
}

inline void write_fit_table(std::ostream& out, const FitOutcome& f) {
  out << "template,breakpoints,loss,weighted_rmse,fixed_max_err,fixed_overflows,candidates\n";
  out << template_name(f.model.kind) << ',';
  for (std::size_t i = 0; i < f.model.breakpoints.size(); ++i) out << (i ? " " : "") << f.model.breakpoints[i];
  out << ',' << std::setprecision(8) << f.loss << ',' << f.weighted_rmse << ',' << f.fixed_max_err << ','
      << f.fixed_overflows << ',' << f.candidates << '\n';
}

// ---------------------------------------------------------------------------
// nonlinear

struct NonlinearOutcome {
  Report report;
  RingTensor output;
};

inline RingTensor softmax_reference(const RingTensor& x, const PiecewisePoly& exp_model) {
  RingTensor y(x.params, x.rows, x.cols);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < x.rows; ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < x.cols; ++c) mx = std::max(mx, decode_real(x.at(r, c), x.params));
    double s = 0;
    std::vector<double> e(x.cols);
    for (std::size_t c = 0; c < x.cols; ++c) {
      e[c] = eval_piecewise_real(exp_model, decode_real(x.at(r, c), x.params) - mx);
      s += e[c];
    }
    for (std::size_t c = 0; c < x.cols; ++c) out[r * x.cols + c] = e[c] / s;
  }
  return RingTensor::from_reals(x.params, x.rows, x.cols, out);
}

inline NonlinearOutcome cmd_nonlinear(const RunConfig& cfg) {
  const PiecewisePoly model = load_model(cfg.model_path);
  const RingTensor x = load_tensor_csv(cfg.tensor_path);
  const SecurePiecewise sp = make_secure_piecewise(model, x.params);
  std::mt19937_64 rng(derive_seed(cfg.run.seed, 20));
  auto [xc, xs] = share(x, rng);

  PairResult res;
  RingTensor want;
  double tol = 0;
  if (cfg.op == "gelu" || cfg.op == "exp") {
    PRIVINFER_ENFORCE(model.kind == (cfg.op == "gelu" ? Template::gelu : Template::exp), "model template does not match op");
    res = cfg.op == "gelu" ? secure_gelu_pair(xc, xs, sp, cfg.run) : secure_exp_pair(xc, xs, sp, cfg.run);
    want = RingTensor(x.params, x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) want.data[i] = eval_piecewise_fixed(model, x.data[i], x.params);
    tol = 2.0 * std::ldexp(1.0, -x.params.scale);
  } else if (cfg.op == "softmax") {
    PRIVINFER_ENFORCE(model.kind == Template::exp, "softmax needs an exp model");
    res = secure_softmax_pair(xc, xs, sp, cfg.run);
    want = softmax_reference(x, model);
    tol = 0.02;
  } else {
    throw std::invalid_argument("op must be gelu, exp or softmax");
  }
  NonlinearOutcome out;
  out.output = res.output();
  const double err = max_abs_diff(out.output, want);
  out.report.verified = err <= tol;
  if (!out.report.verified) out.report.note = "max error " + std::to_string(err) + " above tolerance";
  out.report.rows = transcript_rows(res.transcript, {}, {}, res.wall_ms, err);
  out.report.transcript = std::move(res.transcript);
  if (!cfg.output_path.empty()) save_tensor_csv(cfg.output_path, out.output);
  return out;
}

// ---------------------------------------------------------------------------
// block: COP linear over Z_{2^64} (s = 18) -> local truncation and downcast to
// Z_{2^32} (s = 12) -> secure GELU -> fused truncation-upcast back to Z_{2^64}.

struct BlockOutcome {
  Report report;
  RingTensor output;     // reconstructed, ell = 64, s = 18
  RingTensor reference;  // fitted GELU of the exact product, same encoding
  double max_err = 0;
};

inline BlockOutcome cmd_block(const RunConfig& cfg) {
  const RingParams big{64, 18};
  const RingParams small{32, 12};
  LinearLayerSpec spec;
  spec.k = cfg.k;
  spec.m = cfg.m;
  spec.n = cfg.n;
  spec.ring = big;
  spec.poly_n = cfg.full ? 8192 : std::min<std::size_t>(cfg.poly_n, 1024);
  spec.q_bits = cfg.q_bits;
  spec.validate();

  std::mt19937_64 rng(derive_seed(cfg.run.seed, 30));
  const RingTensor x = random_real_tensor(big, spec.k, spec.m, 1.0, rng);
  const RingTensor w = random_real_tensor(big, spec.m, spec.n, 1.0, rng);
  auto [xc, xs] = share(x, rng);

  RunConfig fit_cfg = cfg;
  fit_cfg.template_name = "gelu";
  fit_cfg.model_out.clear();
  const PiecewisePoly model = cfg.model_path.empty() ? cmd_fit(fit_cfg).model : load_model(cfg.model_path);
  const SecurePiecewise sp = make_secure_piecewise(model, small);

  const int drop = 2 * big.scale - small.scale;  // 36 -> 12
  const int lift = 2 * small.scale - big.scale;  // rescale 12 -> 24, then drop 6 on upcast

  auto stage = [&](PartyContext& ctx, const ShareTensor& z) {
    ShareTensor t{ctx.party(), local_truncate_share(z.inner, drop, ctx.is_client())};
    t.inner = local_downcast(t.inner, small.ell);
    t.inner.params = small;
    ShareTensor g = secure_gelu(ctx, t, sp);
    g.inner = mul_constant(g.inner, u64{1} << small.scale);
    g.inner.params.scale = 2 * small.scale;
    ShareTensor up = signed_trunc_upcast(ctx, g, lift, big.ell);
    up.inner.params = big;
    return up;
  };

  return dispatch_word(spec.effective_q_bits(), [&]<class U>() {
    const auto sk = keygen<U>(spec.he_params(), derive_seed(cfg.run.seed, 31));
    const WeightStore<U> store = cop_setup(w, sk, spec, rng);
    ShareTensor yc, ys;
    OpCounters cops, sops;
    auto run = run_two_party(
        cfg.run, [&](PartyContext& ctx) { yc = stage(ctx, cop_client(ctx, store, xc, &cops)); },
        [&](PartyContext& ctx) {
          cop_charge_setup(ctx, store);
          ys = stage(ctx, cop_server(ctx, sk, xs, w, spec, &sops));
        });

    BlockOutcome out;
    out.output = reconstruct(yc, ys);
    // Real reference: fitted GELU of the exactly decoded product.
    const RingTensor z = ring_matmul(x, w);
    std::vector<double> ref(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      ref[i] = eval_piecewise_real(model, std::ldexp(static_cast<double>(to_signed(z.data[i], 64)), -2 * big.scale));
    out.reference = RingTensor::from_reals(big, z.rows, z.cols, ref);
    for (std::size_t i = 0; i < ref.size(); ++i)
      out.max_err = std::max(out.max_err, std::abs(decode_real(out.output.data[i], big) - ref[i]));
    out.report.verified = out.max_err <= std::ldexp(1.0, -8);
    if (!out.report.verified) out.report.note = "block output deviates from the real reference";
    out.report.rows = transcript_rows(run.transcript, cops, sops, run.wall_ms, out.max_err);
    out.report.transcript = std::move(run.transcript);
    return out;
  });
}

}  // namespace privinfer
