#pragma once

// Distribution-aware piecewise polynomial approximation.
//
// A fit minimizes sum_bins mass_bin * (f(mid_bin) - P(mid_bin))^2 over the bins
// whose midpoint falls in the interval. Breakpoints are chosen by grid search
// around an initial guess; each candidate refits every interval and the lowest
// total loss wins (first candidate on ties).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"

namespace privinfer {

using RealFn = std::function<double(double)>;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// ---------------------------------------------------------------------------
// Histogram

struct HistBin {
  double lower = 0;
  double upper = 0;
  double count = 0;

  double mid() const { return 0.5 * (lower + upper); }
};

class Histogram {
 public:
  Histogram() = default;
  explicit Histogram(std::vector<HistBin> bins) : bins_(std::move(bins)) { validate(); }

  const std::vector<HistBin>& bins() const { return bins_; }
  double total() const {
    double t = 0;
    for (const auto& b : bins_) t += b.count;
    return t;
  }
  double lower() const { return bins_.front().lower; }
  double upper() const { return bins_.back().upper; }

  // Probability mass of each bin.
  std::vector<double> masses() const {
    const double t = total();
    std::vector<double> m(bins_.size());
    for (std::size_t i = 0; i < bins_.size(); ++i) m[i] = bins_[i].count / t;
    return m;
  }

  // Normalized density p(x); zero outside the bins.
  double density(double x) const {
    const double t = total();
    for (const auto& b : bins_)
      if (x >= b.lower && x < b.upper) return b.count / (t * (b.upper - b.lower));
    return 0.0;
  }

  void validate() const {
    PRIVINFER_ENFORCE(!bins_.empty(), "histogram has no bins");
    for (std::size_t i = 0; i < bins_.size(); ++i) {
      PRIVINFER_ENFORCE(bins_[i].upper > bins_[i].lower, "bin upper must exceed lower");
      PRIVINFER_ENFORCE(bins_[i].count >= 0, "bin counts must be nonnegative");
      if (i) PRIVINFER_ENFORCE(bins_[i].lower >= bins_[i - 1].upper - 1e-12, "bins must be sorted and disjoint");
    }
    PRIVINFER_ENFORCE(total() > 0, "histogram total count must be positive");
  }

 private:
  std::vector<HistBin> bins_;
};

// Bins of width `width` on [lo, hi] with masses given by a CDF.
inline Histogram histogram_from_cdf(const RealFn& cdf, double lo, double hi, double width) {
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / width));
  std::vector<HistBin> bins(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = lo + width * static_cast<double>(i);
    const double b = i + 1 == n ? hi : lo + width * static_cast<double>(i + 1);
    bins[i] = {a, b, std::max(0.0, cdf(b) - cdf(a))};
  }
  return Histogram(std::move(bins));
}

inline double normal_cdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

// Stand-in for GELU inputs: 0.8 N(-2, 1) + 0.2 N(0.5, 1) on [-6, 4].
inline Histogram synthetic_gelu_histogram(double width = 0.01) {
  auto cdf = [](double x) { return 0.8 * normal_cdf(x, -2.0, 1.0) + 0.2 * normal_cdf(x, 0.5, 1.0); };
  return histogram_from_cdf(cdf, -6.0, 4.0, width);
}

// Stand-in for max-subtracted softmax inputs: -|N(0, 2)| clipped to [-16, 0].
inline Histogram synthetic_softmax_histogram(double width = 0.01) {
  // P(X <= x) for X = -|Z|, x <= 0: P(|Z| >= -x) = 2 (1 - Phi(-x / 2)).
  auto cdf = [](double x) {
    if (x >= 0) return 1.0;
    if (x <= -16) return 0.0;
    return 2.0 * (1.0 - normal_cdf(-x, 0.0, 2.0));
  };
  Histogram h = histogram_from_cdf(cdf, -16.0, 0.0, width);
  // Clipping piles the far tail into the first bin.
  std::vector<HistBin> bins = h.bins();
  bins.front().count += 2.0 * (1.0 - normal_cdf(16.0, 0.0, 2.0));
  return Histogram(std::move(bins));
}

inline Histogram uniform_histogram(double lo, double hi, double width) {
  return histogram_from_cdf([lo, hi](double x) { return (x - lo) / (hi - lo); }, lo, hi, width);
}

// Text format: "lower upper count" per line, '#' starts a comment.
inline Histogram read_histogram(std::istream& in) {
  std::vector<HistBin> bins;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto p = line.find('#'); p != std::string::npos) line.resize(p);
    std::istringstream ss(line);
    HistBin b;
    if (!(ss >> b.lower)) continue;
    if (!(ss >> b.upper >> b.count)) {
      throw std::invalid_argument("histogram line " + std::to_string(lineno) + ": expected 'lower upper count'");
    }
    bins.push_back(b);
  }
  return Histogram(std::move(bins));
}

inline Histogram load_histogram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open histogram " + path);
  return read_histogram(in);
}

inline void write_histogram(std::ostream& out, const Histogram& h) {
  out << "# lower upper count\n" << std::setprecision(17);
  for (const auto& b : h.bins()) out << b.lower << ' ' << b.upper << ' ' << b.count << '\n';
}

// ---------------------------------------------------------------------------
// Polynomials and templates

// Coefficients in ascending order: c0 + c1 x + ...
inline double eval_poly(const std::vector<double>& c, double x) {
  double acc = 0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
  return acc;
}

enum class Template { exp, gelu, plain };

inline const char* template_name(Template t) {
  switch (t) {
    case Template::exp: return "exp";
    case Template::gelu: return "gelu";
    case Template::plain: return "plain";
  }
  return "?";
}

inline Template parse_template(const std::string& s) {
  if (s == "exp") return Template::exp;
  if (s == "gelu") return Template::gelu;
  if (s == "plain") return Template::plain;
  throw std::invalid_argument("unknown template '" + s + "'");
}

// exp:   0 for x < T,          P3 on [T, +inf)
// gelu:  0 for x <= T1,        P2 on (T1, T2],  x for x > T2
// plain: one polynomial everywhere
struct PiecewisePoly {
  Template kind = Template::plain;
  std::vector<double> breakpoints;
  std::vector<std::vector<double>> pieces;

  std::size_t piece_index(double x) const {
    switch (kind) {
      case Template::exp: return x < breakpoints[0] ? 0 : 1;
      case Template::gelu: return x <= breakpoints[0] ? 0 : (x <= breakpoints[1] ? 1 : 2);
      case Template::plain: return 0;
    }
    return 0;
  }
  // The fitted (non-fixed) piece.
  const std::vector<double>& poly() const { return pieces[kind == Template::plain ? 0 : 1]; }

  void validate() const {
    const std::size_t nb = kind == Template::exp ? 1 : kind == Template::gelu ? 2 : 0;
    PRIVINFER_ENFORCE(breakpoints.size() == nb, "wrong breakpoint count for the template");
    PRIVINFER_ENFORCE(pieces.size() == nb + 1, "pieces must number breakpoints + 1");
    if (kind == Template::gelu) PRIVINFER_ENFORCE(breakpoints[0] < breakpoints[1], "need T1 < T2");
    for (const auto& p : pieces) PRIVINFER_ENFORCE(!p.empty(), "empty piece");
  }
};

inline double eval_piecewise_real(const PiecewisePoly& p, double x) {
  return eval_poly(p.pieces[p.piece_index(x)], x);
}

inline PiecewisePoly make_exp_template(double t, std::vector<double> cubic) {
  return PiecewisePoly{Template::exp, {t}, {{0.0}, std::move(cubic)}};
}

inline PiecewisePoly make_gelu_template(double t1, double t2, std::vector<double> quad) {
  return PiecewisePoly{Template::gelu, {t1, t2}, {{0.0}, std::move(quad), {0.0, 1.0}}};
}

// ---------------------------------------------------------------------------
// Weighted least squares

struct FitResult {
  std::vector<double> coeffs;  // ascending, padded to degree + 1
  double loss = 0;             // sum of mass * squared error over the interval
  int degree_used = 0;
  bool uniform_fallback = false;
};

struct Interval {
  double lo;
  double hi;
  bool lo_closed;
  bool hi_closed;

  bool contains(double x) const {
    const bool above = lo_closed ? x >= lo : x > lo;
    const bool below = hi_closed ? x <= hi : x < hi;
    return above && below;
  }
};

namespace detail {

inline FitResult solve_wls(const std::vector<double>& xs, const std::vector<double>& ws, const RealFn& f, int degree) {
  FitResult r;
  for (int d = degree; d >= 0; --d) {
    Eigen::MatrixXd a(xs.size(), d + 1);
    Eigen::VectorXd b(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double sw = std::sqrt(ws[i]);
      double pw = 1;
      for (int j = 0; j <= d; ++j) {
        a(static_cast<Eigen::Index>(i), j) = sw * pw;
        pw *= xs[i];
      }
      b(static_cast<Eigen::Index>(i)) = sw * f(xs[i]);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-12);
    if (qr.rank() < d + 1) continue;  // too few distinct weighted points: drop a degree
    const Eigen::VectorXd c = qr.solve(b);
    r.coeffs.assign(static_cast<std::size_t>(degree) + 1, 0.0);
    for (int j = 0; j <= d; ++j) r.coeffs[j] = c(j);
    r.degree_used = d;
    return r;
  }
  throw std::invalid_argument("weighted_fit: no data points in the interval");
}

}  // namespace detail

// Fits a degree-d polynomial to f on the interval under the histogram's
// midpoint masses. Falls back to uniform weights if the interval holds no mass.
inline FitResult weighted_fit(const RealFn& f, const Interval& iv, int degree, const Histogram& hist) {
  PRIVINFER_ENFORCE(iv.hi > iv.lo, "interval must have hi > lo");
  PRIVINFER_ENFORCE(degree >= 0 && degree <= 8, "degree must be in [0, 8]");
  const auto masses = hist.masses();
  std::vector<double> xs, ws;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    const double x = hist.bins()[i].mid();
    if (iv.contains(x) && masses[i] > 0) {
      xs.push_back(x);
      ws.push_back(masses[i]);
    }
  }
  FitResult r;
  if (xs.empty()) {
    const int pts = 64;
    for (int i = 0; i < pts; ++i) {
      xs.push_back(iv.lo + (iv.hi - iv.lo) * (i + 0.5) / pts);
      ws.push_back(1.0 / pts);
    }
    r = detail::solve_wls(xs, ws, f, degree);
    r.uniform_fallback = true;
    r.loss = 0;  // no probability mass in the interval
    return r;
  }
  r = detail::solve_wls(xs, ws, f, degree);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = f(xs[i]) - eval_poly(r.coeffs, xs[i]);
    r.loss += ws[i] * e * e;
  }
  return r;
}

inline FitResult weighted_fit(const RealFn& f, double lo, double hi, int degree, const Histogram& hist) {
  return weighted_fit(f, Interval{lo, hi, true, true}, degree, hist);
}

// Weighted loss of a fixed piece (no fitting) over an interval.
inline double fixed_piece_loss(const RealFn& f, const std::vector<double>& piece, const Interval& iv,
                               const Histogram& hist) {
  const auto masses = hist.masses();
  double loss = 0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    const double x = hist.bins()[i].mid();
    if (!iv.contains(x)) continue;
    const double e = f(x) - eval_poly(piece, x);
    loss += masses[i] * e * e;
  }
  return loss;
}

// sqrt of the mass-weighted mean squared error on [lo, hi].
inline double weighted_rmse(const RealFn& f, const PiecewisePoly& p, const Histogram& hist, double lo, double hi) {
  const auto masses = hist.masses();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    const double x = hist.bins()[i].mid();
    if (x < lo || x > hi) continue;
    const double e = f(x) - eval_piecewise_real(p, x);
    num += masses[i] * e * e;
    den += masses[i];
  }
  PRIVINFER_ENFORCE(den > 0, "no histogram mass in the evaluation range");
  return std::sqrt(num / den);
}

// ---------------------------------------------------------------------------
// Breakpoint search

struct SearchOptions {
  double radius = 0.5;
  double step = 0.05;
};

struct SearchResult {
  PiecewisePoly poly;
  double loss = std::numeric_limits<double>::infinity();
  std::size_t candidates = 0;
};

inline std::vector<double> breakpoint_candidates(double init, const SearchOptions& o) {
  PRIVINFER_ENFORCE(o.radius >= 0, "search radius must be nonnegative");
  PRIVINFER_ENFORCE(o.step > 0, "search step must be positive");
  const auto r = static_cast<long>(std::floor(o.radius / o.step + 1e-9));
  std::vector<double> c;
  for (long i = -r; i <= r; ++i) c.push_back(init + static_cast<double>(i) * o.step);
  return c;
}

// Total loss and fitted pieces of a template at the given breakpoints. The
// upper end of the exp cubic is the histogram's upper edge.
inline std::pair<PiecewisePoly, double> fit_template(const RealFn& f, Template kind, const std::vector<double>& t,
                                                      const Histogram& hist) {
  const double inf = std::numeric_limits<double>::infinity();
  if (kind == Template::exp) {
    const double hi = std::max(hist.upper(), t[0] + 1e-9);
    const FitResult mid = weighted_fit(f, Interval{t[0], hi, true, true}, 3, hist);
    PiecewisePoly p = make_exp_template(t[0], mid.coeffs);
    const double loss = fixed_piece_loss(f, p.pieces[0], Interval{-inf, t[0], false, false}, hist) + mid.loss +
                        fixed_piece_loss(f, mid.coeffs, Interval{hi, inf, false, false}, hist);
    return {p, loss};
  }
  if (kind == Template::gelu) {
    PRIVINFER_ENFORCE(t[0] < t[1], "need T1 < T2");
    const FitResult mid = weighted_fit(f, Interval{t[0], t[1], false, true}, 2, hist);
    PiecewisePoly p = make_gelu_template(t[0], t[1], mid.coeffs);
    const double loss = fixed_piece_loss(f, p.pieces[0], Interval{-inf, t[0], false, true}, hist) + mid.loss +
                        fixed_piece_loss(f, p.pieces[2], Interval{t[1], inf, false, false}, hist);
    return {p, loss};
  }
  throw std::invalid_argument("fit_template: the plain template has no breakpoints");
}

inline SearchResult search_breakpoints(const RealFn& f, Template kind, const std::vector<double>& init,
                                       const Histogram& hist, const SearchOptions& opts = {}) {
  SearchResult best;
  auto consider = [&](const std::vector<double>& t) {
    ++best.candidates;
    auto [p, loss] = fit_template(f, kind, t, hist);
    if (loss < best.loss) {
      best.loss = loss;
      best.poly = std::move(p);
    }
  };
  if (kind == Template::exp) {
    PRIVINFER_ENFORCE(init.size() == 1, "exp template takes one breakpoint");
    for (double t : breakpoint_candidates(init[0], opts)) consider({t});
  } else if (kind == Template::gelu) {
    PRIVINFER_ENFORCE(init.size() == 2, "gelu template takes two breakpoints");
    const auto c1 = breakpoint_candidates(init[0], opts);
    const auto c2 = breakpoint_candidates(init[1], opts);
    for (double t1 : c1)
      for (double t2 : c2)
        if (t1 < t2) consider({t1, t2});
  } else {
    throw std::invalid_argument("search_breakpoints: the plain template has no breakpoints");
  }
  if (best.candidates == 0) throw std::invalid_argument("search_breakpoints: empty candidate set");
  return best;
}

inline SearchResult template_exp(const Histogram& hist, const SearchOptions& opts = {}, double init = -4.0) {
  return search_breakpoints([](double x) { return std::exp(x); }, Template::exp, {init}, hist, opts);
}

inline SearchResult template_gelu(const Histogram& hist, const SearchOptions& opts = {}, double t1 = -2.1,
                                  double t2 = 0.2) {
  return search_breakpoints(gelu, Template::gelu, {t1, t2}, hist, opts);
}

// Unconstrained single polynomial, used as the high-degree reference.
inline PiecewisePoly fit_reference_poly(const RealFn& f, double lo, double hi, int degree, const Histogram& hist) {
  const FitResult r = weighted_fit(f, Interval{lo, hi, true, true}, degree, hist);
  return PiecewisePoly{Template::plain, {}, {r.coeffs}};
}

// ---------------------------------------------------------------------------
// Fixed-point evaluation

struct FixedEvalStats {
  std::uint64_t overflows = 0;  // products or sums that left the signed ell-bit range
};

namespace detail {

inline bool fits_signed(__int128 v, int ell) {
  const __int128 lim = static_cast<__int128>(1) << (ell - 1);
  return v >= -lim && v < lim;
}

}  // namespace detail

// Horner evaluation in Z_{2^ell} at scale s with an arithmetic right shift
// after every product; the same order of operations as the secure protocols.
// Coefficients are encoded with floor. Overflows wrap (as they would in the
// ring) but are counted when stats is given.
inline u64 eval_poly_fixed(const std::vector<double>& coeffs, u64 x, const RingParams& rp,
                           FixedEvalStats* stats = nullptr) {
  const int ell = rp.ell;
  const i64 xv = to_signed(x, ell);
  PRIVINFER_ENFORCE(!coeffs.empty(), "empty polynomial");
  const std::size_t d = coeffs.size() - 1;
  u64 acc = encode_real(coeffs[d], rp);
  for (std::size_t i = d; i-- > 0;) {
    const i64 av = to_signed(acc, ell);
    const __int128 prod = static_cast<__int128>(av) * xv;
    if (stats && !detail::fits_signed(prod, ell)) ++stats->overflows;
    const u64 wrapped = (acc * x) & rp.mask();
    const u64 trunc = from_signed(to_signed(wrapped, ell) >> rp.scale, ell);
    const u64 ci = encode_real(coeffs[i], rp);
    const __int128 sum = static_cast<__int128>(to_signed(trunc, ell)) + to_signed(ci, ell);
    if (stats && !detail::fits_signed(sum, ell)) ++stats->overflows;
    acc = (trunc + ci) & rp.mask();
  }
  return acc;
}

// Breakpoint residues used by both the oracle and the secure protocols.
inline std::vector<u64> encode_breakpoints(const PiecewisePoly& p, const RingParams& rp) {
  std::vector<u64> t;
  for (double b : p.breakpoints) t.push_back(encode_real(b, rp));
  return t;
}

// Mirrors the secure evaluation: the fitted polynomial is computed for every
// input, then the template selects 0, the polynomial or x by signed compares
// against the encoded breakpoints.
inline u64 eval_piecewise_fixed(const PiecewisePoly& p, u64 x, const RingParams& rp, FixedEvalStats* stats = nullptr) {
  const int ell = rp.ell;
  const u64 poly = eval_poly_fixed(p.poly(), x, rp, stats);
  const i64 xv = to_signed(x, ell);
  switch (p.kind) {
    case Template::exp: {
      const i64 t = to_signed(encode_real(p.breakpoints[0], rp), ell);
      return xv < t ? 0 : poly;
    }
    case Template::gelu: {
      const i64 t1 = to_signed(encode_real(p.breakpoints[0], rp), ell);
      const i64 t2 = to_signed(encode_real(p.breakpoints[1], rp), ell);
      if (xv <= t1) return 0;
      if (xv <= t2) return poly;
      return x & rp.mask();
    }
    case Template::plain: return poly;
  }
  return poly;
}

struct DegradationReport {
  double max_abs_err = 0;  // max |fixed - real| over the sweep
  std::uint64_t overflows = 0;
  std::size_t points = 0;
};

// Sweeps every representable input in [lo, hi] with the given stride (in ULPs)
// and compares the fixed-point output against the real evaluation of the same
// piecewise polynomial.
inline DegradationReport fixed_degradation(const PiecewisePoly& p, const RingParams& rp, double lo, double hi,
                                           std::size_t stride = 1) {
  DegradationReport r;
  const i64 a = to_signed(encode_real(lo, rp), rp.ell);
  const i64 b = to_signed(encode_real(hi, rp), rp.ell);
  FixedEvalStats st;
  for (i64 v = a; v <= b; v += static_cast<i64>(stride)) {
    const u64 x = from_signed(v, rp.ell);
    const double xr = decode_real(x, rp);
    const double fixed = decode_real(eval_piecewise_fixed(p, x, rp, &st), rp);
    r.max_abs_err = std::max(r.max_abs_err, std::abs(fixed - eval_piecewise_real(p, xr)));
    ++r.points;
  }
  r.overflows = st.overflows;
  return r;
}

// ---------------------------------------------------------------------------
// Model file
//
//   template gelu
//   breakpoints -2.1 0.2
//   piece 0
//   piece c0 c1 c2
//   piece 0 1

inline void write_model(std::ostream& out, const PiecewisePoly& p) {
  out << "template " << template_name(p.kind) << '\n' << std::setprecision(17);
  out << "breakpoints";
  for (double b : p.breakpoints) out << ' ' << b;
  out << '\n';
  for (const auto& piece : p.pieces) {
    out << "piece";
    for (double c : piece) out << ' ' << c;
    out << '\n';
  }
}

inline void save_model(const std::string& path, const PiecewisePoly& p) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model " + path);
  write_model(out, p);
}

inline PiecewisePoly read_model(std::istream& in) {
  PiecewisePoly p;
  bool have_template = false;
  std::string line;
  while (std::getline(in, line)) {
    if (auto pos = line.find('#'); pos != std::string::npos) line.resize(pos);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    if (key == "template") {
      std::string name;
      ss >> name;
      p.kind = parse_template(name);
      have_template = true;
    } else if (key == "breakpoints") {
      for (double v; ss >> v;) p.breakpoints.push_back(v);
    } else if (key == "piece") {
      std::vector<double> c;
      for (double v; ss >> v;) c.push_back(v);
      p.pieces.push_back(std::move(c));
    } else {
      throw std::invalid_argument("model file: unknown key '" + key + "'");
    }
  }
  PRIVINFER_ENFORCE(have_template, "model file lacks a template line");
  p.validate();
  return p;
}

inline PiecewisePoly load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model " + path);
  return read_model(in);
}

}  // namespace privinfer
