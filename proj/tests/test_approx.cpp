#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "privinfer/approx.hpp"

using namespace privinfer;

TEST(Histogram, ParsesCommentsAndValidates) {
  std::istringstream in("# lower upper count\n-1 0 3\n\n0 1 1  # tail\n");
  const Histogram h = read_histogram(in);
  ASSERT_EQ(h.bins().size(), 2u);
  EXPECT_DOUBLE_EQ(h.masses()[0], 0.75);
  std::istringstream bad("1 0 3\n");
  EXPECT_THROW(read_histogram(bad), std::invalid_argument);
  std::ostringstream out;
  write_histogram(out, h);
  std::istringstream back(out.str());
  EXPECT_EQ(read_histogram(back).bins().size(), 2u);
}

TEST(Histogram, SyntheticMassesSumToOne) {
  for (const Histogram& h : {synthetic_gelu_histogram(), synthetic_softmax_histogram()}) {
    double s = 0;
    for (double m : h.masses()) s += m;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_DOUBLE_EQ(synthetic_gelu_histogram().lower(), -6.0);
  EXPECT_DOUBLE_EQ(synthetic_softmax_histogram().upper(), 0.0);
}

// A cubic is recovered exactly from any positive weighting.
TEST(WeightedFit, RecoversPolynomialExactly) {
  const RealFn f = [](double x) { return 1.0 - 2.0 * x + 0.5 * x * x + 0.25 * x * x * x; };
  const FitResult r = weighted_fit(f, -3.0, 2.0, 3, synthetic_gelu_histogram());
  ASSERT_EQ(r.coeffs.size(), 4u);
  EXPECT_NEAR(r.coeffs[0], 1.0, 1e-8);
  EXPECT_NEAR(r.coeffs[1], -2.0, 1e-8);
  EXPECT_NEAR(r.coeffs[2], 0.5, 1e-8);
  EXPECT_NEAR(r.coeffs[3], 0.25, 1e-8);
  EXPECT_NEAR(r.loss, 0.0, 1e-14);
}

// Point mass at one bin: the line through it cannot be pinned down, so the
// fit degrades gracefully to a constant that matches the only sample.
TEST(WeightedFit, PointMassReducesDegree) {
  const Histogram h({{-1.0, -0.5, 0.0}, {-0.5, 0.5, 10.0}, {0.5, 1.0, 0.0}});
  const FitResult r = weighted_fit([](double x) { return std::abs(x) + 2.0; }, -1.0, 1.0, 1, h);
  EXPECT_EQ(r.degree_used, 0);
  EXPECT_NEAR(eval_poly(r.coeffs, 0.0), 2.0, 1e-12);
}

TEST(WeightedFit, EmptyIntervalFallsBackToUniform) {
  const Histogram h({{0.0, 1.0, 1.0}});
  const FitResult r = weighted_fit([](double x) { return x * x; }, 5.0, 6.0, 2, h);
  EXPECT_TRUE(r.uniform_fallback);
  EXPECT_DOUBLE_EQ(r.loss, 0.0);
  EXPECT_NEAR(eval_poly(r.coeffs, 5.5), 30.25, 1e-6);
}

// |x| under a symmetric weighting: the best quadratic is even.
TEST(WeightedFit, AbsoluteValueIsFitEvenly) {
  const FitResult r = weighted_fit([](double x) { return std::abs(x); }, -1.0, 1.0, 2, uniform_histogram(-1, 1, 0.01));
  EXPECT_NEAR(r.coeffs[1], 0.0, 1e-9);
  EXPECT_GT(r.coeffs[2], 0.0);
}

TEST(Templates, SelectionConventions) {
  const PiecewisePoly g = make_gelu_template(-1.0, 1.0, {0.5, 0.5, 0.0});
  EXPECT_EQ(eval_piecewise_real(g, -1.0), 0.0);  // x <= T1 -> 0
  EXPECT_EQ(eval_piecewise_real(g, 1.0), 1.0);   // (T1, T2] -> quadratic
  EXPECT_EQ(eval_piecewise_real(g, 1.5), 1.5);   // identity
  const PiecewisePoly e = make_exp_template(-2.0, {1.0, 0.0, 0.0, 0.0});
  EXPECT_EQ(eval_piecewise_real(e, -2.0001), 0.0);
  EXPECT_EQ(eval_piecewise_real(e, -2.0), 1.0);
}

TEST(Search, RadiusZeroReproducesInitFit) {
  const Histogram h = synthetic_gelu_histogram();
  const SearchResult sr = search_breakpoints(gelu, Template::gelu, {-2.0, 0.5}, h, SearchOptions{0.0, 0.05});
  EXPECT_EQ(sr.candidates, 1u);
  const auto [p, loss] = fit_template(gelu, Template::gelu, {-2.0, 0.5}, h);
  EXPECT_EQ(sr.poly.breakpoints, p.breakpoints);
  EXPECT_DOUBLE_EQ(sr.loss, loss);
}

TEST(Search, FindsKnownKink) {
  const double kink = 0.37;
  const RealFn f = [&](double x) { return x < kink ? 0.0 : 2.0 * (x - kink); };
  const SearchResult sr =
      search_breakpoints(f, Template::exp, {0.0}, uniform_histogram(-2, 2, 0.01), SearchOptions{0.5, 0.05});
  EXPECT_NEAR(sr.poly.breakpoints[0], kink, 0.05);
}

TEST(Search, LossNonincreasingInRadius) {
  const Histogram h = synthetic_softmax_histogram();
  double prev = INFINITY;
  for (double r : {0.0, 0.1, 0.3, 0.5, 1.0}) {
    const double loss = template_exp(h, SearchOptions{r, 0.05}).loss;
    EXPECT_LE(loss, prev);
    prev = loss;
  }
}

TEST(Search, FirstCandidateWinsTies) {
  // Constant zero target: every breakpoint gives zero loss.
  const SearchResult sr = search_breakpoints([](double) { return 0.0; }, Template::exp, {0.0},
                                             uniform_histogram(-1, 1, 0.1), SearchOptions{0.2, 0.1});
  EXPECT_NEAR(sr.poly.breakpoints[0], -0.2, 1e-12);
}

TEST(FixedPoint, HornerMatchesRealWithinRounding) {
  const RingParams rp{32, 12};
  const std::vector<double> c = {0.5, 0.25, -0.125};
  FixedEvalStats st;
  for (double x = -3; x <= 3; x += 0.01) {
    const u64 y = eval_poly_fixed(c, encode_real(x, rp), rp, &st);
    EXPECT_NEAR(decode_real(y, rp), eval_poly(c, x), 0.01);
  }
  EXPECT_EQ(st.overflows, 0u);
}

TEST(FixedPoint, OverflowIsCounted) {
  const RingParams rp{16, 8};
  FixedEvalStats st;
  eval_poly_fixed({0.0, 0.0, 1.0}, encode_real(20.0, rp), rp, &st);
  EXPECT_GT(st.overflows, 0u);
}

TEST(FixedPoint, PiecewiseSelectionMatchesReal) {
  const RingParams rp{32, 12};
  const PiecewisePoly g = template_gelu(synthetic_gelu_histogram()).poly;
  const DegradationReport rep = fixed_degradation(g, rp, -6, 4, 7);
  EXPECT_EQ(rep.overflows, 0u);
  EXPECT_LT(rep.max_abs_err, 0.01);
}

TEST(ModelFile, RoundTrip) {
  const PiecewisePoly g = template_gelu(synthetic_gelu_histogram()).poly;
  std::stringstream s;
  write_model(s, g);
  const PiecewisePoly back = read_model(s);
  EXPECT_EQ(back.kind, g.kind);
  ASSERT_EQ(back.breakpoints.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(back.breakpoints[i], g.breakpoints[i]);
  ASSERT_EQ(back.pieces.size(), g.pieces.size());
  for (std::size_t i = 0; i < g.pieces.size(); ++i)
    for (std::size_t j = 0; j < g.pieces[i].size(); ++j) EXPECT_DOUBLE_EQ(back.pieces[i][j], g.pieces[i][j]);
}

TEST(WeightedFit, BeatsUnweightedFitOnItsOwnObjective) {
  const Histogram h = histogram_from_cdf([](double x) { return normal_cdf(x, 0, 1); }, -6, 4, 0.01);
  const FitResult weighted = weighted_fit(gelu, -2.1, 0.2, 2, h);
  const FitResult flat = weighted_fit(gelu, -2.1, 0.2, 2, uniform_histogram(-6, 4, 0.01));
  const Interval iv{-2.1, 0.2, true, true};
  EXPECT_LT(fixed_piece_loss(gelu, weighted.coeffs, iv, h), fixed_piece_loss(gelu, flat.coeffs, iv, h));
}

TEST(Templates, FittedExpIsNearlyContinuous) {
  const PiecewisePoly e = template_exp(synthetic_softmax_histogram()).poly;
  EXPECT_LE(std::abs(eval_poly(e.poly(), e.breakpoints[0])), 0.03);
  EXPECT_NEAR(eval_poly(e.poly(), 0.0), 1.0, 0.03);
}

TEST(Templates, FittedGeluNearZeroAtOrigin) {
  const PiecewisePoly g = template_gelu(synthetic_gelu_histogram()).poly;
  EXPECT_NEAR(eval_piecewise_real(g, 0.0), gelu(0.0), 0.05);
  EXPECT_EQ(eval_piecewise_real(g, -10.0), 0.0);
  EXPECT_EQ(eval_piecewise_real(g, 5.0), 5.0);
}
