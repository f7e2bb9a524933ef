#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "adfa_snn/backward_fn.hpp"
#include "adfa_snn/rng.hpp"

using namespace adfa;

namespace {

// 40-digit reference values of the surrogate derivative (h=0.4, t_ref=1, tau=20),
// computed offline with arbitrary-precision arithmetic.
struct RefPoint {
  double a;
  double value;
};
constexpr RefPoint kSurrogateRef[] = {
    {0.8, 0.1131697478985070183287679},  {0.41, 0.3443861409168986874778668},
    {1.0, 0.1059797886722289711171953},  {5.0, 0.04887764310336326807696156},
    {50.0, 0.002394642403127783685056682},
};

// Plain trapezoid correlation on a uniform grid, written independently.
double eta_oracle(const BackwardFnSpec& f, const BackwardFnSpec& g, double lo, double hi, double step) {
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  const auto inv = static_cast<double>(std::llround(1.0 / step));
  const long i0 = static_cast<long>(std::llround(lo / step));
  std::vector<double> x(static_cast<std::size_t>(n + 1)), fv(x.size()), gv(x.size());
  for (long i = 0; i <= n; ++i) {
    // integer offset over an integer denominator, so a = 0.4 is hit exactly
    x[static_cast<std::size_t>(i)] = static_cast<double>(i + i0) / inv;
    fv[static_cast<std::size_t>(i)] = eval(f, x[static_cast<std::size_t>(i)]);
    gv[static_cast<std::size_t>(i)] = eval(g, x[static_cast<std::size_t>(i)]);
  }
  auto integ = [&](const std::vector<double>& y) {
    double s = 0.5 * (y.front() + y.back());
    for (std::size_t i = 1; i + 1 < y.size(); ++i) s += y[i];
    return s * (hi - lo) / static_cast<double>(n);
  };
  const double fm = integ(fv) / (hi - lo), gm = integ(gv) / (hi - lo);
  std::vector<double> fg(x.size()), ff(x.size()), gg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    fg[i] = (fv[i] - fm) * (gv[i] - gm);
    ff[i] = (fv[i] - fm) * (fv[i] - fm);
    gg[i] = (gv[i] - gm) * (gv[i] - gm);
  }
  return integ(fg) / std::sqrt(integ(ff) * integ(gg));
}

}  // namespace

TEST(Surrogate, BelowThresholdIsZero) {
  const BackwardFnSpec f = LifSurrogate{};
  for (double a : {-100.0, -1.0, 0.0, 0.3, 0.4}) EXPECT_EQ(eval(f, a), 0.0) << a;
}

TEST(Surrogate, MatchesHighPrecisionReference) {
  const BackwardFnSpec f = LifSurrogate{};
  for (const auto& r : kSurrogateRef) EXPECT_NEAR(eval(f, r.a), r.value, 1e-9) << r.a;
  EXPECT_NEAR(eval(f, 0.8), 8.0 / (0.32 * std::pow(1.0 + 20.0 * std::log(2.0), 2)), 1e-15);
}

TEST(Surrogate, UsesItsOwnParams) {
  LifParams p;
  p.h_th = 1.0;
  const BackwardFnSpec f = LifSurrogate{p};
  EXPECT_EQ(eval(f, 0.8), 0.0);
  EXPECT_GT(eval(f, 1.5), 0.0);
}

TEST(Eval, NonFiniteInputThrows) {
  const BackwardFnSpec specs[] = {LifSurrogate{}, Gaussian{}, Opto{}, sample_prfs(1, 4, 0.01)};
  for (const auto& s : specs) {
    EXPECT_THROW(eval(s, std::nan("")), NumericError);
    EXPECT_THROW(eval(s, std::numeric_limits<double>::infinity()), NumericError);
  }
}

TEST(Opto, BoundedAndPeaks) {
  const Opto o{0.1, 150.0};
  const BackwardFnSpec s = o;
  for (double a = -500; a <= 500; a += 0.37) {
    const double v = eval(s, a);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  // omega*a + theta = n*pi  ->  1.
  const double a_peak = (48.0 * std::numbers::pi - 150.0) / 0.1;
  EXPECT_NEAR(eval(s, a_peak), 1.0, 1e-12);
}

TEST(Gaussian, ShapeAndDefaults) {
  const Gaussian g{};
  EXPECT_EQ(g.a, 1.0);
  const BackwardFnSpec s = Gaussian{2.0, 0.4, 13.0};
  EXPECT_DOUBLE_EQ(eval(s, 0.4), 2.0);
  EXPECT_NEAR(eval(s, 13.4), 2.0 * std::exp(-0.5), 1e-15);
  EXPECT_THROW(validate(BackwardFnSpec{Gaussian{1.0, 0.0, 0.0}}), ConfigError);
  EXPECT_THROW(validate(BackwardFnSpec{Gaussian{-1.0, 0.0, 1.0}}), ConfigError);
}

TEST(Prfs, SampleIsNormalized) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Prfs p = sample_prfs(seed, 4, 0.01);
    ASSERT_EQ(p.k(), 4u);
    EXPECT_NEAR(coefficient_l1(p), 1.0, 1e-12);
    EXPECT_EQ(p.m, 1.0);
    EXPECT_EQ(p.omega, 0.01);
  }
}

TEST(Prfs, NonNegativeWithUnitShift) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const BackwardFnSpec g = sample_prfs(seed, 4, 0.01);
    for (double a = -300; a <= 300; a += 0.5) ASSERT_GE(eval(g, a), 0.0);
  }
}

TEST(Prfs, MatchesSeriesDefinition) {
  const Prfs p = sample_prfs(17, 3, 0.05);
  const BackwardFnSpec g = p;
  for (double a : {-7.0, 0.0, 1.3, 42.0}) {
    double s = 1.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double arg = 0.05 * static_cast<double>(k + 1) * std::numbers::pi * a;
      s += p.p[k] * std::sin(arg) + p.q[k] * std::cos(arg);
    }
    EXPECT_NEAR(eval(g, a), s, 1e-14);
  }
}

TEST(Prfs, FundamentalPeriodAtOmegaHundredth) {
  const BackwardFnSpec g = sample_prfs(5, 4, 0.01);
  for (double a : {-30.0, 0.0, 12.5, 77.0}) EXPECT_NEAR(eval(g, a), eval(g, a + 200.0), 1e-12);
}

TEST(Prfs, ValidationRejectsBadSpecs) {
  Prfs p = sample_prfs(1, 4, 0.01);
  p.m = -0.5;
  EXPECT_THROW(validate(BackwardFnSpec{p}), ConfigError);
  p = sample_prfs(1, 4, 0.01);
  p.q.pop_back();
  EXPECT_THROW(validate(BackwardFnSpec{p}), ConfigError);
}

TEST(Correlation, SelfCorrelationIsOne) {
  const BackwardFnSpec f = LifSurrogate{};
  EXPECT_NEAR(correlation(f, f), 1.0, 1e-9);
  const BackwardFnSpec o = Opto{};
  EXPECT_NEAR(correlation(o, o), 1.0, 1e-9);
}

TEST(Correlation, ConstantIsUndefined) {
  Prfs c;
  c.p = {0.0};
  c.q = {0.0};
  c.m = 2.0;
  c.omega = 0.01;
  EXPECT_THROW(correlation(BackwardFnSpec{c}, BackwardFnSpec{LifSurrogate{}}), UndefinedCorrelation);
  EXPECT_THROW(correlation(BackwardFnSpec{LifSurrogate{}}, BackwardFnSpec{c}), UndefinedCorrelation);
}

TEST(Correlation, MatchesIndependentQuadrature) {
  const BackwardFnSpec f = LifSurrogate{};
  const BackwardFnSpec specs[] = {Opto{0.1, 150}, Gaussian{1, 0.4, 10}, sample_prfs(3, 4, 0.01)};
  for (const auto& g : specs) EXPECT_NEAR(correlation(g, f), eta_oracle(g, f, -100, 100, 0.01), 1e-10);
}

TEST(Correlation, SymmetricProperty) {
  const BackwardFnSpec f = LifSurrogate{};
  for (std::uint64_t s = 0; s < 20; ++s) {
    const BackwardFnSpec g = sample_prfs(s, 4, 0.01);
    EXPECT_NEAR(correlation(g, f), correlation(f, g), 1e-12);
  }
}

TEST(Correlation, AffineInvarianceProperty) {
  // alpha*g + beta for a PRFS is again a PRFS: scale the coefficients and shift m.
  const BackwardFnSpec f = LifSurrogate{};
  Engine eng = make_engine(2024, {1});
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Prfs g = sample_prfs(1000 + s, 4, 0.01);
    const double alpha = uniform(eng, 0.1, 10.0);
    const double beta = uniform(eng, 0.0, 5.0);
    Prfs h = g;
    for (auto& v : h.p) v *= alpha;
    for (auto& v : h.q) v *= alpha;
    h.m = alpha * g.m + beta;
    const CorrelationConfig cc;
    const auto nodes = quadrature_nodes(cc);
    const auto hv = detail::sample_fn(h, nodes);
    const auto gv = detail::sample_fn(g, nodes);
    for (std::size_t i = 0; i < nodes.size(); i += 997) ASSERT_NEAR(hv[i], alpha * gv[i] + beta, 1e-9);
    EXPECT_NEAR(correlation(centered_values(hv, cc, "h"), centered_samples(f, cc, nodes), cc),
                correlation(BackwardFnSpec{g}, f), 1e-6);
  }
}

TEST(Correlation, StepHalvingConverges) {
  const BackwardFnSpec f = LifSurrogate{};
  CorrelationConfig coarse, fine;
  fine.step = 0.005;
  const BackwardFnSpec specs[] = {Opto{0.1, 150}, Gaussian{1, 0.4, 10}, sample_prfs(8, 4, 0.01)};
  // f' ~ 1/(e ln^2 e) just above threshold, so the error only falls like 1/ln(1/step).
  for (const auto& g : specs) EXPECT_LT(std::abs(correlation(g, f, coarse) - correlation(g, f, fine)), 1e-2);
}

TEST(Correlation, GridLandsOnThresholdAndStaysFinite) {
  const auto nodes = quadrature_nodes(CorrelationConfig{});
  ASSERT_EQ(nodes.size(), 20001u);
  EXPECT_EQ(nodes.front(), -100.0);
  EXPECT_EQ(nodes.back(), 100.0);
  const BackwardFnSpec f = LifSurrogate{};
  for (double x : nodes) ASSERT_TRUE(std::isfinite(eval(f, x)));
}

TEST(Bins, MembershipAndEdges) {
  const std::vector<double> edges{-0.6, -0.4, -0.2, 0, 0.2, 0.4, 0.6};
  EXPECT_EQ(bin_index(edges, 0.45), 5);
  EXPECT_EQ(bin_index(edges, 0.4), 5);    // interior edge -> upper bin
  EXPECT_EQ(bin_index(edges, -0.2), 2);
  EXPECT_EQ(bin_index(edges, 0.6), 5);    // top edge closes the last bin
  EXPECT_EQ(bin_index(edges, -0.6), 0);
  EXPECT_EQ(bin_index(edges, 0.61), -1);  // overflow
  EXPECT_EQ(bin_index(edges, -0.7), -1);
  const auto b = bin_etas({0.45, 0.0, -0.65, 0.7, -0.1}, edges);
  EXPECT_EQ(b.bin_count(), 6u);
  EXPECT_EQ(b.members[5], std::vector<std::size_t>{0});
  EXPECT_EQ(b.members[3], std::vector<std::size_t>{1});
  EXPECT_EQ(b.members[2], std::vector<std::size_t>{4});
  EXPECT_EQ(b.overflow.size(), 2u);
  EXPECT_EQ(b.total(), 5u);
  EXPECT_THROW(bin_etas({0.1}, {0.5, 0.1}), ConfigError);
}

TEST(Bins, PartitionCompleteness) {
  std::vector<Prfs> specs;
  for (std::uint64_t s = 0; s < 300; ++s) specs.push_back(sample_prfs(s, 4, 0.01));
  const auto b = bin_by_correlation(specs, LifSurrogate{}, {-0.6, -0.4, -0.2, 0, 0.2, 0.4, 0.6});
  EXPECT_EQ(b.total(), specs.size());
}

TEST(Serialization, RoundTripAllFamilies) {
  const BackwardFnSpec specs[] = {LifSurrogate{}, Gaussian{1.5, 0.3, 12.0}, Opto{0.15, 155.0},
                                  sample_prfs(99, 4, 0.01)};
  for (const auto& s : specs) {
    const auto back = from_text(to_text(s));
    EXPECT_EQ(back, s) << to_text(s);
  }
}

TEST(Serialization, RejectsUnknownKeys) {
  EXPECT_THROW(from_text("backward.family=opto\nbackward.c=3\n"), ConfigError);
  EXPECT_THROW(from_text("backward.family=sigmoid\n"), ConfigError);
}
