#include "fkkam/lindstedt.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "test_support.hpp"

namespace fkkam {
namespace {

using testing::cos_mode;
using testing::kGolden;
using testing::sin_mode;
using testing::standard_model;

constexpr int kN = 64;
// Multi-harmonic KAM runs need the finer grid to stay clear of the band-edge stall.
constexpr int kFine = 128;

// W = cos(2 pi theta_1) + 0.3 cos(2 pi (theta_1 + theta_2)), depends on eta.
ModelConfig coupled_model(double mu, double eta = 0.0) {
  ModelConfig config = standard_model(1.0, eta);
  config.potential = Potential(2, {{{1, 0}, Complex(0.5, 0.0)}, {{1, 1}, Complex(0.15, 0.0)}}).scaled(mu);
  return config;
}

TEST(SeriesTest, OrderOneClosedForm) {
  const auto s = expand_series(standard_model(1.0), 1, 0.0, nullptr, {}, kN);
  ASSERT_EQ(s.v.size(), 2u);
  const double divisor = 2.0 * std::cos(kTwoPi * kGolden) - 2.0;
  EXPECT_LT(sup_norm(s.v[1] - cos_mode(kN, 1, -1.0 / divisor)), 1e-13);
  EXPECT_NEAR(s.lambda[1], 0.0, 1e-15);
  EXPECT_NEAR(s.sigma[1], 0.0, 1e-15);
  const auto c1 = solve_constant_cohomology(sin_mode(kN, 1, -kTwoPi), standard_model(1.0).freq);
  EXPECT_LT(sup_norm(s.c[1] - c1), 1e-12);
}

TEST(SeriesTest, OrderOneMeanTerms) {
  // A constant potential shifts lambda; sigma^1 = -<dW o 0>.
  ModelConfig config = standard_model(1.0);
  config.potential = Potential(2, {{{0, 0}, Complex(0.7, 0.0)}, {{0, 1}, Complex(0.2, 0.1)}});
  config.beta = {1.0, 0.5};
  config.eta = 0.3;
  const auto s = expand_series(config, 1, 0.0, nullptr, {}, kN);
  const double w = 0.7 + 2.0 * std::real(Complex(0.2, 0.1) * std::polar(1.0, kTwoPi * 0.3));
  const double dw = 2.0 * std::real(Complex(0.0, kTwoPi * 0.5) * Complex(0.2, 0.1) * std::polar(1.0, kTwoPi * 0.3));
  EXPECT_NEAR(s.lambda[1], -w, 1e-13);
  EXPECT_NEAR(s.sigma[1], -dw, 1e-13);
  EXPECT_LT(sup_norm(s.v[1]), 1e-14);
}

TEST(SeriesTest, ZeroPotentialGivesZeroSeries) {
  ModelConfig config = standard_model(0.0);
  config.potential = Potential();
  const auto s = expand_series(config, 4, 0.0, nullptr, {}, kN);
  for (int k = 1; k <= 4; ++k) {
    EXPECT_EQ(sup_norm(s.v[k]), 0.0);
    EXPECT_EQ(sup_norm(s.c[k]), 0.0);
    EXPECT_EQ(s.sigma[k], 0.0);
    EXPECT_EQ(s.lambda[k], 0.0);
  }
  const std::vector<double> mus{0.01, 0.02};
  EXPECT_TRUE(truncation_residual(s, config, mus).skipped);
}

TEST(SeriesTest, NormalizedCoefficients) {
  const auto s = expand_series(coupled_model(1.0, 0.2), 4, 0.0, nullptr, {}, kN);
  for (int k = 1; k <= 4; ++k) {
    EXPECT_NEAR(average(s.v[k]), 0.0, 1e-14);
    EXPECT_NEAR(average(s.c[k]), 0.0, 1e-13);
  }
}

TEST(SeriesTest, ParityOfCosineModel) {
  // W(theta_1 + 1/2) = -W maps v -> -v(psi + 1/2) at -mu, so odd orders flip sign.
  const auto s = expand_series(standard_model(1.0), 5, 0.0, nullptr, {}, kN);
  const std::vector<double> half{0.5};
  for (int k = 1; k <= 5; ++k) {
    const double sign = k % 2 == 0 ? 1.0 : -1.0;
    EXPECT_LT(sup_norm(translate(s.v[k], half) - sign * s.v[k]), 1e-12) << k;
    if (k % 2 == 1) EXPECT_NEAR(s.sigma[k], 0.0, 1e-12) << k;
  }
  // The counterterm starts at fourth order for a single harmonic.
  EXPECT_NEAR(s.sigma[2], 0.0, 1e-12);
  EXPECT_GT(std::abs(s.sigma[4]), 1.0);
}

TEST(SeriesTest, EvaluateAtBaseReturnsBase) {
  const auto s = expand_series(standard_model(1.0), 3, 0.0, nullptr, {}, kN);
  const auto st = evaluate_series(s, 0.0);
  EXPECT_EQ(sup_norm(st.v), 0.0);
  EXPECT_LT(sup_norm(st.c - 1.0), 1e-15);
  const auto lin = evaluate_series(s, 0.1);
  const auto expect = s.v[1] * 0.1 + s.v[2] * 0.01 + s.v[3] * 0.001;
  EXPECT_LT(sup_norm(lin.v - expect), 1e-15);
}

class TruncationTest : public ::testing::TestWithParam<int> {};

TEST_P(TruncationTest, ResidualExponent) {
  const int order = GetParam();
  const auto config = coupled_model(1.0, 0.1);
  const auto s = expand_series(config, order, 0.0, nullptr, {}, kN);
  const std::vector<double> mus{0.004, 0.006, 0.009, 0.0135, 0.02};
  const auto fit = truncation_residual(s, config, mus);
  ASSERT_FALSE(fit.skipped);
  EXPECT_NEAR(fit.slope_e, order + 1, 0.2);
  EXPECT_NEAR(fit.slope_f, order + 1, 0.2);
}

INSTANTIATE_TEST_SUITE_P(Orders, TruncationTest, ::testing::Values(1, 2, 3, 4));

TEST(SeriesTest, ExpansionAroundNonzeroBase) {
  const double mu0 = 0.05;
  const auto config = coupled_model(1.0);
  KamOptions opts;
  opts.tol = 1e-13;
  const auto kam = run_kam(with_potential_scale(config, mu0), SolverState::trivial(1, kFine), opts);
  const auto s = expand_series(config, 3, mu0, &kam.state, {}, kFine);
  EXPECT_LT(sup_norm(evaluate_series(s, mu0).v - kam.state.v), 1e-15);
  const std::vector<double> mus{0.054, 0.056, 0.059, 0.0635, 0.07};
  const auto fit = truncation_residual(s, config, mus);
  EXPECT_NEAR(fit.slope_e, 4.0, 0.2);
  EXPECT_NEAR(fit.slope_f, 4.0, 0.2);
}

TEST(SeriesTest, AgreesWithKam) {
  const auto config = standard_model(1.0);
  const auto s = expand_series(config, 4, 0.0, nullptr, {}, kN);
  KamOptions opts;
  opts.tol = 1e-13;
  std::vector<double> err;
  for (double mu : {0.01, 0.02}) {
    const auto kam = run_kam(with_potential_scale(config, mu), SolverState::trivial(1, kN), opts);
    const auto st = evaluate_series(s, mu);
    const double bound = 200.0 * std::pow(mu, 5);
    err.push_back(sup_norm(st.v - kam.state.v));
    EXPECT_LT(err.back(), bound) << mu;
    EXPECT_LT(std::abs(st.sigma - kam.state.sigma), bound) << mu;
    EXPECT_LT(std::abs(st.lambda - kam.state.lambda), bound) << mu;
  }
  EXPECT_NEAR(std::log2(err[1] / err[0]), 5.0, 0.3);
}

TEST(SeriesTest, SeriesGuessConvergesFast) {
  const auto config = standard_model(1.0);
  const auto s = expand_series(config, 3, 0.0, nullptr, {}, kN);
  KamOptions opts;
  opts.tol = 1e-12;
  const auto kam = run_kam(with_potential_scale(config, 0.05), evaluate_series(s, 0.05), opts);
  EXPECT_LE(kam.iterations, 2);
}

TEST(SeriesTest, GrowthGuard) {
  SeriesOptions opts;
  opts.growth_bound = 1e-3;
  try {
    expand_series(standard_model(1.0), 4, 0.0, nullptr, opts, kN);
    FAIL() << "expected SeriesDivergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SeriesDivergence);
  }
}

TEST(SeriesTest, NonzeroBaseRequiresState) {
  EXPECT_THROW(expand_series(standard_model(1.0), 2, 0.1), Error);
}

TEST(EquilibriumSeriesTest, SigmaVanishesAndResidualExponent) {
  const auto config = coupled_model(1.0, 0.3);
  const auto s = expand_equilibrium_series(config, 4, kN);
  for (double sig : s.sigma) EXPECT_LT(std::abs(sig), 1e-12);
  const std::vector<double> mus{0.004, 0.006, 0.009, 0.0135, 0.02};
  const auto fit = truncation_residual(s, config, mus);
  EXPECT_NEAR(fit.slope_e, 5.0, 0.2);
}

TEST(EquilibriumSeriesTest, MatchesPairSeriesInV) {
  // At the trivial base the v-hierarchies coincide while sigma stays zero
  // through order 2 of the pair expansion.
  const auto config = standard_model(1.0);
  const auto eq = expand_equilibrium_series(config, 2, kN);
  const auto pair = expand_series(config, 2, 0.0, nullptr, {}, kN);
  EXPECT_LT(sup_norm(eq.v[1] - pair.v[1]), 1e-14);
  EXPECT_LT(sup_norm(eq.v[2] - pair.v[2]), 1e-14);
  EXPECT_NEAR(eq.lambda[2], pair.lambda[2], 1e-14);
}

std::vector<SolverState> eta_family(const ModelConfig& base, int count) {
  std::vector<SolverState> family;
  KamOptions opts;
  opts.tol = 1e-13;
  for (int m = 0; m < count; ++m) {
    ModelConfig cfg = base;
    cfg.eta = static_cast<double>(m) / count;
    family.push_back(run_kam(cfg, SolverState::trivial(1, kFine), opts).state);
  }
  return family;
}

TEST(SymmetryTest, TransformedFamilySolves) {
  const auto config = coupled_model(0.05);
  const auto family = eta_family(config, 32);
  const auto report = check_symmetry(family, config, 0.01);
  EXPECT_LT(report.eta_tail, 1e-8);
  EXPECT_LT(report.max_res_e, 1e-9);
  EXPECT_LT(report.max_res_f, 1e-9);
  const auto moved = transform_family(family, config, 0.01);
  EXPECT_GT(sup_norm(moved[0].state.v - family[0].v), 1e-3);
}

TEST(SymmetryTest, ZeroShiftIsIdentity) {
  const auto config = coupled_model(0.05);
  const auto family = eta_family(config, 16);
  const auto moved = transform_family(family, config, 0.0);
  for (std::size_t m = 0; m < family.size(); ++m) {
    EXPECT_LT(sup_norm(moved[m].state.v - family[m].v), 1e-12);
    EXPECT_NEAR(moved[m].state.lambda, family[m].lambda, 1e-15);
  }
}

TEST(SymmetryTest, CoarseEtaGridIsRejected) {
  const auto config = coupled_model(0.4);
  std::vector<SolverState> family;
  // Samples with a pure high harmonic in eta.
  for (int m = 0; m < 8; ++m) {
    auto st = SolverState::trivial(1, kN);
    st.sigma = std::cos(kTwoPi * 3.0 * m / 8.0);
    family.push_back(st);
  }
  try {
    transform_family(family, config, 0.01);
    FAIL() << "expected InterpolationUnderResolved";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InterpolationUnderResolved);
  }
}

}  // namespace
}  // namespace fkkam
