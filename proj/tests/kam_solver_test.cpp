#include "fkkam/kam_solver.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "test_support.hpp"

namespace fkkam {
namespace {

using testing::cos_mode;
using testing::standard_model;

constexpr int kN = 64;

KamResult solve_standard(double mu, int n = kN) {
  KamOptions opts;
  opts.tol = 1e-12;
  return run_kam(standard_model(mu), SolverState::trivial(1, n), opts);
}

TEST(BuildFactorsTest, UnitCoefficient) {
  const auto f = build_factors(SolverState::trivial(1, kN), standard_model(0.0));
  EXPECT_LT(sup_norm(f.a - 1.0), 1e-15);
  EXPECT_NEAR(f.chain.outer().a_bar(), 1.0, 1e-15);
  EXPECT_NEAR(f.chain.inner().a_bar(), 1.0, 1e-15);
  EXPECT_EQ(f.chain.branch(), ChainCase::Case5d);
}

TEST(BuildFactorsTest, ConstantCoefficient) {
  auto s = SolverState::trivial(1, kN);
  s.c = SpectralField::constant(1, kN, std::exp(0.05));
  const auto f = build_factors(s, standard_model(0.0));
  EXPECT_NEAR(f.chain.outer().a_bar(), std::exp(-0.05), 1e-15);
  EXPECT_NEAR(f.chain.inner().a_bar(), std::exp(0.05), 1e-15);
  EXPECT_EQ(f.chain.branch(), ChainCase::Case5a);
}

TEST(BuildFactorsTest, ReciprocalIdentity) {
  std::mt19937_64 rng(3);
  auto s = SolverState::trivial(1, kN);
  s.c = 1.0 + 0.2 * cos_mode(kN, 1) + random_field(1, kN, 2, 0.05, rng);
  const auto f = build_factors(s, standard_model(0.0));
  std::vector<double> prod(kN);
  for (int i = 0; i < kN; ++i) prod[i] = f.a.values()[i] * f.c_plus.values()[i];
  for (double p : prod) EXPECT_NEAR(p, 1.0, 1e-13);
  const double mean_log = average(log_field(s.c));
  EXPECT_NEAR(f.chain.outer().a_bar(), std::exp(-mean_log), 1e-12);
  EXPECT_NEAR(f.chain.inner().a_bar(), std::exp(mean_log), 1e-12);
}

TEST(LinearSolveTest, ZeroRightHandSides) {
  const auto f = build_factors(SolverState::trivial(1, kN), standard_model(0.0));
  const auto ag = solve_AG(f, SpectralField::zeros(1, kN));
  EXPECT_EQ(sup_norm(ag.x), 0.0);
  EXPECT_EQ(ag.constant, 0.0);
  const auto bd = solve_BD(f, SolverState::trivial(1, kN));
  EXPECT_EQ(sup_norm(bd.x), 0.0);
  EXPECT_EQ(bd.constant, 0.0);
  const auto sc = solve_sigma_c(f, ag.x, bd.x, SpectralField::zeros(1, kN));
  EXPECT_EQ(sc.sigma_hat, 0.0);
  EXPECT_EQ(sup_norm(sc.c_hat), 0.0);
}

TEST(LinearSolveTest, EqualAverageConstantIsMean) {
  const auto f = build_factors(SolverState::trivial(1, kN), standard_model(0.0));
  std::mt19937_64 rng(9);
  const auto e = random_field(1, kN, 10, 1.0, rng) + 0.4;
  const auto ag = solve_AG(f, e);
  EXPECT_NEAR(ag.constant, -0.4, 1e-15);
  EXPECT_LT(std::abs(average(ag.x)), 1e-15);
}

TEST(LinearSolveTest, ChainedSolvesInvertFactorProduct) {
  const auto config = standard_model(0.05);
  auto s = SolverState::trivial(1, kN);
  for (int i = 0; i < 2; ++i) s = newton_step(s, config).state;
  const auto f = build_factors(s, config);
  ASSERT_EQ(f.chain.branch(), ChainCase::Case5a);
  const auto e = equilibrium_residual(s, config, f.potential.w);
  const auto ag = solve_AG(f, e);
  EXPECT_LT(sup_norm(f.chain.apply(ag.x) + ag.constant + e), 1e-13);
  EXPECT_LT(std::abs(average(ag.x)), 1e-15);
  const auto bd = solve_BD(f, s);
  EXPECT_LT(sup_norm(f.chain.apply(bd.x) + bd.constant + s.v), 1e-13);
  // A+ A- v = v_+ + v_- - (c + 1/c_+) v
  const auto& om = config.freq.omega;
  const auto direct = translate(bd.x, om) + translate(bd.x, negated(om)) - (s.c + f.a) * bd.x;
  EXPECT_LT(sup_norm(f.chain.apply(bd.x) - direct), 1e-13);
}

TEST(LinearSolveTest, SigmaCWeightNearMinusOne) {
  const auto config = standard_model(0.01);
  const auto s = SolverState::trivial(1, kN);
  const auto f = build_factors(s, config);
  const auto e = equilibrium_residual(s, config, f.potential.w);
  const auto fr = factorization_residual(s, config, f.potential.dw);
  const auto u = solve_linearized(f, s, e, fr);
  const auto ddw_c = f.potential.ddw * f.c_plus;
  const auto weight = -1.0 * f.c_plus - ddw_c * u.B;
  EXPECT_NEAR(average(weight), -1.0, 1e-12);
  EXPECT_GT(u.transversality, 0.1);
  // Linearized factorization equation.
  const auto lhs = -1.0 * f.c_plus * u.c_hat + f.factor * translate(u.c_hat, config.freq.omega) + weight * u.sigma_hat;
  EXPECT_LT(sup_norm(lhs - (ddw_c * u.A - fr)), 1e-13);
  EXPECT_LT(std::abs(average(u.c_hat)), 1e-15);
  EXPECT_LT(std::abs(average(u.v_hat)), 1e-15);
  EXPECT_NEAR(u.lambda_hat, u.G + u.sigma_hat * u.D, 1e-16);
}

TEST(KamTest, ZeroPotentialConvergesImmediately) {
  const auto r = solve_standard(0.0);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].branch, "init");
}

TEST(KamTest, StandardModelConverges) {
  const auto r = solve_standard(0.05);
  EXPECT_LE(r.iterations, 7);
  const auto config = standard_model(0.05);
  EXPECT_LT(sup_norm(equilibrium_residual(r.state, config)), 1e-12);
  EXPECT_LT(sup_norm(factorization_residual(r.state, config)), 1e-12);
  EXPECT_LT(std::abs(average(r.state.v)), 1e-12);
  for (const auto& step : r.steps) {
    EXPECT_TRUE(step.branch_AG == ChainCase::Case5a || step.branch_AG == ChainCase::Case5d);
    EXPECT_GE(step.res_e_after, 0.0);
  }
  for (const auto& rec : r.history) EXPECT_LT(std::abs(rec.norm_v), 1.0);
}

TEST(KamTest, ExactSolutionIsFixedPoint) {
  const auto r = solve_standard(0.05);
  const auto step = newton_step(r.state, standard_model(0.05));
  EXPECT_LT(step.report.norm_v_hat, 1e-13);
  EXPECT_LT(step.report.norm_c_hat, 1e-13);
  EXPECT_LT(step.report.abs_sigma_hat, 1e-13);
  EXPECT_LT(step.report.abs_lambda_hat, 1e-13);
}

TEST(KamTest, NondegeneracyAfterThreeSteps) {
  const auto config = standard_model(0.05);
  auto s = SolverState::trivial(1, kN);
  for (int i = 0; i < 3; ++i) s = newton_step(s, config).state;
  const auto report = check_nondegeneracy(s, config);
  EXPECT_TRUE(report.passed()) << describe_failures(report);
  EXPECT_LT(sup_norm(s.c - 1.0), 0.2);
}

TEST(KamTest, QuadraticResidualLaw) {
  const auto r = solve_standard(0.05);
  int checked = 0;
  for (const auto& step : r.steps) {
    const double before = step.res_e_before + step.res_f_before;
    const double after = step.res_e_after + step.res_f_after;
    if (after < 1e-13) continue;
    EXPECT_LT(after, 0.5 * before * before);
    ++checked;
  }
  EXPECT_GE(checked, 3);
}

TEST(KamTest, ResolutionTailSmallOnAdequateGrid) {
  const auto r = solve_standard(0.05, 128);
  for (const auto& step : r.steps) EXPECT_LT(step.resolution_tail, 1e-12);
  EXPECT_FALSE(r.under_resolved);
}

TEST(KamTest, CorrectionProportionalToResidual) {
  const auto r = solve_standard(0.05);
  std::vector<double> ratios;
  for (const auto& step : r.steps) {
    const double eps = step.res_e_before + step.res_f_before;
    if (eps <= 1e-3 && eps >= 1e-7) ratios.push_back(step.norm_v_hat / eps);
  }
  ASSERT_GE(ratios.size(), 1u);
  for (double q : ratios) EXPECT_LT(q, 10.0);
}

TEST(KamTest, NormalizationEnforcedForShiftedGuess) {
  const auto config = standard_model(0.05);
  const auto reference = solve_standard(0.05);
  auto guess = SolverState::trivial(1, kN);
  guess.v += 0.3;
  const auto r = run_kam(config, guess);
  EXPECT_LT(state_distance(r.state, reference.state), 1e-10);
}

TEST(KamTest, MaxIterationsCarriesHistory) {
  KamOptions opts;
  opts.max_iter = 1;
  try {
    run_kam(standard_model(0.05), SolverState::trivial(1, kN), opts);
    FAIL() << "expected MaxIterations";
  } catch (const KamError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MaxIterations);
    EXPECT_EQ(e.partial().history.size(), 2u);
  }
}

TEST(KamTest, NondegenerateGuessRequired) {
  auto guess = SolverState::trivial(1, kN);
  guess.sigma = 0.9;
  try {
    run_kam(standard_model(0.05), guess);
    FAIL() << "expected NondegeneracyViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NondegeneracyViolation);
  }
}

TEST(UniquenessTest, ZeroPerturbationIsIdentity) {
  const auto r = solve_standard(0.05);
  const auto report = uniqueness_probe(standard_model(0.05), r.state, 0.0, 1);
  EXPECT_LT(report.max_distance, 1e-13);
}

TEST(UniquenessTest, SmallPerturbationsReconverge) {
  const auto r = solve_standard(0.05);
  const auto report = uniqueness_probe(standard_model(0.05), r.state, 1e-4, 3);
  EXPECT_LT(report.max_distance, 1e-9);
}

}  // namespace
}  // namespace fkkam
