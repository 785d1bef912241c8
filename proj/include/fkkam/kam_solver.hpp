#pragma once

// Factorized quasi-Newton iteration for the pair (equilibrium, factorization).
// Each step solves
//
//     A+ A- A + G = -e,   A+ A- B + D = -v,
//     -c_+ chat + V chat_+ + (-c_+ - ddW c_+ B) sigmahat = ddW c_+ A - f,
//
// with V = -c + 2 - dW - sigma, and updates v += A + sigmahat B,
// lambda += G + sigmahat D, sigma += sigmahat, c += chat.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fkkam/errors.hpp"
#include "fkkam/fk_model.hpp"
#include "fkkam/spectral_field.hpp"
#include "fkkam/twisted.hpp"

namespace fkkam {

/// Everything about the linearization at a state that does not depend on the
/// right-hand sides.
struct FactorData {
  SpectralField a;       // 1/c_+
  SpectralField c_plus;
  PotentialTerms potential;
  SpectralField factor;  // -c + 2 - dW - sigma
  TwistedChain chain;    // A+ A-
  TwistedOperator factorization;  // chat -> V chat_+ - c_+ chat
};

inline FactorData build_factors(const SolverState& s, const ModelConfig& config) {
  check_frequency_shape(s.c, config.freq);
  if (min_value(s.c) <= kPositivityFloor)
    fail(ErrorKind::NonPositiveCoefficient, "factorization coefficient c must be positive");
  PotentialTerms terms = eval_potential_terms(s.v, config);
  TwistedChain chain = build_newton_chain(s.c, config.freq);
  SpectralField c_plus = translate(s.c, config.freq.omega);
  SpectralField factor = ((2.0 - s.sigma) - s.c) - terms.dw;
  TwistedOperator fac(factor, c_plus, config.freq);
  SpectralField a = chain.outer().a();
  return FactorData{std::move(a), std::move(c_plus), std::move(terms), std::move(factor), std::move(chain),
                    std::move(fac)};
}

struct ChainedUpdate {
  SpectralField x;
  double constant = 0.0;
  ChainCase branch = ChainCase::Case5a;
  double transversality = 1.0;
};

/// A+ A- A + G = -e with <A> = 0.
inline ChainedUpdate solve_AG(const FactorData& f, const SpectralField& e) {
  auto sol = f.chain.solve(-1.0 * e);
  return {std::move(sol.x), sol.constant, sol.branch, sol.transversality};
}

/// A+ A- B + D = -v with <B> = 0.
inline ChainedUpdate solve_BD(const FactorData& f, const SolverState& s) {
  auto sol = f.chain.solve(-1.0 * s.v);
  return {std::move(sol.x), sol.constant, sol.branch, sol.transversality};
}

struct SigmaCUpdate {
  double sigma_hat = 0.0;
  SpectralField c_hat;
  AverageBranch branch = AverageBranch::EqualAverage;
  double transversality = 1.0;
};

/// Linearized factorization equation for (sigmahat, chat) with <chat> = 0.
inline SigmaCUpdate solve_sigma_c(const FactorData& f, const SpectralField& A, const SpectralField& B,
                                  const SpectralField& residual_f) {
  const SpectralField ddw_c = f.potential.ddw * f.c_plus;
  const SpectralField rhs = ddw_c * A - residual_f;
  const SpectralField weight = f.c_plus + ddw_c * B;  // minus the coefficient of sigmahat
  auto sol = solve_twisted(f.factorization, rhs, weight);
  return {sol.lambda, std::move(sol.v), sol.branch, sol.transversality};
}

struct NewtonUpdate {
  SpectralField A;
  SpectralField B;
  double G = 0.0;
  double D = 0.0;
  double sigma_hat = 0.0;
  double lambda_hat = 0.0;
  SpectralField v_hat;
  SpectralField c_hat;
  ChainCase branch_AG = ChainCase::Case5a;
  ChainCase branch_BD = ChainCase::Case5a;
  double transversality = 1.0;
};

inline NewtonUpdate solve_linearized(const FactorData& f, const SolverState& s, const SpectralField& e,
                                     const SpectralField& residual_f) {
  auto ag = solve_AG(f, e);
  auto bd = solve_BD(f, s);
  auto sc = solve_sigma_c(f, ag.x, bd.x, residual_f);
  NewtonUpdate u;
  u.v_hat = ag.x + bd.x * sc.sigma_hat;
  u.lambda_hat = ag.constant + sc.sigma_hat * bd.constant;
  u.A = std::move(ag.x);
  u.B = std::move(bd.x);
  u.G = ag.constant;
  u.D = bd.constant;
  u.sigma_hat = sc.sigma_hat;
  u.c_hat = std::move(sc.c_hat);
  u.branch_AG = ag.branch;
  u.branch_BD = bd.branch;
  u.transversality = std::min({ag.transversality, bd.transversality, sc.transversality});
  return u;
}

inline SolverState recentered(SolverState s) {
  s.v -= average(s.v);
  return s;
}

struct StepReport {
  double res_e_before = 0.0;
  double res_f_before = 0.0;
  double res_e_after = 0.0;
  double res_f_after = 0.0;
  ChainCase branch_AG = ChainCase::Case5a;
  ChainCase branch_BD = ChainCase::Case5a;
  double norm_v_hat = 0.0;
  double abs_sigma_hat = 0.0;
  double abs_lambda_hat = 0.0;
  double norm_c_hat = 0.0;
  double transversality = 0.0;
  double tail_fraction = 0.0;
  /// Energy fraction of v and c - <c> in the outer third of the retained band;
  /// growth here signals that the grid is too coarse for the iteration.
  double resolution_tail = 0.0;
  /// Size of f vhat / c_+, the term neglected when A+ A- replaces the linearization.
  double dropped_term = 0.0;
};

inline double resolution_tail(const SolverState& s) {
  const int outer = 2 * dealias_band(s.v.grid_size()) / 3;
  return std::max(tail_fraction(s.v, outer), tail_fraction(s.c - average(s.c), outer));
}

struct StepResult {
  SolverState state;
  StepReport report;
};

inline double max_residual(const StepReport& r) { return std::max(r.res_e_after, r.res_f_after); }

inline StepResult newton_step(const SolverState& state, const ModelConfig& config) {
  const SolverState s = recentered(state);
  const FactorData f = build_factors(s, config);
  const SpectralField e = equilibrium_residual(s, config, f.potential.w);
  const SpectralField fr = factorization_residual(s, config, f.potential.dw);
  const NewtonUpdate u = solve_linearized(f, s, e, fr);

  SolverState next{s.v + u.v_hat, s.c + u.c_hat, s.sigma + u.sigma_hat, s.lambda + u.lambda_hat};
  next = recentered(std::move(next));
  const PotentialTerms after = eval_potential_terms(next.v, config);

  StepReport r;
  r.res_e_before = sup_norm(e);
  r.res_f_before = sup_norm(fr);
  r.res_e_after = sup_norm(equilibrium_residual(next, config, after.w));
  r.res_f_after = sup_norm(factorization_residual(next, config, after.dw));
  r.branch_AG = u.branch_AG;
  r.branch_BD = u.branch_BD;
  r.norm_v_hat = sup_norm(u.v_hat);
  r.abs_sigma_hat = std::abs(u.sigma_hat);
  r.abs_lambda_hat = std::abs(u.lambda_hat);
  r.norm_c_hat = sup_norm(u.c_hat);
  r.transversality = u.transversality;
  r.tail_fraction = after.tail_fraction;
  r.resolution_tail = resolution_tail(next);
  r.dropped_term = sup_norm(fr * u.v_hat * f.a);
  return {std::move(next), r};
}

/// One row of the residual history.
struct IterationRecord {
  int iter = 0;
  double res_e = 0.0;
  double res_f = 0.0;
  double sigma = 0.0;
  double lambda = 0.0;
  double norm_v = 0.0;
  std::string branch = "init";
  double tail_frac = 0.0;
};

struct KamOptions {
  double tol = 1e-12;
  int max_iter = 30;
  bool check_guess = true;
  NondegeneracyThresholds thresholds;
  double tail_warning = 1e-8;
};

struct KamResult {
  SolverState state;
  std::vector<IterationRecord> history;
  std::vector<StepReport> steps;
  int iterations = 0;
  bool under_resolved = false;
};

/// Convergence failure carrying the iterate and history reached so far.
class KamError : public Error {
 public:
  KamError(ErrorKind kind, const std::string& message, KamResult partial)
      : Error(kind, message), partial_(std::move(partial)) {}
  const KamResult& partial() const noexcept { return partial_; }

 private:
  KamResult partial_;
};

inline std::string describe_failures(const NondegeneracyReport& report) {
  std::ostringstream out;
  for (const auto& c : report.checks)
    if (!c.pass) out << c.name << "=" << c.value << " (threshold " << c.threshold << ") " << c.note << "; ";
  return out.str();
}

inline KamResult run_kam(const ModelConfig& config, const SolverState& guess, const KamOptions& opts = {}) {
  KamResult result;
  result.state = recentered(guess);
  if (opts.check_guess) {
    const auto report = check_nondegeneracy(result.state, config, opts.thresholds);
    if (!report.passed()) fail(ErrorKind::NondegeneracyViolation, "initial guess: " + describe_failures(report));
  }
  const PotentialTerms terms = eval_potential_terms(result.state.v, config);
  double res_e = sup_norm(equilibrium_residual(result.state, config, terms.w));
  double res_f = sup_norm(factorization_residual(result.state, config, terms.dw));
  result.history.push_back({0, res_e, res_f, result.state.sigma, result.state.lambda, sup_norm(result.state.v), "init",
                            terms.tail_fraction});
  result.under_resolved = terms.tail_fraction > opts.tail_warning;

  int stalled = 0;
  double previous = std::max(res_e, res_f);
  while (std::max(res_e, res_f) >= opts.tol) {
    if (result.iterations >= opts.max_iter)
      throw KamError(ErrorKind::MaxIterations,
                     "no convergence after " + std::to_string(opts.max_iter) + " iterations, residual " +
                         sci(previous),
                     result);
    StepResult step = newton_step(result.state, config);
    result.state = std::move(step.state);
    ++result.iterations;
    res_e = step.report.res_e_after;
    res_f = step.report.res_f_after;
    result.history.push_back({result.iterations, res_e, res_f, result.state.sigma, result.state.lambda,
                              sup_norm(result.state.v), std::string(to_string(step.report.branch_AG)),
                              step.report.tail_fraction});
    result.under_resolved = result.under_resolved || step.report.tail_fraction > opts.tail_warning ||
                            step.report.resolution_tail > opts.tail_warning;
    result.steps.push_back(step.report);
    const double current = std::max(res_e, res_f);
    if (!std::isfinite(current)) throw KamError(ErrorKind::NoProgress, "residual is not finite", result);
    stalled = current > 0.9 * previous ? stalled + 1 : 0;
    previous = current;
    if (stalled >= 2 && current >= opts.tol)
      throw KamError(ErrorKind::NoProgress, "residual stagnated at " + sci(current), result);
  }
  return result;
}

struct UniquenessRun {
  double distance = 0.0;
  int iterations = 0;
};

struct UniquenessReport {
  std::vector<UniquenessRun> runs;
  double max_distance = 0.0;
};

/// Sup distance between two states over (v, c, sigma, lambda).
inline double state_distance(const SolverState& x, const SolverState& y) {
  return std::max({sup_norm(x.v - y.v), sup_norm(x.c - y.c), std::abs(x.sigma - y.sigma), std::abs(x.lambda - y.lambda)});
}

/// Restarts the iteration from randomly perturbed copies of a converged
/// solution and checks that every run returns to it.
inline UniquenessReport uniqueness_probe(const ModelConfig& config, const SolverState& solution, double scale,
                                         int count = 10, unsigned seed = 12345, const KamOptions& opts = {},
                                         double tolerance = 1e-9) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int dim = solution.v.dim();
  const int n = solution.v.grid_size();
  const int max_mode = std::min(8, dealias_band(n));
  UniquenessReport report;
  for (int run = 0; run < count; ++run) {
    SolverState guess = solution;
    if (scale > 0.0) {
      guess.v += random_field(dim, n, max_mode, scale, rng);
      guess.c += random_field(dim, n, max_mode, scale, rng);
      guess.sigma += scale * unit(rng);
      guess.lambda += scale * unit(rng);
    }
    const KamResult r = run_kam(config, guess, opts);
    const double d = state_distance(r.state, solution);
    report.runs.push_back({d, r.iterations});
    report.max_distance = std::max(report.max_distance, d);
    if (d > tolerance)
      fail(ErrorKind::UniquenessViolation, "restart " + std::to_string(run) + " converged to a state at distance " +
                                               sci(d) + " from the reference");
  }
  return report;
}

}  // namespace fkkam
