// Acceptance suite: one PASS/FAIL line per criterion. Run without arguments
// for all criteria or with "--criterion N" for a single one; the exit status
// is nonzero when any selected criterion fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <new>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fkkam/fkkam.hpp"

namespace {

std::atomic<std::size_t> g_live_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};

void note_alloc(std::size_t n) {
  const std::size_t live = g_live_bytes.fetch_add(n) + n;
  std::size_t peak = g_peak_bytes.load();
  while (live > peak && !g_peak_bytes.compare_exchange_weak(peak, live)) {
  }
}

}  // namespace

// Size-prefixed allocations so frees can be counted.
void* operator new(std::size_t n) {
  constexpr std::size_t kHeader = alignof(std::max_align_t);
  auto* p = static_cast<unsigned char*>(std::malloc(n + kHeader));
  if (p == nullptr) throw std::bad_alloc();
  *reinterpret_cast<std::size_t*>(p) = n;
  note_alloc(n);
  return p + kHeader;
}
void operator delete(void* ptr) noexcept {
  if (ptr == nullptr) return;
  constexpr std::size_t kHeader = alignof(std::max_align_t);
  auto* p = static_cast<unsigned char*>(ptr) - kHeader;
  g_live_bytes.fetch_sub(*reinterpret_cast<std::size_t*>(p));
  std::free(p);
}
void* operator new[](std::size_t n) { return operator new(n); }
void operator delete[](void* ptr) noexcept { operator delete(ptr); }
void operator delete(void* ptr, std::size_t) noexcept { operator delete(ptr); }
void operator delete[](void* ptr, std::size_t) noexcept { operator delete(ptr); }

namespace fkkam::acceptance {

using Clock = std::chrono::steady_clock;

const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

Frequency golden() { return diophantine_constant({kGolden}, 1.0, 200); }

/// W = mu cos(2 pi theta_1), beta = (1, 0.5), golden-mean Omega.
ModelConfig standard_model(double mu) {
  ModelConfig config;
  config.freq = golden();
  config.beta = {1.0, 0.5};
  config.potential = Potential(2, {{{1, 0}, Complex(0.5 * mu, 0.0)}});
  return config;
}

/// Adds a harmonic coupling theta_1 and theta_2, so solutions depend on eta.
ModelConfig coupled_model(double mu) {
  ModelConfig config = standard_model(1.0);
  config.potential = Potential(2, {{{1, 0}, Complex(0.5, 0.0)}, {{1, 1}, Complex(0.15, 0.0)}}).scaled(mu);
  return config;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) { return log_log_slope(x, y); }

std::vector<double> log_spaced(double lo, double hi, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
  return out;
}

// 1. W = 0 with the trivial guess.
Outcome trivial_exactness() {
  ModelConfig config = standard_model(0.0);
  config.potential = Potential();
  const SolverState guess = SolverState::trivial(1, 64);
  const KamResult r = run_kam(config, guess);
  const StepResult step = newton_step(guess, config);
  const double res = std::max(r.history.front().res_e, r.history.front().res_f);
  const double corr = std::max({step.report.norm_v_hat, step.report.norm_c_hat, step.report.abs_sigma_hat,
                                step.report.abs_lambda_hat});
  const bool pass = res < 1e-14 && corr == 0.0 && r.iterations == 0;
  return {pass, "residual=" + fmt(res) + " correction=" + fmt(corr) + " iterations=" + std::to_string(r.iterations)};
}

// 2. Manufactured solutions of the constant and twisted cohomology equations.
Outcome manufactured_solutions() {
  const Frequency freq = golden();
  constexpr int kN = 128;
  std::mt19937_64 rng(2024);
  double worst_const = 0.0, worst_twisted = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const SpectralField v = random_field(1, kN, 16, 1.0, rng);
    const SpectralField phi = translate(v, freq.omega) - v;
    worst_const = std::max(worst_const, sup_norm(solve_constant_cohomology(phi, freq) - v));
  }
  const double ratios[] = {1.2, 1.0, 0.8};
  for (int trial = 0; trial < 20; ++trial) {
    const double ratio = ratios[trial % 3];
    const SpectralField a = ratio * exp_field(random_field(1, kN, 3, 0.1, rng));
    const SpectralField b = exp_field(random_field(1, kN, 3, 0.1, rng));
    const SpectralField v = random_field(1, kN, 16, 1.0, rng);
    const SpectralField w = 1.0 + random_field(1, kN, 3, 0.2, rng);
    const double lambda = 0.3 - 0.05 * trial;
    const TwistedOperator op(a, b, freq);
    const SpectralField phi = op.apply(v) - lambda * w;
    const TwistedSolution sol = solve_twisted(op, phi, w);
    worst_twisted = std::max({worst_twisted, sup_norm(sol.v - v), std::abs(sol.lambda - lambda)});
  }
  const bool pass = worst_const < 1e-12 && worst_twisted < 1e-10;
  return {pass, "cohomology_error=" + fmt(worst_const) + " twisted_error=" + fmt(worst_twisted)};
}

// 3. Brute-force Diophantine constant of the golden mean.
Outcome diophantine_certification() {
  const Frequency f = diophantine_constant({kGolden}, 1.0, 200);
  const double target = 1.0 / std::sqrt(5.0);
  const bool pass = std::abs(f.kappa_hat - target) < 1e-3;
  std::string k;
  for (int ki : f.minimizer_k) k += std::to_string(ki);
  return {pass, "kappa_hat=" + fmt(f.kappa_hat) + " target=" + fmt(target) + " minimizer_k=" + k +
                    " minimizer_m=" + std::to_string(f.minimizer_m)};
}

// 4. Quadratic convergence: slope of log eps_{n+1} against log eps_n.
Outcome quadratic_convergence() {
  const ModelConfig config = standard_model(0.05);
  constexpr int kN = 128;
  KamOptions opts;
  opts.tol = 1e-12;
  const KamResult base = run_kam(config, SolverState::trivial(1, kN), opts);
  const double final_res = std::max(base.history.back().res_e, base.history.back().res_f);

  std::vector<double> x, y;
  auto collect = [&](const std::vector<IterationRecord>& h) {
    for (std::size_t i = 0; i + 1 < h.size(); ++i) {
      const double e0 = h[i].res_e + h[i].res_f;
      const double e1 = h[i + 1].res_e + h[i + 1].res_f;
      if (e0 >= 1e-10 && e0 <= 1e-2 && e1 >= 1e-10 && e1 <= 1e-2) {
        x.push_back(e0);
        y.push_back(e1);
      }
    }
  };
  collect(base.history);
  KamOptions tight = opts;
  tight.tol = 1e-14;
  const KamResult solution = run_kam(config, base.state, tight);
  std::mt19937_64 rng(4);
  for (double scale : log_spaced(1e-2, 1e-4, 5)) {
    SolverState guess = solution.state;
    guess.v += random_field(1, kN, 8, scale, rng);
    guess.c += random_field(1, kN, 8, scale, rng);
    collect(run_kam(config, guess, opts).history);
  }
  const double s = x.size() >= 2 ? slope(x, y) : std::numeric_limits<double>::quiet_NaN();
  const bool pass = s >= 1.7 && s <= 2.3 && final_res < 1e-12;
  return {pass, "slope=" + fmt(s) + " pairs=" + std::to_string(x.size()) + " final_residual=" + fmt(final_res) +
                    " iterations=" + std::to_string(base.iterations)};
}

// 5. Fast factorized updates against the dense oracle on grid 64.
Outcome oracle_equivalence() {
  const ModelConfig config = standard_model(0.05);
  constexpr int kN = 64;
  const int cutoff = default_cutoff(kN);
  SolverState s = SolverState::trivial(1, kN);
  double worst = 0.0, worst_exact_ratio = 0.0;
  bool exact_ok = true;
  std::string branches;
  for (int step = 0; step < 3; ++step) {
    const FactorData f = build_factors(s, config);
    branches += std::string(to_string(f.chain.branch())) + " ";
    const SolverComparison r = compare_solvers(s, config, cutoff);
    worst = std::max(worst, r.max_relative());
    worst_exact_ratio = std::max(worst_exact_ratio, r.exact_difference / r.exact_allowance);
    exact_ok = exact_ok && r.exact_within_allowance();
    s = newton_step(s, config).state;
  }
  const bool pass = worst < 1e-8 && exact_ok;
  return {pass, "max_relative=" + fmt(worst) + " exact_newton_over_allowance=" + fmt(worst_exact_ratio) +
                    " branches=" + branches};
}

// 6. Truncation residual of the order-N series scales as |mu|^{N+1}.
Outcome lindstedt_law() {
  const ModelConfig family = standard_model(1.0);
  const auto mus = log_spaced(1e-3, 1e-2, 5);
  bool pass = true;
  std::string detail;
  for (int order = 1; order <= 3; ++order) {
    const PerturbativeSeries s = expand_series(family, order, 0.0, nullptr, {}, 64);
    const TruncationFit fit = truncation_residual(s, family, mus);
    const bool ok = !fit.skipped && std::abs(fit.slope_e - (order + 1)) <= 0.2 &&
                    std::abs(fit.slope_f - (order + 1)) <= 0.2;
    pass = pass && ok;
    detail += "N=" + std::to_string(order) + ":(" + fmt(fit.slope_e) + "," + fmt(fit.slope_f) + ") ";
  }
  return {pass, "slopes_e_f " + detail};
}

// 7. KAM solutions against the truncated series.
Outcome kam_lindstedt_consistency() {
  const ModelConfig family = standard_model(1.0);
  const auto mus = log_spaced(1e-3, 1e-2, 5);
  constexpr int kN = 128;
  KamOptions opts;
  opts.tol = 1e-14;
  std::vector<SolverState> kam;
  for (double mu : mus) kam.push_back(run_kam(with_potential_scale(family, mu), SolverState::trivial(1, kN), opts).state);
  bool pass = true;
  std::string detail;
  for (int order = 1; order <= 3; ++order) {
    const PerturbativeSeries s = expand_series(family, order, 0.0, nullptr, {}, kN);
    std::vector<double> dv, ds;
    for (std::size_t i = 0; i < mus.size(); ++i) {
      const SolverState st = evaluate_series(s, mus[i]);
      dv.push_back(sup_norm(st.v - kam[i].v));
      ds.push_back(std::abs(st.sigma - kam[i].sigma));
    }
    const double sv = slope(mus, dv);
    const double ss = slope(mus, ds);
    pass = pass && sv >= order + 0.8 && ss >= order + 0.8;
    detail += "N=" + std::to_string(order) + ":(v " + fmt(sv) + ", sigma " + fmt(ss) + ") ";
  }
  return {pass, "slopes " + detail};
}

// 8. Perturbed restarts return to the reference solution.
Outcome local_uniqueness() {
  const ModelConfig config = standard_model(0.05);
  KamOptions opts;
  opts.tol = 1e-14;
  const KamResult ref = run_kam(config, SolverState::trivial(1, 128), opts);
  try {
    const UniquenessReport r = uniqueness_probe(config, ref.state, 1e-4, 10, 12345, opts, 1e-9);
    return {r.runs.size() == 10, "runs=" + std::to_string(r.runs.size()) + " max_distance=" + fmt(r.max_distance)};
  } catch (const Error& e) {
    return {false, e.what()};
  }
}

// 9. The iota-transformed eta-family solves the equations again.
Outcome symmetry_check() {
  const ModelConfig config = coupled_model(0.05);
  constexpr int kCount = 32;
  KamOptions opts;
  opts.tol = 1e-13;
  std::vector<SolverState> family;
  for (int m = 0; m < kCount; ++m) {
    ModelConfig cfg = config;
    cfg.eta = static_cast<double>(m) / kCount;
    family.push_back(run_kam(cfg, SolverState::trivial(1, 128), opts).state);
  }
  const SymmetryReport r = check_symmetry(family, config, 0.01);
  return {r.max_res_e < 1e-9, "max_res_e=" + fmt(r.max_res_e) + " max_res_f=" + fmt(r.max_res_f) +
                                  " eta_tail=" + fmt(r.eta_tail)};
}

// 10. Per-step time and peak memory when doubling the grid.
Outcome complexity() {
  const ModelConfig config = standard_model(0.05);
  const SolverState seed = newton_step(newton_step(SolverState::trivial(1, 128), config).state, config).state;
  const int sizes[] = {128, 256, 512};
  std::vector<double> times, peaks;
  for (int n : sizes) {
    const SolverState s{resample(seed.v, n), resample(seed.c, n), seed.sigma, seed.lambda};
    newton_step(s, config);  // warm the FFT plan cache
    std::vector<double> samples;
    const auto budget = Clock::now() + std::chrono::milliseconds(1500);
    while (samples.size() < 21 || (Clock::now() < budget && samples.size() < 2001)) {
      const auto t0 = Clock::now();
      const StepResult r = newton_step(s, config);
      samples.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
      if (!std::isfinite(r.report.res_e_after)) return {false, "non-finite step"};
    }
    std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
    times.push_back(samples[samples.size() / 2]);
    const std::size_t base = g_live_bytes.load();
    g_peak_bytes.store(base);
    newton_step(s, config);
    peaks.push_back(static_cast<double>(g_peak_bytes.load() - base));
  }
  const double t1 = times[1] / times[0], t2 = times[2] / times[1];
  const double m1 = peaks[1] / peaks[0], m2 = peaks[2] / peaks[1];
  const bool pass = t1 <= 2.6 && t2 <= 2.6 && m1 <= 2.6 && m2 <= 2.6 && m1 >= 1.4 && m2 >= 1.4;
  return {pass, "time_ratios=" + fmt(t1) + "," + fmt(t2) + " memory_ratios=" + fmt(m1) + "," + fmt(m2) +
                    " step_seconds=" + fmt(times[0]) + "," + fmt(times[1]) + "," + fmt(times[2]) +
                    " peak_bytes=" + fmt(peaks[0]) + "," + fmt(peaks[1]) + "," + fmt(peaks[2])};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "trivial exactness", 1.0, trivial_exactness},
      {2, "manufactured cohomology solutions", 5.0, manufactured_solutions},
      {3, "Diophantine certification", 1.0, diophantine_certification},
      {4, "quadratic convergence", 10.0, quadratic_convergence},
      {5, "oracle equivalence", 30.0, oracle_equivalence},
      {6, "Lindstedt truncation law", 30.0, lindstedt_law},
      {7, "KAM-Lindstedt consistency", 60.0, kam_lindstedt_consistency},
      {8, "local uniqueness", 60.0, local_uniqueness},
      {9, "symmetry check", 120.0, symmetry_check},
      {10, "complexity", 0.0, complexity},
  };
  return all;
}

bool run_one(const Criterion& c) {
  const auto t0 = Clock::now();
  Outcome out;
  try {
    out = c.run();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = c.budget_seconds <= 0.0 || seconds < c.budget_seconds;
  const bool pass = out.pass && in_time;
  std::printf("criterion %d [%s]: %s %s runtime=%ss%s\n", c.id, c.name, pass ? "PASS" : "FAIL", out.detail.c_str(),
              fmt(seconds).c_str(), in_time ? "" : " (over budget)");
  std::fflush(stdout);
  return pass;
}

}  // namespace fkkam::acceptance

int main(int argc, char** argv) {
  using namespace fkkam::acceptance;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
      return 2;
    }
  }
  bool all_pass = true;
  bool found = false;
  for (const auto& c : criteria()) {
    if (only != 0 && c.id != only) continue;
    found = true;
    all_pass = run_one(c) && all_pass;
  }
  if (!found) {
    std::fprintf(stderr, "unknown criterion %d\n", only);
    return 2;
  }
  return all_pass ? 0 : 1;
}
