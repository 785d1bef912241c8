#pragma once

// Subcommands of the fkkam driver. Each writes its artifacts under
// output.directory and prints its summary lines to `out`.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "fkkam/fkkam.hpp"
#include "run_config.hpp"

namespace fkkam::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitParse = 2,
  kExitPrecondition = 3,
  kExitConvergence = 4,
  kExitInternal = 5,
};

/// Raised when a validation command finds a disagreement beyond its tolerance.
class ValidationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

namespace fs = std::filesystem;

inline void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::InvalidArgument, "cannot write " + path.string());
  body(out);
  if (!out) fail(ErrorKind::InvalidArgument, "write failed for " + path.string());
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers; results keep index order.
template <class T>
std::vector<T> parallel_map(int count, int threads, const std::function<T(int)>& fn) {
  std::vector<T> results(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        results[static_cast<std::size_t>(i)] = fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

/// KAM solve from the trivial guess, continued in equal steps of the potential scale.
inline KamResult solve_with_continuation(const RunConfig& rc, const ModelConfig& family, double mu) {
  const KamOptions opts = rc.kam_options();
  const int steps = rc.task.continuation_steps;
  SolverState guess = SolverState::trivial(family.field_dim(), rc.numerics.grid_size);
  KamResult result;
  int total = 0;
  for (int i = 1; i <= steps; ++i) {
    result = run_kam(with_potential_scale(family, mu * i / steps), guess, opts);
    total += result.iterations;
    guess = result.state;
  }
  result.iterations = total;
  return result;
}

inline void write_solution(const RunConfig& rc, const fs::path& dir, const KamResult& r, const ModelConfig& config) {
  if (rc.output.csv) write_file(dir / "history.csv", [&](std::ostream& o) { write_history_csv(o, r.history); });
  if (rc.output.txt) {
    write_file(dir / "v.txt", [&](std::ostream& o) { write_coefficients(o, r.state.v); });
    write_file(dir / "c.txt", [&](std::ostream& o) { write_coefficients(o, r.state.c); });
    write_file(dir / "summary.txt",
               [&](std::ostream& o) { solve_summary(r, config, rc.numerics.thresholds).write(o); });
  }
}

inline std::string join_ints(const std::vector<int>& k) {
  std::string s;
  for (std::size_t i = 0; i < k.size(); ++i) s += (i ? "," : "") + std::to_string(k[i]);
  return s;
}

/// Optional nonzero base point for the series: the KAM solution at mu0.
inline PerturbativeSeries series_for(const RunConfig& rc, const ModelConfig& family) {
  SeriesOptions so;
  so.growth_bound = rc.numerics.series_growth_bound;
  if (rc.task.mu0 == 0.0) return expand_series(family, rc.task.order, 0.0, nullptr, so, rc.numerics.grid_size);
  const KamResult base = solve_with_continuation(rc, family, rc.task.mu0);
  return expand_series(family, rc.task.order, rc.task.mu0, &base.state, so, rc.numerics.grid_size);
}

}  // namespace detail

inline int cmd_solve(const RunConfig& rc, std::ostream& out) {
  const ModelConfig family = rc.family();
  const ModelConfig config = with_potential_scale(family, rc.model.mu);
  const KamResult r = detail::solve_with_continuation(rc, family, rc.model.mu);
  detail::write_solution(rc, rc.output.directory, r, config);
  solve_summary(r, config, rc.numerics.thresholds).write(out);
  return kExitOk;
}

inline int cmd_diophantine(const RunConfig& rc, std::ostream& out) {
  const Frequency f = diophantine_constant(rc.model.omega, rc.model.tau, rc.model.diophantine_cutoff);
  Summary s;
  s.add("kappa_hat", f.kappa_hat)
      .add("tau", f.tau)
      .add("cutoff", f.cutoff)
      .add("minimizer_k", detail::join_ints(f.minimizer_k))
      .add("minimizer_m", std::to_string(f.minimizer_m));
  if (rc.output.txt) detail::write_file(detail::fs::path(rc.output.directory) / "diophantine.txt", [&](std::ostream& o) { s.write(o); });
  s.write(out);
  return kExitOk;
}

inline int cmd_lindstedt(const RunConfig& rc, std::ostream& out) {
  const ModelConfig family = rc.family();
  const PerturbativeSeries series = detail::series_for(rc, family);
  const detail::fs::path dir = rc.output.directory;
  if (rc.output.txt) {
    for (int n = 0; n <= series.order; ++n) {
      const std::string tag = std::to_string(n);
      detail::write_file(dir / ("series_" + tag + ".txt"), [&](std::ostream& o) { write_series_order(o, series, n); });
      detail::write_file(dir / ("series_c_" + tag + ".txt"),
                         [&](std::ostream& o) { write_coefficients(o, series.c[static_cast<std::size_t>(n)]); });
    }
  }
  const TruncationFit fit = truncation_residual(series, family, rc.task.mu_list);
  if (rc.output.csv) {
    detail::write_file(dir / "truncation.csv", [&](std::ostream& o) {
      o << "mu,res_e,res_f\n";
      for (std::size_t i = 0; i < fit.mu.size(); ++i)
        o << format_real(fit.mu[i]) << "," << format_real(fit.res_e[i]) << "," << format_real(fit.res_f[i]) << "\n";
    });
  }
  Summary s;
  s.add("order", series.order).add("mu0", series.mu0);
  for (int n = 0; n <= series.order; ++n) {
    s.add("sigma_" + std::to_string(n), series.sigma[static_cast<std::size_t>(n)]);
    s.add("lambda_" + std::to_string(n), series.lambda[static_cast<std::size_t>(n)]);
  }
  s.add("expected_slope", series.order + 1).add("fit_skipped", fit.skipped);
  s.add("slope_e", fit.slope_e).add("slope_f", fit.slope_f);
  if (rc.output.txt) detail::write_file(dir / "lindstedt_summary.txt", [&](std::ostream& o) { s.write(o); });
  s.write(out);
  return kExitOk;
}

inline int cmd_compare(const RunConfig& rc, std::ostream& out) {
  const ModelConfig family = rc.family();
  const PerturbativeSeries series = detail::series_for(rc, family);
  const auto& mus = rc.task.mu_list;
  if (mus.size() < 2) fail(ErrorKind::InvalidArgument, "compare needs at least two entries in task.mu_list");
  const auto kam = detail::parallel_map<SolverState>(static_cast<int>(mus.size()), rc.numerics.threads, [&](int i) {
    return detail::solve_with_continuation(rc, family, mus[static_cast<std::size_t>(i)]).state;
  });
  std::vector<double> dist, dv, dc, ds, dl;
  for (std::size_t i = 0; i < mus.size(); ++i) {
    const SolverState st = evaluate_series(series, mus[i]);
    dist.push_back(std::abs(mus[i] - series.mu0));
    dv.push_back(sup_norm(st.v - kam[i].v));
    dc.push_back(sup_norm(st.c - kam[i].c));
    ds.push_back(std::abs(st.sigma - kam[i].sigma));
    dl.push_back(std::abs(st.lambda - kam[i].lambda));
  }
  if (rc.output.csv) {
    detail::write_file(detail::fs::path(rc.output.directory) / "compare.csv", [&](std::ostream& o) {
      o << "mu,sigma_kam,sigma_series,diff_v,diff_c,diff_sigma,diff_lambda\n";
      for (std::size_t i = 0; i < mus.size(); ++i)
        o << format_real(mus[i]) << "," << format_real(kam[i].sigma) << ","
          << format_real(evaluate_series(series, mus[i]).sigma) << "," << format_real(dv[i]) << ","
          << format_real(dc[i]) << "," << format_real(ds[i]) << "," << format_real(dl[i]) << "\n";
    });
  }
  // Differences at the solver floor carry no slope information.
  auto fit = [&](const std::vector<double>& y) {
    return *std::max_element(y.begin(), y.end()) > 1e-13 && *std::min_element(y.begin(), y.end()) > 0.0
               ? log_log_slope(dist, y)
               : std::numeric_limits<double>::quiet_NaN();
  };
  Summary s;
  s.add("order", series.order).add("mu0", series.mu0).add("expected_slope", series.order + 1);
  s.add("slope_v", fit(dv)).add("slope_c", fit(dc)).add("slope_sigma", fit(ds)).add("slope_lambda", fit(dl));
  if (rc.output.txt)
    detail::write_file(detail::fs::path(rc.output.directory) / "compare_summary.txt", [&](std::ostream& o) { s.write(o); });
  s.write(out);
  return kExitOk;
}

inline int cmd_sweep_eta(const RunConfig& rc, std::ostream& out) {
  const ModelConfig family = rc.family();
  const int count = rc.task.eta_count;
  const detail::fs::path dir = rc.output.directory;
  auto config_at = [&](int m) {
    ModelConfig c = with_potential_scale(family, rc.model.mu);
    c.eta = static_cast<double>(m) / count;
    return c;
  };
  const auto results = detail::parallel_map<KamResult>(count, rc.numerics.threads, [&](int m) {
    ModelConfig fam = family;
    fam.eta = static_cast<double>(m) / count;
    return detail::solve_with_continuation(rc, fam, rc.model.mu);
  });
  for (int m = 0; m < count; ++m) {
    char name[32];
    std::snprintf(name, sizeof(name), "eta_%03d", m);
    detail::write_solution(rc, count == 1 ? dir : dir / name, results[static_cast<std::size_t>(m)], config_at(m));
  }
  if (rc.output.csv) {
    detail::write_file(dir / "sweep.csv", [&](std::ostream& o) {
      o << "eta,sigma,lambda,iterations,res_e,res_f\n";
      for (int m = 0; m < count; ++m) {
        const KamResult& r = results[static_cast<std::size_t>(m)];
        o << format_real(static_cast<double>(m) / count) << "," << format_real(r.state.sigma) << ","
          << format_real(r.state.lambda) << "," << r.iterations << "," << format_real(r.history.back().res_e) << ","
          << format_real(r.history.back().res_f) << "\n";
      }
    });
  }
  Summary s;
  s.add("eta_count", count).add("iota", rc.task.iota);
  if (count >= 2) {
    std::vector<SolverState> states;
    for (const auto& r : results) states.push_back(r.state);
    const SymmetryReport sym = check_symmetry(states, with_potential_scale(family, rc.model.mu), rc.task.iota);
    if (rc.output.csv) {
      detail::write_file(dir / "symmetry.csv", [&](std::ostream& o) {
        o << "eta,res_e,res_f\n";
        for (std::size_t i = 0; i < sym.eta.size(); ++i)
          o << format_real(sym.eta[i]) << "," << format_real(sym.res_e[i]) << "," << format_real(sym.res_f[i]) << "\n";
      });
    }
    s.add("symmetry_max_res_e", sym.max_res_e).add("symmetry_max_res_f", sym.max_res_f).add("eta_tail", sym.eta_tail);
  } else {
    s.add("symmetry", "skipped");
  }
  if (rc.output.txt) detail::write_file(dir / "sweep_summary.txt", [&](std::ostream& o) { s.write(o); });
  s.write(out);
  return kExitOk;
}

inline int cmd_oracle_check(const RunConfig& rc, std::ostream& out) {
  const ModelConfig config = rc.model_config();
  const int cutoff = rc.task.oracle_cutoff.value_or(default_cutoff(rc.numerics.grid_size));
  SolverState s = SolverState::trivial(config.field_dim(), rc.numerics.grid_size);
  std::vector<SolverComparison> rows;
  std::vector<std::string> branches;
  double fast = 0.0, dense = 0.0, worst = 0.0;
  bool exact_ok = true;
  for (int step = 0; step < rc.task.oracle_steps; ++step) {
    branches.emplace_back(to_string(build_factors(s, config).chain.branch()));
    rows.push_back(compare_solvers(s, config, cutoff));
    const auto& r = rows.back();
    fast += r.fast_seconds;
    dense += r.dense_seconds;
    worst = std::max(worst, r.max_relative());
    exact_ok = exact_ok && r.exact_within_allowance();
    s = newton_step(s, config).state;
  }
  if (rc.output.csv) {
    detail::write_file(detail::fs::path(rc.output.directory) / "oracle.csv", [&](std::ostream& o) {
      o << "step,branch,rel_A,rel_G,rel_B,rel_D,rel_sigma,rel_c,rel_coupled,exact_difference,exact_allowance,residual,"
           "condition\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        o << i << "," << branches[i];
        for (double x : {r.rel_A, r.rel_G, r.rel_B, r.rel_D, r.rel_sigma, r.rel_c, r.rel_coupled, r.exact_difference,
                         r.exact_allowance, r.residual, r.condition})
          o << "," << format_real(x);
        o << "\n";
      }
    });
  }
  const bool pass = worst < rc.task.oracle_tol && exact_ok;
  Summary sum;
  sum.add("cutoff", cutoff).add("steps", rc.task.oracle_steps).add("max_relative", worst);
  sum.add("exact_within_allowance", exact_ok).add("fast_seconds", fast).add("dense_seconds", dense).add("pass", pass);
  if (rc.output.txt)
    detail::write_file(detail::fs::path(rc.output.directory) / "oracle_summary.txt", [&](std::ostream& o) { sum.write(o); });
  sum.write(out);
  if (!pass) throw ValidationFailure("fast and dense updates differ by " + format_real(worst));
  return kExitOk;
}

inline const std::vector<std::pair<std::string, std::function<int(const RunConfig&, std::ostream&)>>>& commands() {
  static const std::vector<std::pair<std::string, std::function<int(const RunConfig&, std::ostream&)>>> all{
      {"solve", cmd_solve},         {"lindstedt", cmd_lindstedt}, {"compare", cmd_compare},
      {"diophantine", cmd_diophantine}, {"sweep-eta", cmd_sweep_eta}, {"oracle-check", cmd_oracle_check},
  };
  return all;
}

/// Runs a command and maps failures to exit codes, reporting
/// "error_class=<class> error=<message>" on `err`.
inline int run_guarded(const std::function<int()>& body, std::ostream& err) {
  auto report = [&](const std::string& cls, const std::string& msg, int code) {
    err << "error_class=" << cls << " error=" << msg << "\n";
    return code;
  };
  try {
    return body();
  } catch (const ConfigError& e) {
    return report("ParseError", e.what(), kExitParse);
  } catch (const ValidationFailure& e) {
    return report("ValidationFailure", e.what(), kExitConvergence);
  } catch (const Error& e) {
    const int code = e.category() == ErrorCategory::Precondition   ? kExitPrecondition
                     : e.category() == ErrorCategory::Convergence ? kExitConvergence
                                                                   : kExitInternal;
    return report(std::string(to_string(e.kind())), e.what(), code);
  } catch (const std::exception& e) {
    return report("Internal", e.what(), kExitInternal);
  }
}

}  // namespace fkkam::cli
