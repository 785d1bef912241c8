#pragma once

// Quasi-periodic Frenkel-Kontorova model: the potential W on T^d, the coupling
// beta, and the residuals of the equilibrium and factorization equations
//
//     E(v, sigma, lambda) = v_+ + v_- - 2v + W((psi, eta) + beta v) + sigma v + lambda,
//     F(v, sigma, c)      = (-c + 2 - d_beta W((psi, eta) + beta v) - sigma) c_+ - 1.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fkkam/cohomology.hpp"
#include "fkkam/errors.hpp"
#include "fkkam/spectral_field.hpp"
#include "fkkam/twisted.hpp"

namespace fkkam {

struct PotentialMode {
  std::vector<int> j;
  Complex amplitude;
};

/// Finite real trigonometric polynomial W(theta) = sum_j What_j e^{2 pi i j.theta}.
class Potential {
 public:
  Potential() = default;

  /// Adds the conjugate partner of every mode whose -j is missing. Duplicate
  /// modes are summed; an inconsistent explicit pair is rejected.
  Potential(int dim_total, const std::vector<PotentialMode>& modes,
            double strip = std::numeric_limits<double>::infinity())
      : dim_total_(dim_total), strip_(strip) {
    if (dim_total < 2 || dim_total > 4) fail(ErrorKind::InvalidArgument, "potential dimension must be 2, 3 or 4");
    if (!(strip > 0.0)) fail(ErrorKind::InvalidArgument, "analyticity strip must be positive");
    std::map<std::vector<int>, Complex> merged;
    for (const auto& m : modes) {
      if (static_cast<int>(m.j.size()) != dim_total) fail(ErrorKind::ShapeMismatch, "potential mode has wrong length");
      merged[m.j] += m.amplitude;
    }
    std::map<std::vector<int>, Complex> closed = merged;
    for (const auto& [j, amp] : merged) {
      std::vector<int> minus(j);
      for (auto& x : minus) x = -x;
      if (minus == j) {
        if (std::abs(amp.imag()) > 1e-14 * std::max(1.0, std::abs(amp)))
          fail(ErrorKind::InvalidArgument, "constant potential mode must be real");
        closed[j] = amp.real();
        continue;
      }
      auto it = merged.find(minus);
      if (it == merged.end()) {
        closed[minus] = std::conj(amp);
      } else if (std::abs(it->second - std::conj(amp)) > 1e-14 * std::max(1.0, std::abs(amp))) {
        fail(ErrorKind::InvalidArgument, "potential modes j and -j are not conjugate");
      }
    }
    for (const auto& [j, amp] : closed)
      if (amp != Complex{}) modes_.push_back({j, amp});
  }

  int dim_total() const noexcept { return dim_total_; }
  const std::vector<PotentialMode>& modes() const noexcept { return modes_; }
  double strip() const noexcept { return strip_; }
  bool is_zero() const noexcept { return modes_.empty(); }

  Potential scaled(double mu) const {
    Potential out = *this;
    if (mu == 0.0) {
      out.modes_.clear();
      return out;
    }
    for (auto& m : out.modes_) m.amplitude *= mu;
    return out;
  }

  double evaluate(std::span<const double> theta) const {
    Complex sum{};
    for (const auto& m : modes_) {
      double phase = 0.0;
      for (int i = 0; i < dim_total_; ++i) phase += m.j[static_cast<std::size_t>(i)] * theta[static_cast<std::size_t>(i)];
      sum += m.amplitude * std::polar(1.0, kTwoPi * phase);
    }
    return sum.real();
  }

 private:
  int dim_total_ = 2;
  double strip_ = std::numeric_limits<double>::infinity();
  std::vector<PotentialMode> modes_;
};

/// Text format: header "# d=<d>", then one line "j_1 ... j_d re im" per mode.
inline Potential read_potential(std::istream& in, double strip = std::numeric_limits<double>::infinity()) {
  std::string line;
  int d = 0;
  std::vector<PotentialMode> modes;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (auto pos = line.find("d="); pos != std::string::npos && d == 0) d = std::stoi(line.substr(pos + 2));
      continue;
    }
    if (d == 0) fail(ErrorKind::InvalidArgument, "potential file lacks a '# d=<d>' header");
    std::istringstream row(line);
    PotentialMode m;
    m.j.resize(static_cast<std::size_t>(d));
    double re = 0.0, im = 0.0;
    for (auto& ji : m.j) row >> ji;
    row >> re >> im;
    if (!row) fail(ErrorKind::InvalidArgument, "malformed potential line: " + line);
    m.amplitude = Complex(re, im);
    modes.push_back(std::move(m));
  }
  if (d == 0) fail(ErrorKind::InvalidArgument, "potential file lacks a '# d=<d>' header");
  return Potential(d, modes, strip);
}

inline void write_potential(std::ostream& out, const Potential& w) {
  out << "# d=" << w.dim_total() << "\n";
  char buf[64];
  for (const auto& m : w.modes()) {
    for (int ji : m.j) out << ji << " ";
    std::snprintf(buf, sizeof(buf), "%.17g %.17g", m.amplitude.real(), m.amplitude.imag());
    out << buf << "\n";
  }
}

struct ModelConfig {
  Frequency freq;
  std::vector<double> beta;
  double eta = 0.0;
  Potential potential;
  /// Fraction of the potential's strip reserved as margin for the composition.
  double range_margin = 0.5;
  /// Strip half-width on which the range of psi -> beta v(psi) is bounded.
  double range_rho = 0.0;
  int oversampling = 2;

  int field_dim() const noexcept { return freq.dim(); }
};

inline ModelConfig with_potential_scale(ModelConfig config, double mu) {
  config.potential = config.potential.scaled(mu);
  return config;
}

inline void check_model(const ModelConfig& config) {
  const int d = config.field_dim() + 1;
  if (static_cast<int>(config.beta.size()) != d) fail(ErrorKind::ShapeMismatch, "beta must have d = dim(Omega) + 1 entries");
  if (config.potential.dim_total() != d && !config.potential.is_zero())
    fail(ErrorKind::ShapeMismatch, "potential dimension differs from dim(Omega) + 1");
  if (config.oversampling < 1) fail(ErrorKind::InvalidArgument, "oversampling factor must be >= 1");
  for (double b : config.beta)
    if (!std::isfinite(b)) fail(ErrorKind::InvalidArgument, "beta must be finite");
}

struct SolverState {
  SpectralField v;
  SpectralField c;
  double sigma = 0.0;
  double lambda = 0.0;

  /// (v, sigma, lambda, c) = (0, 0, 0, 1).
  static SolverState trivial(int dim, int grid_size) {
    return SolverState{SpectralField::zeros(dim, grid_size), SpectralField::constant(dim, grid_size, 1.0), 0.0, 0.0};
  }
};

/// Excursion bound |beta|_inf * |v|_rho + rho of the composition argument
/// into the complex domain, compared with (1 - margin) * strip.
inline void check_range(const SpectralField& v, const ModelConfig& config) {
  const double strip = config.potential.strip();
  if (!std::isfinite(strip)) return;
  double beta_max = 0.0;
  for (double b : config.beta) beta_max = std::max(beta_max, std::abs(b));
  const auto cert = analytic_norm_bound(v, config.range_rho);
  const double excursion = config.range_rho + beta_max * cert.bound;
  const double allowed = (1.0 - config.range_margin) * strip;
  if (cert.overflow || excursion > allowed)
    fail(ErrorKind::RangeViolation, "composition range " + sci(excursion) + " exceeds " +
                                        sci(allowed));
}

struct PotentialTerms {
  SpectralField w;
  SpectralField dw;
  SpectralField ddw;
  /// Spectral energy beyond the dealiasing band before truncation (max over the three fields).
  double tail_fraction = 0.0;
};

/// W, d_beta W and d_beta^2 W composed with psi -> (psi, eta) + beta v(psi),
/// evaluated mode by mode on an oversampled grid and truncated back.
inline PotentialTerms eval_potential_terms(const SpectralField& v, const ModelConfig& config) {
  check_model(config);
  check_frequency_shape(v, config.freq);
  check_range(v, config);
  const int dim = v.dim();
  const int n = v.grid_size();
  const int band = dealias_band(n);
  if (config.potential.is_zero()) {
    const auto z = SpectralField::zeros(dim, n);
    return PotentialTerms{z, z, z, 0.0};
  }

  const int nf = n * config.oversampling;
  const SpectralField vf = resample(v, nf);
  const std::size_t total = vf.size();
  std::vector<Complex> acc0(total), acc1(total), acc2(total);
  std::vector<double> psi(static_cast<std::size_t>(dim));
  for (const auto& mode : config.potential.modes()) {
    double jb = 0.0;
    for (int i = 0; i <= dim; ++i) jb += mode.j[static_cast<std::size_t>(i)] * config.beta[static_cast<std::size_t>(i)];
    const double eta_phase = mode.j[static_cast<std::size_t>(dim)] * config.eta;
    const Complex d1(0.0, kTwoPi * jb);
    const Complex d2 = d1 * d1;
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rest = flat;
      double phase = eta_phase + jb * vf.values()[flat];
      for (int axis = dim - 1; axis >= 0; --axis) {
        phase += mode.j[static_cast<std::size_t>(axis)] * static_cast<double>(rest % static_cast<std::size_t>(nf)) / nf;
        rest /= static_cast<std::size_t>(nf);
      }
      const Complex term = mode.amplitude * std::polar(1.0, kTwoPi * phase);
      acc0[flat] += term;
      acc1[flat] += d1 * term;
      acc2[flat] += d2 * term;
    }
  }

  PotentialTerms out;
  auto finish = [&](const std::vector<Complex>& acc) {
    const SpectralField fine = SpectralField::from_grid(dim, nf, SpectralField::real_part_checked(acc));
    out.tail_fraction = std::max(out.tail_fraction, tail_fraction(fine, band));
    return truncate(resample(fine, n), band).with_band_limit(band);
  };
  out.w = finish(acc0);
  out.dw = finish(acc1);
  out.ddw = finish(acc2);
  return out;
}

inline SpectralField equilibrium_residual(const SolverState& s, const ModelConfig& config, const SpectralField& w_v) {
  const auto& omega = config.freq.omega;
  return translate(s.v, omega) + translate(s.v, negated(omega)) - 2.0 * s.v + w_v + s.sigma * s.v + s.lambda;
}

inline SpectralField equilibrium_residual(const SolverState& s, const ModelConfig& config) {
  return equilibrium_residual(s, config, eval_potential_terms(s.v, config).w);
}

inline SpectralField factorization_residual(const SolverState& s, const ModelConfig& config, const SpectralField& dw_v) {
  return ((2.0 - s.sigma) - s.c - dw_v) * translate(s.c, config.freq.omega) - 1.0;
}

inline SpectralField factorization_residual(const SolverState& s, const ModelConfig& config) {
  return factorization_residual(s, config, eval_potential_terms(s.v, config).dw);
}

/// The chained operator A+ A- with A+ = a T_Omega - 1, a = 1/c_+, and
/// A- u = c u - u_- in twisted form (c_+, 1) acting on the shifted argument.
inline TwistedChain build_newton_chain(const SpectralField& c, const Frequency& freq) {
  const SpectralField c_plus = translate(c, freq.omega);
  const SpectralField one = SpectralField::constant(c.dim(), c.grid_size(), 1.0);
  TwistedOperator outer(reciprocal(c_plus), one, freq);
  TwistedOperator inner(c_plus, one, freq);
  return TwistedChain(std::move(outer), std::move(inner), freq.omega);
}

struct NondegeneracyThresholds {
  double c_deviation = 0.5;  // M1 bound on |c - 1|_sup
  double sigma = 0.5;        // M2 bound on |sigma|
  double potential = 10.0;   // M3 bound on the composed potential and its two derivatives
  double v = 1.0;            // m bound on |v|_sup
  double transversality = kTransversalityThreshold;
};

struct NondegeneracyCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string note;
};

struct NondegeneracyReport {
  std::vector<NondegeneracyCheck> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
  }
  const NondegeneracyCheck* find(std::string_view name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Evaluates the size, positivity and transversality conditions on a state.
/// Failures are reported, never thrown.
inline NondegeneracyReport check_nondegeneracy(const SolverState& s, const ModelConfig& config,
                                               const NondegeneracyThresholds& t = {}) {
  NondegeneracyReport report;
  auto upper = [&](std::string name, double value, double threshold) {
    report.checks.push_back({std::move(name), value, threshold, std::isfinite(value) && value <= threshold, ""});
  };
  auto lower = [&](std::string name, double value, double threshold) {
    report.checks.push_back({std::move(name), value, threshold, std::isfinite(value) && value > threshold, ""});
  };
  auto failed = [&](std::string name, double threshold, const std::exception& e) {
    report.checks.push_back({std::move(name), std::numeric_limits<double>::quiet_NaN(), threshold, false, e.what()});
  };

  upper("c_deviation", sup_norm(s.c - 1.0), t.c_deviation);
  upper("sigma", std::abs(s.sigma), t.sigma);
  upper("v", sup_norm(s.v), t.v);
  lower("c_positive", min_value(s.c), kPositivityFloor);

  PotentialTerms terms;
  try {
    terms = eval_potential_terms(s.v, config);
  } catch (const std::exception& e) {
    failed("potential", t.potential, e);
    failed("factor_positive", kPositivityFloor, e);
    failed("transversality", t.transversality, e);
    return report;
  }
  upper("potential", std::max({sup_norm(terms.w), sup_norm(terms.dw), sup_norm(terms.ddw)}), t.potential);
  const SpectralField factor = ((2.0 - s.sigma) - s.c) - terms.dw;
  lower("factor_positive", min_value(factor), kPositivityFloor);

  try {
    const TwistedChain chain = build_newton_chain(s.c, config.freq);
    const SpectralField b = chain.solve(-1.0 * s.v).x;
    const SpectralField c_plus = translate(s.c, config.freq.omega);
    const SpectralField weight = -1.0 * c_plus - (terms.ddw * c_plus) * b;
    const TwistedOperator fac(factor, c_plus, config.freq);
    const auto sol = solve_twisted(fac, SpectralField::zeros(s.v.dim(), s.v.grid_size()), weight);
    lower("transversality", sol.transversality, t.transversality);
  } catch (const std::exception& e) {
    failed("transversality", t.transversality, e);
  }
  return report;
}

}  // namespace fkkam
