#pragma once

// Perturbative (Lindstedt) expansion of (v, sigma, lambda, c) in mu for the
// family mu W around a base point solving both equations at mu0:
//
//     v(mu) = sum_n v^n (mu - mu0)^n,  and likewise sigma, lambda, c.
//
// The order-n equations are the linearization at the base point applied to
// (v^n, sigma^n, lambda^n, c^n) with right-hand sides built from lower orders.
// The composition W((psi, eta) + beta v(mu)) is expanded per potential mode j
// through E_j = exp(2 pi i (j.beta) v), whose Taylor coefficients follow from
// n E_j^n = 2 pi i (j.beta) sum_{m=1}^{n} m v^m E_j^{n-m}.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fkkam/cohomology.hpp"
#include "fkkam/errors.hpp"
#include "fkkam/fft.hpp"
#include "fkkam/fk_model.hpp"
#include "fkkam/kam_solver.hpp"
#include "fkkam/spectral_field.hpp"

namespace fkkam {

enum class SeriesKind { Pair, EquilibriumOnly };

struct PerturbativeSeries {
  SolverState base;
  double mu0 = 0.0;
  int order = 0;
  SeriesKind kind = SeriesKind::Pair;
  /// Index n holds the order-n coefficient; index 0 is the base point.
  std::vector<SpectralField> v;
  std::vector<SpectralField> c;
  std::vector<double> sigma;
  std::vector<double> lambda;
  /// Every v^n (and c^n for n >= 1) has zero mean.
  bool normalized = true;
};

struct SeriesOptions {
  /// Largest tolerated ratio |v^n| / |v^{n-1}| before the expansion is declared divergent.
  double growth_bound = 1e8;
};

namespace detail {

// Taylor coefficients of W, d_beta W and d_beta^2 W composed with the series v(mu).
class SeriesComposer {
 public:
  SeriesComposer(const ModelConfig& family, const SpectralField& v0)
      : dim_(v0.dim()), n_(v0.grid_size()), nf_(v0.grid_size() * family.oversampling) {
    const SpectralField vf = resample(v0, nf_);
    total_ = vf.size();
    for (const auto& mode : family.potential.modes()) {
      ModeSeries ms;
      double jb = 0.0;
      for (int i = 0; i <= dim_; ++i) jb += mode.j[static_cast<std::size_t>(i)] * family.beta[static_cast<std::size_t>(i)];
      ms.alpha = Complex(0.0, kTwoPi * jb);
      ms.base.resize(total_);
      std::vector<Complex> e0(total_);
      for (std::size_t flat = 0; flat < total_; ++flat) {
        std::size_t rest = flat;
        double phase = mode.j[static_cast<std::size_t>(dim_)] * family.eta;
        for (int axis = dim_ - 1; axis >= 0; --axis) {
          phase += mode.j[static_cast<std::size_t>(axis)] * static_cast<double>(rest % static_cast<std::size_t>(nf_)) / nf_;
          rest /= static_cast<std::size_t>(nf_);
        }
        ms.base[flat] = mode.amplitude * std::polar(1.0, kTwoPi * phase);
        e0[flat] = std::exp(ms.alpha * vf.values()[flat]);
      }
      ms.e.push_back(std::move(e0));
      modes_.push_back(std::move(ms));
    }
    vf_.emplace_back(vf.values().begin(), vf.values().end());
  }

  int order() const noexcept { return static_cast<int>(vf_.size()) - 1; }

  /// Opens order n with v^n = 0: E_j^n from lower orders only.
  void open_order() {
    const int n = static_cast<int>(vf_.size());
    vf_.emplace_back(total_, 0.0);
    for (auto& ms : modes_) {
      std::vector<Complex> en(total_);
      for (int m = 1; m < n; ++m) {
        const Complex w = ms.alpha * (static_cast<double>(m) / n);
        const auto& vm = vf_[static_cast<std::size_t>(m)];
        const auto& ek = ms.e[static_cast<std::size_t>(n - m)];
        for (std::size_t i = 0; i < total_; ++i) en[i] += w * vm[i] * ek[i];
      }
      ms.e.push_back(std::move(en));
    }
  }

  /// Adds the contribution of the now known v^n to E_j^n.
  void close_order(const SpectralField& vn) {
    const int n = order();
    const SpectralField vf = resample(vn, nf_);
    auto& slot = vf_[static_cast<std::size_t>(n)];
    slot.assign(vf.values().begin(), vf.values().end());
    for (auto& ms : modes_) {
      auto& en = ms.e[static_cast<std::size_t>(n)];
      const auto& e0 = ms.e[0];
      for (std::size_t i = 0; i < total_; ++i) en[i] += ms.alpha * slot[i] * e0[i];
    }
  }

  /// Order-n coefficient of the p-th beta-derivative of W along the series.
  SpectralField coefficient(int n, int p) const {
    if (modes_.empty()) return SpectralField::zeros(dim_, n_);
    std::vector<Complex> acc(total_);
    for (const auto& ms : modes_) {
      Complex factor = 1.0;
      for (int i = 0; i < p; ++i) factor *= ms.alpha;
      const auto& en = ms.e[static_cast<std::size_t>(n)];
      for (std::size_t i = 0; i < total_; ++i) acc[i] += factor * ms.base[i] * en[i];
    }
    const SpectralField fine = SpectralField::from_grid(dim_, nf_, SpectralField::real_part_checked(acc));
    const int band = dealias_band(n_);
    return truncate(resample(fine, n_), band).with_band_limit(band);
  }

 private:
  struct ModeSeries {
    Complex alpha;
    std::vector<Complex> base;
    std::vector<std::vector<Complex>> e;
  };

  int dim_;
  int n_;
  int nf_;
  std::size_t total_ = 0;
  std::vector<ModeSeries> modes_;
  std::vector<std::vector<double>> vf_;
};

inline void check_growth(const std::vector<SpectralField>& v, const SeriesOptions& opts) {
  const std::size_t n = v.size() - 1;
  if (n < 2) return;
  const double prev = sup_norm(v[n - 1]);
  const double cur = sup_norm(v[n]);
  if (prev > 0.0 && cur / prev > opts.growth_bound)
    fail(ErrorKind::SeriesDivergence, "coefficient growth ratio " + std::to_string(cur / prev) + " at order " +
                                          std::to_string(n));
}

}  // namespace detail

/// Normalized expansion of the pair of equations for the family mu W to order
/// N around `base`, which must solve both equations for mu0 W. Without a base
/// the trivial point (0, 0, 0, 1) at mu0 = 0 is used.
inline PerturbativeSeries expand_series(const ModelConfig& family, int order, double mu0 = 0.0,
                                        const SolverState* base = nullptr, const SeriesOptions& opts = {},
                                        int grid_size = 64) {
  if (order < 0) fail(ErrorKind::InvalidArgument, "series order must be nonnegative");
  check_model(family);
  PerturbativeSeries s;
  s.mu0 = mu0;
  s.order = order;
  s.kind = SeriesKind::Pair;
  if (base != nullptr) {
    s.base = recentered(*base);
  } else {
    if (mu0 != 0.0) fail(ErrorKind::InvalidArgument, "a base point is required for mu0 != 0");
    s.base = SolverState::trivial(family.field_dim(), grid_size);
  }
  s.v.push_back(s.base.v);
  s.c.push_back(s.base.c);
  s.sigma.push_back(s.base.sigma);
  s.lambda.push_back(s.base.lambda);

  const ModelConfig at_base = with_potential_scale(family, mu0);
  const FactorData factors = build_factors(s.base, at_base);
  const SpectralField& c0_plus = factors.c_plus;
  detail::SeriesComposer comp(family, s.base.v);

  // P_m: order-m coefficient of -c + 2 - mu dW - sigma.
  std::vector<SpectralField> p{factors.factor};
  SpectralField w_prev = comp.coefficient(0, 0);
  SpectralField dw_prev = comp.coefficient(0, 1);

  for (int k = 1; k <= order; ++k) {
    comp.open_order();
    const SpectralField w_partial = mu0 * comp.coefficient(k, 0) + w_prev;
    const SpectralField dw_partial = mu0 * comp.coefficient(k, 1) + dw_prev;

    SpectralField e = w_partial;
    for (int m = 1; m < k; ++m) e += s.sigma[static_cast<std::size_t>(m)] * s.v[static_cast<std::size_t>(k - m)];
    SpectralField f = (-1.0 * dw_partial) * c0_plus;
    for (int m = 1; m < k; ++m)
      f += p[static_cast<std::size_t>(m)] * translate(s.c[static_cast<std::size_t>(k - m)], family.freq.omega);

    const NewtonUpdate u = solve_linearized(factors, s.base, e, f);
    s.v.push_back(u.v_hat - average(u.v_hat));
    s.c.push_back(u.c_hat);
    s.sigma.push_back(u.sigma_hat);
    s.lambda.push_back(u.lambda_hat);
    detail::check_growth(s.v, opts);

    comp.close_order(s.v.back());
    const SpectralField w_full = comp.coefficient(k, 0);
    const SpectralField dw_full = comp.coefficient(k, 1);
    p.push_back(-1.0 * s.c.back() - (mu0 * dw_full + dw_prev) - s.sigma.back());
    w_prev = w_full;
    dw_prev = dw_full;
  }
  return s;
}

/// Expansion of the equilibrium equation alone around the trivial base at
/// mu0 = 0, where the linearization is the constant-coefficient operator
/// v_+ + v_- - 2v. The counterterm sigma never enters and is kept at zero.
inline PerturbativeSeries expand_equilibrium_series(const ModelConfig& family, int order, int grid_size = 64,
                                                    const SeriesOptions& opts = {}) {
  check_model(family);
  PerturbativeSeries s;
  s.order = order;
  s.kind = SeriesKind::EquilibriumOnly;
  s.base = SolverState::trivial(family.field_dim(), grid_size);
  const int dim = family.field_dim();
  s.v.push_back(s.base.v);
  s.c.push_back(s.base.c);
  s.sigma.push_back(0.0);
  s.lambda.push_back(0.0);
  detail::SeriesComposer comp(family, s.base.v);
  for (int k = 1; k <= order; ++k) {
    comp.open_order();
    // [mu W o v]_k = [W o v]_{k-1}; sigma = 0 removes every other term.
    const SpectralField r = -1.0 * comp.coefficient(k - 1, 0);
    const SpectralField vk = map_coefficients(r, [&](Complex c, const Mode& mode) -> Complex {
      if (mode == Mode{0, 0, 0} || c == Complex{}) return Complex{};
      const Complex t = translation_symbol(mode, family.freq);
      const double divisor = 2.0 * t.real() - 2.0;
      if (std::abs(divisor) < kSmallDivisorFloor) fail(ErrorKind::SmallDivisorUnderflow, "divisor below 1e-13");
      return c / divisor;
    });
    s.v.push_back(vk);
    s.c.push_back(SpectralField::zeros(dim, grid_size));
    s.sigma.push_back(0.0);
    s.lambda.push_back(average(r));
    detail::check_growth(s.v, opts);
    comp.close_order(vk);
  }
  return s;
}

/// Horner evaluation of the partial sums at mu.
inline SolverState evaluate_series(const PerturbativeSeries& s, double mu) {
  const double t = mu - s.mu0;
  SolverState out{s.v.back(), s.c.back(), s.sigma.back(), s.lambda.back()};
  for (int k = s.order - 1; k >= 0; --k) {
    const auto i = static_cast<std::size_t>(k);
    out.v = out.v * t + s.v[i];
    out.c = out.c * t + s.c[i];
    out.sigma = out.sigma * t + s.sigma[i];
    out.lambda = out.lambda * t + s.lambda[i];
  }
  out.v -= average(out.v);
  return out;
}

/// Least-squares slope of log y against log x.
inline double log_log_slope(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

struct TruncationFit {
  std::vector<double> mu;
  std::vector<double> res_e;
  std::vector<double> res_f;
  double slope_e = std::numeric_limits<double>::quiet_NaN();
  double slope_f = std::numeric_limits<double>::quiet_NaN();
  bool skipped = false;
};

/// Residuals of the truncated series for the family mu W at each mu, and the
/// fitted exponents of their decay in |mu - mu0|.
inline TruncationFit truncation_residual(const PerturbativeSeries& s, const ModelConfig& family,
                                         std::span<const double> mu_list, double floor = 1e-13) {
  TruncationFit fit;
  std::vector<double> dist;
  for (double mu : mu_list) {
    const SolverState st = evaluate_series(s, mu);
    const ModelConfig cfg = with_potential_scale(family, mu);
    const PotentialTerms terms = eval_potential_terms(st.v, cfg);
    fit.mu.push_back(mu);
    dist.push_back(std::abs(mu - s.mu0));
    fit.res_e.push_back(sup_norm(equilibrium_residual(st, cfg, terms.w)));
    fit.res_f.push_back(s.kind == SeriesKind::Pair ? sup_norm(factorization_residual(st, cfg, terms.dw)) : 0.0);
  }
  const double largest = std::max(*std::max_element(fit.res_e.begin(), fit.res_e.end()),
                                  *std::max_element(fit.res_f.begin(), fit.res_f.end()));
  if (largest < floor) {
    fit.skipped = true;
    return fit;
  }
  fit.slope_e = log_log_slope(dist, fit.res_e);
  if (s.kind == SeriesKind::Pair) fit.slope_f = log_log_slope(dist, fit.res_f);
  return fit;
}

namespace detail {

// Trigonometric interpolation of samples y_m = f(m / M) evaluated at x; also
// returns the spectral energy fraction in |m| > M/3.
struct Interpolant {
  std::vector<Complex> coeffs;
  int size = 0;

  explicit Interpolant(const std::vector<double>& samples) : size(static_cast<int>(samples.size())) {
    std::vector<Complex> data(samples.begin(), samples.end());
    coeffs = fft::transform(data, {size}, fft::Direction::Forward);
    for (auto& c : coeffs) c /= static_cast<double>(size);
  }

  double operator()(double x) const {
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
      const int m = mode_of(i, size);
      if (size % 2 == 0 && m == -size / 2) {
        sum += coeffs[static_cast<std::size_t>(i)].real() * std::cos(kTwoPi * m * x);
        continue;
      }
      sum += (coeffs[static_cast<std::size_t>(i)] * std::polar(1.0, kTwoPi * m * x)).real();
    }
    return sum;
  }

  double tail_energy() const {
    double tail = 0.0;
    for (int i = 0; i < size; ++i)
      if (3 * std::abs(mode_of(i, size)) > size) tail += std::norm(coeffs[static_cast<std::size_t>(i)]);
    return tail;
  }
  double total_energy() const {
    double total = 0.0;
    for (const auto& c : coeffs) total += std::norm(c);
    return total;
  }
};

}  // namespace detail

struct SymmetryReport {
  std::vector<double> eta;
  std::vector<double> res_e;
  std::vector<double> res_f;
  double max_res_e = 0.0;
  double max_res_f = 0.0;
  double eta_tail = 0.0;
};

/// Transformed family data at one eta grid point.
struct TransformedPoint {
  SolverState state;
  double eta = 0.0;
};

/// Given solutions family[m] at eta_m = m / M, builds for each eta_m
///   v~(psi) = v_{eta'}(psi + iota beta_psi) + iota,  eta' = eta_m + iota beta_eta,
///   sigma~ = sigma(eta'),  lambda~ = lambda(eta') - iota sigma(eta'),
///   c~(psi) = c_{eta'}(psi + iota beta_psi),
/// with eta-dependence interpolated by Fourier series.
inline std::vector<TransformedPoint> transform_family(const std::vector<SolverState>& family,
                                                      const ModelConfig& config, double iota,
                                                      double* eta_tail = nullptr) {
  const int count = static_cast<int>(family.size());
  if (count == 0) fail(ErrorKind::InvalidArgument, "empty eta family");
  const int dim = family[0].v.dim();
  const int n = family[0].v.grid_size();
  const std::size_t size = family[0].v.size();
  const double beta_eta = config.beta[static_cast<std::size_t>(dim)];
  const std::vector<double> shift_psi(config.beta.begin(), config.beta.begin() + dim);

  double tail = 0.0, total = 0.0;
  auto interpolant = [&](const std::vector<double>& samples) {
    detail::Interpolant ip(samples);
    tail += ip.tail_energy();
    total += ip.total_energy();
    return ip;
  };
  std::vector<double> sig(static_cast<std::size_t>(count)), lam(static_cast<std::size_t>(count));
  for (int m = 0; m < count; ++m) {
    sig[static_cast<std::size_t>(m)] = family[static_cast<std::size_t>(m)].sigma;
    lam[static_cast<std::size_t>(m)] = family[static_cast<std::size_t>(m)].lambda;
  }
  const auto sig_ip = interpolant(sig);
  const auto lam_ip = interpolant(lam);
  std::vector<detail::Interpolant> v_ip, c_ip;
  std::vector<double> column(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < size; ++i) {
    for (int m = 0; m < count; ++m) column[static_cast<std::size_t>(m)] = family[static_cast<std::size_t>(m)].v.values()[i];
    v_ip.push_back(interpolant(column));
    for (int m = 0; m < count; ++m) column[static_cast<std::size_t>(m)] = family[static_cast<std::size_t>(m)].c.values()[i];
    c_ip.push_back(interpolant(column));
  }
  const double fraction = total > 0.0 ? tail / total : 0.0;
  if (eta_tail != nullptr) *eta_tail = fraction;
  if (fraction > 1e-8)
    fail(ErrorKind::InterpolationUnderResolved, "eta spectrum tail fraction " + sci(fraction));

  std::vector<TransformedPoint> out;
  std::vector<double> vv(size), cc(size);
  for (int m = 0; m < count; ++m) {
    const double eta = static_cast<double>(m) / count;
    const double eta_shifted = eta + iota * beta_eta;
    for (std::size_t i = 0; i < size; ++i) {
      vv[i] = v_ip[i](eta_shifted);
      cc[i] = c_ip[i](eta_shifted);
    }
    const SpectralField v_at = SpectralField::from_grid(dim, n, vv);
    const SpectralField c_at = SpectralField::from_grid(dim, n, cc);
    std::vector<double> shift(shift_psi);
    for (auto& x : shift) x *= iota;
    const double s = sig_ip(eta_shifted);
    SolverState st{translate(v_at, shift) + iota, translate(c_at, shift), s, lam_ip(eta_shifted) - iota * s};
    out.push_back({std::move(st), eta});
  }
  return out;
}

/// Residuals of the transformed family, which solves the same equations
/// whenever the original family does.
inline SymmetryReport check_symmetry(const std::vector<SolverState>& family, const ModelConfig& config, double iota) {
  SymmetryReport report;
  const auto points = transform_family(family, config, iota, &report.eta_tail);
  for (const auto& p : points) {
    ModelConfig cfg = config;
    cfg.eta = p.eta;
    const PotentialTerms terms = eval_potential_terms(p.state.v, cfg);
    const double e = sup_norm(equilibrium_residual(p.state, cfg, terms.w));
    const double f = sup_norm(factorization_residual(p.state, cfg, terms.dw));
    report.eta.push_back(p.eta);
    report.res_e.push_back(e);
    report.res_f.push_back(f);
    report.max_res_e = std::max(report.max_res_e, e);
    report.max_res_f = std::max(report.max_res_f, f);
  }
  return report;
}

}  // namespace fkkam
