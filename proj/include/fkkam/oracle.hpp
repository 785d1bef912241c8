#pragma once

// Dense Galerkin solver for the linearized equations over the mode box
// |k_i| <= K. Unknown fields are packed as real vectors: the k = 0 mode
// followed by (Re, Im) pairs over a half-space of the box, so every assembled
// matrix is real and Hermitian symmetry holds by construction.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "fkkam/cohomology.hpp"
#include "fkkam/errors.hpp"
#include "fkkam/fk_model.hpp"
#include "fkkam/kam_solver.hpp"
#include "fkkam/spectral_field.hpp"
#include "fkkam/twisted.hpp"

namespace fkkam {

inline constexpr int kMaxDenseCutoff = 64;
inline constexpr double kSingularConditionLimit = 1e13;

class ModeBasis {
 public:
  ModeBasis(int dim, int cutoff) : dim_(dim), cutoff_(cutoff), side_(2 * cutoff + 1) {
    if (dim < 1 || dim > 3) fail(ErrorKind::InvalidArgument, "mode basis dimension must be 1, 2 or 3");
    if (cutoff < 0 || cutoff > kMaxDenseCutoff) fail(ErrorKind::InvalidArgument, "dense cutoff must lie in [0, 64]");
    std::size_t count = 1;
    for (int i = 0; i < dim; ++i) count *= static_cast<std::size_t>(side_);
    for (std::size_t flat = 0; flat < count; ++flat) {
      const Mode k = mode_at(flat);
      box_.push_back(k);
      if (in_half_space(k)) half_.push_back(k);
    }
  }

  int dim() const noexcept { return dim_; }
  int cutoff() const noexcept { return cutoff_; }
  /// Number of complex box modes.
  Eigen::Index box_size() const noexcept { return static_cast<Eigen::Index>(box_.size()); }
  /// Number of real unknowns per field.
  Eigen::Index real_size() const noexcept { return 1 + 2 * static_cast<Eigen::Index>(half_.size()); }
  const std::vector<Mode>& box() const noexcept { return box_; }

  Eigen::Index box_index(const Mode& k) const {
    Eigen::Index flat = 0;
    for (int i = 0; i < dim_; ++i) flat = flat * side_ + (k[static_cast<std::size_t>(i)] + cutoff_);
    return flat;
  }

  /// Complex box coefficients of a real field packed as (k = 0, Re, Im, ...).
  Eigen::MatrixXcd expand() const {
    Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(box_size(), real_size());
    p(box_index(Mode{0, 0, 0}), 0) = 1.0;
    for (std::size_t j = 0; j < half_.size(); ++j) {
      const auto col = static_cast<Eigen::Index>(1 + 2 * j);
      const Mode& k = half_[j];
      p(box_index(k), col) = 1.0;
      p(box_index(minus(k)), col) = 1.0;
      p(box_index(k), col + 1) = Complex(0.0, 1.0);
      p(box_index(minus(k)), col + 1) = Complex(0.0, -1.0);
    }
    return p;
  }

  /// Real and imaginary parts of Hermitian box coefficients in packed order.
  Eigen::MatrixXcd restrict() const {
    Eigen::MatrixXcd q = Eigen::MatrixXcd::Zero(real_size(), box_size());
    q(0, box_index(Mode{0, 0, 0})) = 1.0;
    for (std::size_t j = 0; j < half_.size(); ++j) {
      const auto row = static_cast<Eigen::Index>(1 + 2 * j);
      const Mode& k = half_[j];
      q(row, box_index(k)) = 0.5;
      q(row, box_index(minus(k))) = 0.5;
      q(row + 1, box_index(k)) = Complex(0.0, -0.5);
      q(row + 1, box_index(minus(k))) = Complex(0.0, 0.5);
    }
    return q;
  }

  /// Packed real coefficients of f restricted to the box.
  Eigen::VectorXd pack(const SpectralField& f) const {
    check_field(f);
    Eigen::VectorXd x(real_size());
    x(0) = f.coefficients()[0].real();
    for (std::size_t j = 0; j < half_.size(); ++j) {
      const Complex c = f.coefficient(std::span<const int>(half_[j].data(), static_cast<std::size_t>(dim_)));
      x(static_cast<Eigen::Index>(1 + 2 * j)) = c.real();
      x(static_cast<Eigen::Index>(2 + 2 * j)) = c.imag();
    }
    return x;
  }

  SpectralField unpack(const Eigen::VectorXd& x, int grid_size) const {
    if (2 * cutoff_ >= grid_size) fail(ErrorKind::InvalidArgument, "dense cutoff must be below grid_size / 2");
    SpectralField probe = SpectralField::zeros(dim_, grid_size);
    std::vector<Complex> coeffs(probe.size());
    coeffs[0] = x(0);
    for (std::size_t j = 0; j < half_.size(); ++j) {
      const Complex c(x(static_cast<Eigen::Index>(1 + 2 * j)), x(static_cast<Eigen::Index>(2 + 2 * j)));
      const Mode& k = half_[j];
      const Mode mk = minus(k);
      coeffs[probe.flat_index(std::span<const int>(k.data(), static_cast<std::size_t>(dim_)))] = c;
      coeffs[probe.flat_index(std::span<const int>(mk.data(), static_cast<std::size_t>(dim_)))] = std::conj(c);
    }
    return SpectralField::from_coefficients(dim_, grid_size, std::move(coeffs));
  }

  /// Galerkin matrix of multiplication by g: entry (k, l) = g_hat(k - l).
  Eigen::MatrixXcd multiply(const SpectralField& g) const {
    const Eigen::Index n = box_size();
    Eigen::MatrixXcd m(n, n);
    const int half_grid = g.grid_size() / 2;
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < n; ++c) {
        Mode d{0, 0, 0};
        bool inside = true;
        for (int i = 0; i < dim_; ++i) {
          const auto ii = static_cast<std::size_t>(i);
          d[ii] = box_[static_cast<std::size_t>(r)][ii] - box_[static_cast<std::size_t>(c)][ii];
          inside = inside && std::abs(d[ii]) < half_grid;
        }
        m(r, c) = inside ? g.coefficient(std::span<const int>(d.data(), static_cast<std::size_t>(dim_))) : Complex{};
      }
    }
    return m;
  }

  /// Diagonal matrix of the translation by shift: e^{2 pi i k.shift}.
  Eigen::MatrixXcd translation(std::span<const double> shift) const {
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(box_size(), box_size());
    for (Eigen::Index r = 0; r < box_size(); ++r) {
      double phase = 0.0;
      for (int i = 0; i < dim_; ++i) phase += box_[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] * shift[static_cast<std::size_t>(i)];
      m(r, r) = std::polar(1.0, kTwoPi * phase);
    }
    return m;
  }

  /// Real matrix of a real-preserving complex operator in packed coordinates,
  /// restrict() * op * expand() assembled row and column pair at a time.
  Eigen::MatrixXd realify(const Eigen::MatrixXcd& op) const {
    const Eigen::Index m = real_size();
    const Eigen::Index zero = box_index(Mode{0, 0, 0});
    Eigen::MatrixXcd rows(m, box_size());
    rows.row(0) = op.row(zero);
    for (std::size_t j = 0; j < half_.size(); ++j) {
      const auto r = static_cast<Eigen::Index>(1 + 2 * j);
      const auto plus = op.row(box_index(half_[j]));
      const auto neg = op.row(box_index(minus(half_[j])));
      rows.row(r) = 0.5 * (plus + neg);
      rows.row(r + 1) = Complex(0.0, -0.5) * (plus - neg);
    }
    Eigen::MatrixXd out(m, m);
    out.col(0) = rows.col(zero).real();
    for (std::size_t j = 0; j < half_.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(1 + 2 * j);
      const auto plus = rows.col(box_index(half_[j]));
      const auto neg = rows.col(box_index(minus(half_[j])));
      out.col(c) = (plus + neg).real();
      out.col(c + 1) = (Complex(0.0, 1.0) * (plus - neg)).real();
    }
    return out;
  }

 private:
  Mode mode_at(std::size_t flat) const {
    Mode k{0, 0, 0};
    for (int i = dim_ - 1; i >= 0; --i) {
      k[static_cast<std::size_t>(i)] = static_cast<int>(flat % static_cast<std::size_t>(side_)) - cutoff_;
      flat /= static_cast<std::size_t>(side_);
    }
    return k;
  }

  static Mode minus(const Mode& k) { return Mode{-k[0], -k[1], -k[2]}; }

  bool in_half_space(const Mode& k) const {
    for (int i = 0; i < dim_; ++i) {
      const int ki = k[static_cast<std::size_t>(i)];
      if (ki != 0) return ki > 0;
    }
    return false;
  }

  void check_field(const SpectralField& f) const {
    if (f.dim() != dim_) fail(ErrorKind::ShapeMismatch, "field dimension differs from the mode basis");
    if (2 * cutoff_ >= f.grid_size()) fail(ErrorKind::InvalidArgument, "dense cutoff must be below grid_size / 2");
  }

  int dim_;
  int cutoff_;
  int side_;
  std::vector<Mode> box_;
  std::vector<Mode> half_;
};

struct DenseSolution {
  Eigen::VectorXd x;
  double condition = 1.0;
};

/// Solves m x = rhs by partial-pivot LU; the condition number is the
/// 1-norm estimate 1 / rcond.
inline DenseSolution dense_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs) {
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  const double rcond = lu.rcond();
  const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!(cond < kSingularConditionLimit))
    fail(ErrorKind::SingularSystem, "dense system condition number " + std::to_string(cond));
  return DenseSolution{lu.solve(rhs), cond};
}

/// Largest cutoff usable on a grid: every box mode and difference stays resolvable.
inline int default_cutoff(int grid_size) { return std::min(kMaxDenseCutoff, grid_size / 2 - 1); }

struct DenseTwistedSolution {
  double lambda = 0.0;
  SpectralField v;
  double condition = 1.0;
};

/// Dense solve of a v(. + Omega) - b v = phi + lambda w with <v> = 0.
inline DenseTwistedSolution dense_twisted_solve(const SpectralField& a, const SpectralField& b, const SpectralField& phi,
                                                const SpectralField& w, const Frequency& freq, int cutoff) {
  const ModeBasis basis(a.dim(), cutoff);
  const Eigen::Index m = basis.real_size();
  const Eigen::MatrixXcd op = basis.multiply(a) * basis.translation(freq.omega) - basis.multiply(b);
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(m + 1, m + 1);
  sys.topLeftCorner(m, m) = basis.realify(op);
  sys.block(0, m, m, 1) = -basis.pack(w);
  sys(m, 0) = 1.0;
  Eigen::VectorXd rhs(m + 1);
  rhs << basis.pack(phi), 0.0;
  const auto sol = dense_solve(sys, rhs);
  return {sol.x(m), basis.unpack(sol.x.head(m), a.grid_size()), sol.condition};
}

/// Dense solve of op x + G = target with <x> = 0 for a real-preserving complex operator.
inline DenseTwistedSolution dense_constant_solve(const ModeBasis& basis, const Eigen::MatrixXcd& op,
                                                 const SpectralField& target) {
  const Eigen::Index m = basis.real_size();
  Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(m + 1, m + 1);
  sys.topLeftCorner(m, m) = basis.realify(op);
  sys(0, m) = 1.0;
  sys(m, 0) = 1.0;
  Eigen::VectorXd rhs(m + 1);
  rhs << basis.pack(target), 0.0;
  const auto sol = dense_solve(sys, rhs);
  return {sol.x(m), basis.unpack(sol.x.head(m), target.grid_size()), sol.condition};
}

/// Galerkin matrix of the chain x -> outer(T_{-shift} inner(x)).
inline Eigen::MatrixXcd dense_chain_operator(const ModeBasis& basis, const TwistedChain& chain,
                                             std::span<const double> inner_shift) {
  const auto& o = chain.outer();
  const auto& in = chain.inner();
  const Eigen::MatrixXcd outer = basis.multiply(o.a()) * basis.translation(o.frequency().omega) - basis.multiply(o.b());
  const Eigen::MatrixXcd inner =
      basis.multiply(in.a()) * basis.translation(in.frequency().omega) - basis.multiply(in.b());
  return outer * basis.translation(negated(inner_shift)) * inner;
}

/// Which linear operator the dense equilibrium block uses.
enum class OracleTarget {
  /// A+ A- = T_Omega + T_-Omega - (c + 1/c_+), the operator the fast path inverts.
  Factorized,
  /// T_Omega + T_-Omega - 2 + dW + sigma, the true derivative of the equilibrium equation.
  ExactNewton,
};

constexpr std::string_view to_string(OracleTarget t) {
  return t == OracleTarget::Factorized ? "factorized" : "exact_newton";
}

struct DenseUpdate {
  OracleTarget target = OracleTarget::Factorized;
  int cutoff = 0;
  SpectralField A, B;
  double G = 0.0, D = 0.0;
  double sigma_hat = 0.0;
  double lambda_hat = 0.0;
  SpectralField v_hat;
  SpectralField c_hat;
  /// Monolithic solve of the coupled system for (v_hat, sigma_hat, lambda_hat, c_hat).
  SpectralField v_hat_coupled;
  SpectralField c_hat_coupled;
  double sigma_hat_coupled = 0.0;
  double lambda_hat_coupled = 0.0;
  double condition_AG = 1.0;
  double condition_BD = 1.0;
  double condition_sigma_c = 1.0;
  double condition_coupled = 1.0;
};

/// Dense counterpart of solve_linearized for residuals e, f at state s.
inline DenseUpdate dense_linearized_solve(const SolverState& s, const ModelConfig& config, int cutoff,
                                          OracleTarget target = OracleTarget::ExactNewton) {
  const int n = s.v.grid_size();
  const ModeBasis basis(s.v.dim(), cutoff);
  const Eigen::Index m = basis.real_size();
  const auto& omega = config.freq.omega;
  const PotentialTerms terms = eval_potential_terms(s.v, config);
  const SpectralField e = equilibrium_residual(s, config, terms.w);
  const SpectralField f = factorization_residual(s, config, terms.dw);
  const SpectralField c_plus = translate(s.c, omega);
  const SpectralField a = reciprocal(c_plus);
  const SpectralField factor = ((2.0 - s.sigma) - s.c) - terms.dw;
  const SpectralField ddw_c = terms.ddw * c_plus;

  const Eigen::MatrixXcd t_plus = basis.translation(omega);
  const Eigen::MatrixXcd t_minus = basis.translation(negated(omega));
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(basis.box_size(), basis.box_size());
  Eigen::MatrixXcd lin;
  if (target == OracleTarget::Factorized) {
    lin = basis.multiply(a) * (basis.multiply(c_plus) * t_plus - eye) - (basis.multiply(s.c) - t_minus);
  } else {
    lin = t_plus + t_minus + basis.multiply(terms.dw + (s.sigma - 2.0));
  }
  const Eigen::MatrixXcd fac = basis.multiply(factor) * t_plus - basis.multiply(c_plus);

  DenseUpdate u;
  u.target = target;
  u.cutoff = cutoff;
  auto ag = dense_constant_solve(basis, lin, -1.0 * e);
  auto bd = dense_constant_solve(basis, lin, -1.0 * s.v);
  u.A = std::move(ag.v);
  u.G = ag.lambda;
  u.condition_AG = ag.condition;
  u.B = std::move(bd.v);
  u.D = bd.lambda;
  u.condition_BD = bd.condition;

  // fac c_hat = (ddW c_+ A - f) + sigma_hat (c_+ + ddW c_+ B), <c_hat> = 0.
  {
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(m + 1, m + 1);
    sys.topLeftCorner(m, m) = basis.realify(fac);
    sys.block(0, m, m, 1) = -basis.pack(c_plus + ddw_c * u.B);
    sys(m, 0) = 1.0;
    Eigen::VectorXd rhs(m + 1);
    rhs << basis.pack(ddw_c * u.A - f), 0.0;
    const auto sol = dense_solve(sys, rhs);
    u.sigma_hat = sol.x(m);
    u.c_hat = basis.unpack(sol.x.head(m), n);
    u.condition_sigma_c = sol.condition;
  }
  u.v_hat = u.A + u.B * u.sigma_hat;
  u.lambda_hat = u.G + u.sigma_hat * u.D;

  // Unknowns (v_hat, c_hat, sigma_hat, lambda_hat); rows: equilibrium,
  // factorization, <v_hat> = 0, <c_hat> = 0.
  {
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(2 * m + 2, 2 * m + 2);
    sys.block(0, 0, m, m) = basis.realify(lin);
    sys.block(0, 2 * m, m, 1) = basis.pack(s.v);
    sys(0, 2 * m + 1) = 1.0;
    sys.block(m, 0, m, m) = -basis.realify(basis.multiply(ddw_c));
    sys.block(m, m, m, m) = basis.realify(fac);
    sys.block(m, 2 * m, m, 1) = -basis.pack(c_plus);
    sys(2 * m, 0) = 1.0;
    sys(2 * m + 1, m) = 1.0;
    Eigen::VectorXd rhs(2 * m + 2);
    rhs << -basis.pack(e), -basis.pack(f), 0.0, 0.0;
    const auto sol = dense_solve(sys, rhs);
    u.v_hat_coupled = basis.unpack(sol.x.head(m), n);
    u.c_hat_coupled = basis.unpack(sol.x.segment(m, m), n);
    u.sigma_hat_coupled = sol.x(2 * m);
    u.lambda_hat_coupled = sol.x(2 * m + 1);
    u.condition_coupled = sol.condition;
  }
  return u;
}

struct SolverComparison {
  int cutoff = 0;
  /// Componentwise differences, each relative to the sup norm of its block
  /// (A, G), (B, D) or (sigma_hat, c_hat) in the dense solution.
  double rel_A = 0.0, rel_G = 0.0, rel_B = 0.0, rel_D = 0.0, rel_sigma = 0.0, rel_c = 0.0;
  /// Dense factorized monolithic solve against the fast update.
  double rel_coupled = 0.0;
  /// Fast update against the true Newton update, with the allowance for the
  /// dropped term f v_hat / c_+: max(1e-8, 10 eps |update|).
  double exact_difference = 0.0;
  double exact_allowance = 0.0;
  double residual = 0.0;
  double condition = 1.0;
  double fast_seconds = 0.0;
  double dense_seconds = 0.0;

  double max_relative() const { return std::max({rel_A, rel_G, rel_B, rel_D, rel_sigma, rel_c, rel_coupled}); }
  bool exact_within_allowance() const { return exact_difference <= exact_allowance; }
};

namespace detail {

inline double relative_to(double diff, double scale) { return scale > 0.0 ? diff / scale : diff; }

inline double update_norm(const SpectralField& v, const SpectralField& c, double sigma, double lambda) {
  return std::max({sup_norm(v), sup_norm(c), std::abs(sigma), std::abs(lambda)});
}

}  // namespace detail

inline SolverComparison compare_solvers(const SolverState& s, const ModelConfig& config, int cutoff) {
  using Clock = std::chrono::steady_clock;
  SolverComparison r;
  r.cutoff = cutoff;
  const auto t0 = Clock::now();
  const FactorData factors = build_factors(s, config);
  const SpectralField e = equilibrium_residual(s, config, factors.potential.w);
  const SpectralField f = factorization_residual(s, config, factors.potential.dw);
  const NewtonUpdate fast = solve_linearized(factors, s, e, f);
  const auto t1 = Clock::now();
  const DenseUpdate dense = dense_linearized_solve(s, config, cutoff, OracleTarget::Factorized);
  const auto t2 = Clock::now();
  const DenseUpdate exact = dense_linearized_solve(s, config, cutoff, OracleTarget::ExactNewton);
  r.fast_seconds = std::chrono::duration<double>(t1 - t0).count();
  r.dense_seconds = std::chrono::duration<double>(t2 - t1).count();

  const double ag = std::max(sup_norm(dense.A), std::abs(dense.G));
  const double bd = std::max(sup_norm(dense.B), std::abs(dense.D));
  const double sc = std::max(sup_norm(dense.c_hat), std::abs(dense.sigma_hat));
  r.rel_A = detail::relative_to(sup_norm(fast.A - dense.A), ag);
  r.rel_G = detail::relative_to(std::abs(fast.G - dense.G), ag);
  r.rel_B = detail::relative_to(sup_norm(fast.B - dense.B), bd);
  r.rel_D = detail::relative_to(std::abs(fast.D - dense.D), bd);
  r.rel_sigma = detail::relative_to(std::abs(fast.sigma_hat - dense.sigma_hat), sc);
  r.rel_c = detail::relative_to(sup_norm(fast.c_hat - dense.c_hat), sc);
  const double coupled_norm = detail::update_norm(dense.v_hat_coupled, dense.c_hat_coupled, dense.sigma_hat_coupled,
                                                  dense.lambda_hat_coupled);
  r.rel_coupled = detail::relative_to(
      detail::update_norm(fast.v_hat - dense.v_hat_coupled, fast.c_hat - dense.c_hat_coupled,
                          fast.sigma_hat - dense.sigma_hat_coupled, fast.lambda_hat - dense.lambda_hat_coupled),
      coupled_norm);
  r.exact_difference =
      detail::update_norm(fast.v_hat - exact.v_hat_coupled, fast.c_hat - exact.c_hat_coupled,
                          fast.sigma_hat - exact.sigma_hat_coupled, fast.lambda_hat - exact.lambda_hat_coupled);
  r.residual = std::max(sup_norm(e), sup_norm(f));
  r.exact_allowance =
      std::max(1e-8, 10.0 * r.residual *
                         detail::update_norm(exact.v_hat_coupled, exact.c_hat_coupled, exact.sigma_hat_coupled,
                                             exact.lambda_hat_coupled));
  r.condition = exact.condition_coupled;
  return r;
}

}  // namespace fkkam
