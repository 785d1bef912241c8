#pragma once

// First-order difference equations with variable coefficients
//
//     a(psi) v(psi + Omega) - b(psi) v(psi) = phi(psi) + lambda w(psi),
//
// reduced to constant coefficients by writing a = abar gamma_a(.+Omega)/gamma_a
// and b = bbar gamma_b/gamma_b(.+Omega). With m = gamma_a gamma_b v the
// equation becomes abar m_+ - bbar m = (phi + lambda w) gamma_a (gamma_b)_+.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "fkkam/cohomology.hpp"
#include "fkkam/errors.hpp"
#include "fkkam/spectral_field.hpp"

namespace fkkam {

inline constexpr double kEqualAverageTolerance = 1e-8;
inline constexpr double kTransversalityThreshold = 1e-6;

enum class Orientation { Forward, Backward };

enum class AverageBranch { EqualAverage, ADominant, BDominant };

constexpr std::string_view to_string(AverageBranch branch) {
  switch (branch) {
    case AverageBranch::EqualAverage: return "equal-average";
    case AverageBranch::ADominant: return "a-dominant";
    case AverageBranch::BDominant: return "b-dominant";
  }
  return "unknown";
}

inline AverageBranch classify_averages(double a_bar, double b_bar) {
  const double gap = std::log(a_bar) - std::log(b_bar);
  if (std::abs(gap) <= kEqualAverageTolerance) return AverageBranch::EqualAverage;
  return gap > 0.0 ? AverageBranch::ADominant : AverageBranch::BDominant;
}

struct TwistedFactorization {
  double avg_coeff = 1.0;
  SpectralField gamma;
  Orientation orientation = Orientation::Forward;
};

/// Writes a positive coefficient as avg * gamma_+/gamma (forward) or
/// avg * gamma/gamma_+ (backward) with <log gamma> = 0.
inline TwistedFactorization factor_coefficient(const SpectralField& coeff, const Frequency& freq,
                                               Orientation orientation) {
  check_frequency_shape(coeff, freq);
  const SpectralField log_c = log_field(coeff);
  const double mean = average(log_c);
  SpectralField rhs = log_c - mean;
  if (orientation == Orientation::Backward) rhs *= -1.0;
  const SpectralField g = solve_constant_cohomology(rhs, freq);
  return TwistedFactorization{std::exp(mean), exp_field(g), orientation};
}

inline SpectralField reconstruct(const TwistedFactorization& fac, const Frequency& freq) {
  const SpectralField shifted = translate(fac.gamma, freq.omega);
  const SpectralField ratio = fac.orientation == Orientation::Forward ? shifted * reciprocal(fac.gamma)
                                                                       : fac.gamma * reciprocal(shifted);
  return ratio * fac.avg_coeff;
}

namespace detail {

inline Complex twisted_divisor(double a_bar, double b_bar, const Mode& k, const Frequency& freq) {
  const Complex divisor = a_bar * translation_symbol(k, freq) - b_bar;
  if (std::abs(divisor) < kSmallDivisorFloor) fail(ErrorKind::SmallDivisorUnderflow, "twisted divisor below 1e-13");
  return divisor;
}

// Solves abar m_+ - bbar m = rhs on the nonzero modes; the k = 0 mode is zero.
inline SpectralField solve_nonzero_modes(double a_bar, double b_bar, const SpectralField& rhs, const Frequency& freq) {
  return map_coefficients(rhs, [&](Complex c, const Mode& k) -> Complex {
    if (k == Mode{0, 0, 0} || c == Complex{}) return Complex{};
    return c / twisted_divisor(a_bar, b_bar, k, freq);
  });
}

// |det M| divided by the product of the row norms of `scale`, a matrix of the
// natural magnitudes of the entries (sup norms of the fields averaged into
// them). Near zero when the system is singular relative to its data.
template <class Matrix>
double normalized_determinant(const Matrix& m, const Matrix& scale) {
  double rows = 1.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows *= std::max(scale.row(i).norm(), m.row(i).norm());
  return rows > 0.0 ? std::abs(m.determinant()) / rows : 0.0;
}

}  // namespace detail

/// Solves abar m_+ - bbar m = rhs. In the equal-average branch the mean of rhs
/// must vanish and the k = 0 mode of m is set to zero.
inline SpectralField solve_constant_twisted(double a_bar, double b_bar, const SpectralField& rhs,
                                            const Frequency& freq) {
  check_frequency_shape(rhs, freq);
  if (!(a_bar > 0.0) || !(b_bar > 0.0)) fail(ErrorKind::InvalidArgument, "average coefficients must be positive");
  SpectralField m = detail::solve_nonzero_modes(a_bar, b_bar, rhs, freq);
  const double mean = average(rhs);
  if (classify_averages(a_bar, b_bar) == AverageBranch::EqualAverage) {
    if (std::abs(mean) > kMeanTolerance * std::max(sup_norm(rhs), 1e-300) && std::abs(mean) > 0.0)
      fail(ErrorKind::UnsolvableResonant, "equal averages with right-hand side mean " + std::to_string(mean));
    return m;
  }
  return m + mean / (a_bar - b_bar);
}

/// The operator v -> a v_+ - b v together with its log-factorization. Both
/// coefficients must have one common sign on the grid; negative pairs are
/// handled by flipping the sign of the whole equation.
class TwistedOperator {
 public:
  TwistedOperator(SpectralField a, SpectralField b, const Frequency& freq) : a_(std::move(a)), b_(std::move(b)), freq_(freq) {
    check_frequency_shape(a_, freq);
    if (!a_.same_shape(b_)) fail(ErrorKind::ShapeMismatch, "twisted coefficients on different grids");
    const bool a_pos = min_value(a_) > 0.0, a_neg = max_value(a_) < 0.0;
    const bool b_pos = min_value(b_) > 0.0, b_neg = max_value(b_) < 0.0;
    if (a_pos && b_pos) {
      sign_ = 1.0;
    } else if (a_neg && b_neg) {
      sign_ = -1.0;
    } else if ((a_pos || a_neg) && (b_pos || b_neg)) {
      fail(ErrorKind::MixedSign, "twisted coefficients have opposite signs");
    } else {
      fail(ErrorKind::NonPositiveCoefficient, "twisted coefficient changes sign on the grid");
    }
    fa_ = factor_coefficient(a_ * sign_, freq, Orientation::Forward);
    fb_ = factor_coefficient(b_ * sign_, freq, Orientation::Backward);
    weight_ = fa_.gamma * translate(fb_.gamma, freq.omega);
    kernel_ = reciprocal(fa_.gamma * fb_.gamma);
    branch_ = classify_averages(fa_.avg_coeff, fb_.avg_coeff);
  }

  const SpectralField& a() const noexcept { return a_; }
  const SpectralField& b() const noexcept { return b_; }
  const Frequency& frequency() const noexcept { return freq_; }
  const TwistedFactorization& factor_a() const noexcept { return fa_; }
  const TwistedFactorization& factor_b() const noexcept { return fb_; }
  double a_bar() const noexcept { return fa_.avg_coeff; }
  double b_bar() const noexcept { return fb_.avg_coeff; }
  double sign() const noexcept { return sign_; }
  AverageBranch branch() const noexcept { return branch_; }

  /// abar - bbar of the sign-normalized equation. The small systems below use
  /// it directly, so nearly equal averages are handled continuously.
  double gap() const noexcept { return fa_.avg_coeff - fb_.avg_coeff; }

  /// gamma_a (gamma_b)_+, the factor turning the right-hand side into constant-coefficient form.
  const SpectralField& weight() const noexcept { return weight_; }

  /// 1/(gamma_a gamma_b), the homogeneous direction: apply(s * kernel) = sign * s * gap / weight.
  const SpectralField& kernel() const noexcept { return kernel_; }

  SpectralField apply(const SpectralField& v) const {
    return a_ * translate(v, freq_.omega) - b_ * v;
  }

  /// Solution whose constant-coefficient image m has zero mean. Every solution
  /// of apply(v) = r is particular(r) + s * kernel() with s * gap() = solvability(r).
  SpectralField particular(const SpectralField& r) const {
    const SpectralField rhs = (r * weight_) * sign_;
    return detail::solve_nonzero_modes(fa_.avg_coeff, fb_.avg_coeff, rhs, freq_) * kernel_;
  }

  double solvability(const SpectralField& r) const { return sign_ * average(r * weight_); }

 private:
  SpectralField a_;
  SpectralField b_;
  Frequency freq_;
  double sign_ = 1.0;
  TwistedFactorization fa_;
  TwistedFactorization fb_;
  SpectralField weight_;
  SpectralField kernel_;
  AverageBranch branch_ = AverageBranch::EqualAverage;
};

struct TwistedSolution {
  double lambda = 0.0;
  SpectralField v;
  AverageBranch branch = AverageBranch::EqualAverage;
  double transversality = 1.0;
};

/// Unique (lambda, v) with <v> = 0 solving a v_+ - b v = phi + lambda w.
inline TwistedSolution solve_twisted(const TwistedOperator& op, const SpectralField& phi, const SpectralField& w) {
  const SpectralField s_phi = op.particular(phi);
  const SpectralField s_w = op.particular(w);
  const SpectralField& h = op.kernel();
  // Unknowns (lambda, s): solvability of phi + lambda w, then <v> = 0.
  Eigen::Matrix2d m;
  m << -op.solvability(w), op.gap(), average(s_w), average(h);
  Eigen::Matrix2d scale;
  scale << sup_norm(w * op.weight()), std::max(op.a_bar(), op.b_bar()), sup_norm(s_w), sup_norm(h);
  const Eigen::Vector2d rhs(op.solvability(phi), -average(s_phi));
  const double transversality = detail::normalized_determinant(m, scale);
  if (transversality < kTransversalityThreshold)
    fail(ErrorKind::TransversalityLoss, "counterterm direction degenerate, normalized determinant " +
                                            sci(transversality));
  const Eigen::Vector2d x = m.fullPivLu().solve(rhs);
  return TwistedSolution{x(0), s_phi + s_w * x(0) + h * x(1), op.branch(), transversality};
}

inline TwistedSolution solve_twisted(const SpectralField& a, const SpectralField& b, const SpectralField& phi,
                                     const SpectralField& w, const Frequency& freq) {
  return solve_twisted(TwistedOperator(a, b, freq), phi, w);
}

/// Solution of apply(v) = r with no counterterm. Unequal averages give a
/// unique solution; equal averages require solvability(r) = 0 and pick <v> = 0.
inline SpectralField solve_twisted_fixed(const TwistedOperator& op, const SpectralField& r) {
  const SpectralField base = op.particular(r);
  const double solv = op.solvability(r);
  if (op.branch() != AverageBranch::EqualAverage) return base + op.kernel() * (solv / op.gap());
  if (std::abs(solv) > kMeanTolerance * std::max(sup_norm(r * op.weight()), 1e-300) && std::abs(solv) > 0.0)
    fail(ErrorKind::UnsolvableResonant, "equal averages with unsolvable right-hand side");
  return base - op.kernel() * (average(base) / average(op.kernel()));
}

/// The four average-coefficient cases of a chained solve: outer and inner
/// unequal (5a), outer equal only (5b), inner equal only (5c), both equal (5d).
enum class ChainCase { Case5a, Case5b, Case5c, Case5d };

constexpr std::string_view to_string(ChainCase c) {
  switch (c) {
    case ChainCase::Case5a: return "5a";
    case ChainCase::Case5b: return "5b";
    case ChainCase::Case5c: return "5c";
    case ChainCase::Case5d: return "5d";
  }
  return "unknown";
}

struct ChainSolution {
  SpectralField x;
  double constant = 0.0;
  ChainCase branch = ChainCase::Case5a;
  double transversality = 1.0;
};

/// Solves outer(Y) + G = target, inner(X) = Y(. + shift), <X> = 0 for the
/// field X and the constant G. The responses to G and to the outer free
/// constant are independent of the target and are computed once.
class TwistedChain {
 public:
  TwistedChain(TwistedOperator outer, TwistedOperator inner, std::vector<double> inner_shift)
      : outer_(std::move(outer)), inner_(std::move(inner)), shift_(std::move(inner_shift)) {
    const SpectralField one = SpectralField::constant(outer_.a().dim(), outer_.a().grid_size(), 1.0);
    outer_one_solv_ = outer_.solvability(one);
    // Y responses: d Y/dG = -S1(1), d Y/ds1 = h1; carried through the inner solve.
    const SpectralField y_g = -outer_.particular(one);
    const SpectralField y_s = outer_.kernel();
    const SpectralField ty_g = translate(y_g, shift_);
    const SpectralField ty_s = translate(y_s, shift_);
    x_g_ = inner_.particular(ty_g);
    x_s_ = inner_.particular(ty_s);
    inner_solv_g_ = inner_.solvability(ty_g);
    inner_solv_s_ = inner_.solvability(ty_s);
    scale_ << sup_norm(outer_.weight()), std::max(outer_.a_bar(), outer_.b_bar()), 0.0,
              sup_norm(ty_g * inner_.weight()), sup_norm(ty_s * inner_.weight()), std::max(inner_.a_bar(), inner_.b_bar()),
              sup_norm(x_g_), sup_norm(x_s_), sup_norm(inner_.kernel());
    const bool outer_equal = outer_.branch() == AverageBranch::EqualAverage;
    const bool inner_equal = inner_.branch() == AverageBranch::EqualAverage;
    branch_ = outer_equal ? (inner_equal ? ChainCase::Case5d : ChainCase::Case5b)
                          : (inner_equal ? ChainCase::Case5c : ChainCase::Case5a);
  }

  const TwistedOperator& outer() const noexcept { return outer_; }
  const TwistedOperator& inner() const noexcept { return inner_; }
  ChainCase branch() const noexcept { return branch_; }

  /// inner^{-1} composed with the shift and outer^{-1}, i.e. the operator
  /// whose inverse is applied: X -> outer(T_{-shift} inner(X)).
  SpectralField apply(const SpectralField& x) const {
    return outer_.apply(translate(inner_.apply(x), negated(shift_)));
  }

  ChainSolution solve(const SpectralField& target) const {
    const SpectralField ty_t = translate(outer_.particular(target), shift_);
    const SpectralField x_t = inner_.particular(ty_t);
    const SpectralField& h2 = inner_.kernel();
    // Unknowns (G, s1, s2): outer solvability, inner solvability, <X> = 0.
    Eigen::Matrix3d m;
    m << outer_one_solv_, outer_.gap(), 0.0,
         inner_solv_g_, inner_solv_s_, -inner_.gap(),
         average(x_g_), average(x_s_), average(h2);
    const Eigen::Vector3d rhs(outer_.solvability(target), -inner_.solvability(ty_t), -average(x_t));
    const double transversality = detail::normalized_determinant(m, scale_);
    if (transversality < kTransversalityThreshold)
      fail(ErrorKind::TransversalityLoss, "chained solve degenerate, normalized determinant " +
                                              sci(transversality));
    const Eigen::Vector3d c = m.fullPivLu().solve(rhs);
    SpectralField x = x_t + x_g_ * c(0) + x_s_ * c(1) + h2 * c(2);
    return ChainSolution{std::move(x), c(0), branch_, transversality};
  }

 private:
  TwistedOperator outer_;
  TwistedOperator inner_;
  std::vector<double> shift_;
  double outer_one_solv_ = 0.0;
  double inner_solv_g_ = 0.0;
  double inner_solv_s_ = 0.0;
  Eigen::Matrix3d scale_;
  SpectralField x_g_;
  SpectralField x_s_;
  ChainCase branch_ = ChainCase::Case5a;
};

}  // namespace fkkam
