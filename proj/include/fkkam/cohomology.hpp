#pragma once

// Constant-coefficient cohomology equation v(psi + Omega) - v(psi) = phi(psi)
// and brute-force certification of the Diophantine constant of Omega.

#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "fkkam/errors.hpp"
#include "fkkam/spectral_field.hpp"

namespace fkkam {

inline constexpr double kResonanceFloor = 1e-12;
inline constexpr double kSmallDivisorFloor = 1e-13;
inline constexpr double kMeanTolerance = 1e-9;

/// Rotation vector Omega together with its certified Diophantine data:
/// kappa_hat = min over 0 < |k|_1 <= cutoff, m in Z of |k.Omega - m| |k|_1^tau.
struct Frequency {
  std::vector<double> omega;
  double tau = 1.0;
  double kappa_hat = 0.0;
  int cutoff = 0;
  std::vector<int> minimizer_k;
  long long minimizer_m = 0;

  int dim() const noexcept { return static_cast<int>(omega.size()); }
};

namespace detail {

// Visits every k != 0 with |k|_1 <= budget in the half-space whose first
// nonzero entry is positive (k and -k give the same |k.Omega - m|).
inline void for_each_half_space_mode(int dim, int budget, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> k(static_cast<std::size_t>(dim), 0);
  std::function<void(int, int, bool)> rec = [&](int axis, int remaining, bool leading_zero) {
    if (axis == dim) {
      if (!leading_zero) visit(k);
      return;
    }
    const int lo = leading_zero ? 0 : -remaining;
    for (int ki = lo; ki <= remaining; ++ki) {
      k[static_cast<std::size_t>(axis)] = ki;
      rec(axis + 1, remaining - std::abs(ki), leading_zero && ki == 0);
    }
    k[static_cast<std::size_t>(axis)] = 0;
  };
  rec(0, budget, true);
}

inline double dot(std::span<const int> k, std::span<const double> omega) {
  double s = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) s += k[i] * omega[i];
  return s;
}

}  // namespace detail

inline Frequency diophantine_constant(std::vector<double> omega, double tau, int cutoff) {
  if (omega.empty()) fail(ErrorKind::InvalidArgument, "omega must have at least one component");
  if (cutoff < 1) fail(ErrorKind::InvalidArgument, "Diophantine cutoff must be >= 1");
  if (!(tau > 0.0)) fail(ErrorKind::InvalidArgument, "tau must be positive");

  Frequency freq{std::move(omega), tau, std::numeric_limits<double>::infinity(), cutoff, {}, 0};
  detail::for_each_half_space_mode(freq.dim(), cutoff, [&](const std::vector<int>& k) {
    const double x = detail::dot(k, freq.omega);
    const double m = std::nearbyint(x);
    int l1 = 0;
    for (int ki : k) l1 += std::abs(ki);
    const double value = std::abs(x - m) * std::pow(static_cast<double>(l1), tau);
    if (value < freq.kappa_hat) {
      freq.kappa_hat = value;
      freq.minimizer_k = k;
      freq.minimizer_m = static_cast<long long>(m);
    }
  });
  if (freq.kappa_hat < kResonanceFloor) {
    std::string where;
    for (int ki : freq.minimizer_k) where += std::to_string(ki) + " ";
    fail(ErrorKind::ResonanceDetected,
         "near resonance at k = " + where + "m = " + std::to_string(freq.minimizer_m));
  }
  return freq;
}

/// e^{2 pi i k.Omega}, the symbol of the translation T_Omega on mode k.
inline Complex translation_symbol(const Mode& k, const Frequency& freq) {
  double phase = 0.0;
  for (int i = 0; i < freq.dim(); ++i) phase += k[static_cast<std::size_t>(i)] * freq.omega[static_cast<std::size_t>(i)];
  return std::polar(1.0, kTwoPi * phase);
}

inline void check_frequency_shape(const SpectralField& f, const Frequency& freq) {
  if (f.dim() != freq.dim()) fail(ErrorKind::ShapeMismatch, "field dimension differs from the frequency dimension");
}

/// Zero-average solution of v(psi + Omega) - v(psi) = phi - <phi>. A mean of
/// phi above kMeanTolerance * |phi|_sup is rejected; smaller means are projected out.
inline SpectralField solve_constant_cohomology(const SpectralField& phi, const Frequency& freq) {
  check_frequency_shape(phi, freq);
  const double mean = average(phi);
  if (std::abs(mean) > kMeanTolerance * sup_norm(phi))
    fail(ErrorKind::NonzeroMean, "cohomology right-hand side has mean " + std::to_string(mean));
  return map_coefficients(phi, [&](Complex c, const Mode& k) -> Complex {
    if (k == Mode{0, 0, 0} || c == Complex{}) return Complex{};
    const Complex divisor = translation_symbol(k, freq) - 1.0;
    if (std::abs(divisor) < kSmallDivisorFloor) fail(ErrorKind::SmallDivisorUnderflow, "small divisor below 1e-13");
    return c / divisor;
  });
}

}  // namespace fkkam
