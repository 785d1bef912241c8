#pragma once

// Real-analytic periodic functions on the torus T^dim, held redundantly as
// values on a uniform grid and as Fourier coefficients
//
//     f(psi) = sum_k fhat_k exp(2 pi i k.psi),   k in [-n/2, n/2)^dim.
//
// Fields are immutable values: every operation returns a new, synchronized
// field. Linear operations act on both representations exactly; nonlinear
// grid-space operations are followed by truncation to the band |k_i| <= n/3.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fkkam/errors.hpp"
#include "fkkam/fft.hpp"

namespace fkkam {

using Complex = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kImaginaryResidueTolerance = 1e-10;
inline constexpr double kPositivityFloor = 1e-12;

/// Largest |k_i| kept by the 2/3 rule.
constexpr int dealias_band(int grid_size) { return grid_size / 3; }

constexpr bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// Signed mode number stored at FFT index i.
constexpr int mode_of(int index, int grid_size) { return index < grid_size / 2 ? index : index - grid_size; }

constexpr int index_of(int mode, int grid_size) { return mode >= 0 ? mode : mode + grid_size; }

enum class Representation { Grid, Coefficients };

/// Signed multi-index of a Fourier mode; entries beyond the field dimension are zero.
using Mode = std::array<int, 3>;

struct AnalyticNormCertificate {
  double rho = 0.0;
  double bound = 0.0;
  bool overflow = false;
};

class SpectralField {
 public:
  SpectralField() = default;

  static SpectralField from_grid(int dim, int grid_size, std::vector<double> values) {
    SpectralField f(dim, grid_size);
    if (values.size() != f.size()) fail(ErrorKind::ShapeMismatch, "grid value count does not match grid_size^dim");
    f.values_ = std::move(values);
    f.source_ = Representation::Grid;
    f.coeffs_ = forward(f.values_, f.shape());
    f.symmetrize();
    return f;
  }

  static SpectralField from_coefficients(int dim, int grid_size, std::vector<Complex> coeffs) {
    SpectralField f(dim, grid_size);
    if (coeffs.size() != f.size()) fail(ErrorKind::ShapeMismatch, "coefficient count does not match grid_size^dim");
    f.coeffs_ = std::move(coeffs);
    f.source_ = Representation::Coefficients;
    f.symmetrize();
    f.values_ = backward_real(f.coeffs_, f.shape());
    return f;
  }

  static SpectralField constant(int dim, int grid_size, double value) {
    SpectralField f(dim, grid_size);
    f.values_.assign(f.size(), value);
    f.coeffs_.assign(f.size(), Complex{});
    f.coeffs_[0] = value;
    return f;
  }

  static SpectralField zeros(int dim, int grid_size) { return constant(dim, grid_size, 0.0); }

  /// Samples fn(psi) on the grid; psi is a span of dim coordinates in [0, 1).
  template <class Fn>
  static SpectralField sample(int dim, int grid_size, Fn&& fn) {
    SpectralField probe(dim, grid_size);
    std::vector<double> values(probe.size());
    std::vector<double> psi(static_cast<std::size_t>(dim));
    for (std::size_t flat = 0; flat < values.size(); ++flat) {
      std::size_t rest = flat;
      for (int axis = dim - 1; axis >= 0; --axis) {
        psi[static_cast<std::size_t>(axis)] = static_cast<double>(rest % static_cast<std::size_t>(grid_size)) / grid_size;
        rest /= static_cast<std::size_t>(grid_size);
      }
      values[flat] = fn(std::span<const double>(psi));
    }
    return from_grid(dim, grid_size, std::move(values));
  }

  int dim() const noexcept { return dim_; }
  int grid_size() const noexcept { return grid_size_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  Representation source() const noexcept { return source_; }

  /// Largest |k_i| retained by nonlinear operations on this field.
  int band_limit() const noexcept { return band_limit_; }
  SpectralField with_band_limit(int band) const {
    SpectralField out = *this;
    out.band_limit_ = std::clamp(band, 0, grid_size_ / 2);
    return out;
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<const Complex> coefficients() const noexcept { return coeffs_; }

  Complex coefficient(std::span<const int> mode) const { return coeffs_[flat_index(mode)]; }

  std::size_t flat_index(std::span<const int> mode) const {
    std::size_t flat = 0;
    for (int axis = 0; axis < dim_; ++axis) {
      const int k = mode[static_cast<std::size_t>(axis)];
      if (k < -grid_size_ / 2 || k >= grid_size_ / 2) fail(ErrorKind::InvalidArgument, "mode outside the grid band");
      flat = flat * static_cast<std::size_t>(grid_size_) + static_cast<std::size_t>(index_of(k, grid_size_));
    }
    return flat;
  }

  /// Signed modes of the coefficient stored at a flat index.
  Mode mode_at(std::size_t flat) const {
    Mode k{0, 0, 0};
    for (int axis = dim_ - 1; axis >= 0; --axis) {
      k[static_cast<std::size_t>(axis)] = mode_of(static_cast<int>(flat % grid_size_), grid_size_);
      flat /= static_cast<std::size_t>(grid_size_);
    }
    return k;
  }

  std::vector<int> shape() const { return std::vector<int>(static_cast<std::size_t>(dim_), grid_size_); }

  bool same_shape(const SpectralField& other) const noexcept {
    return dim_ == other.dim_ && grid_size_ == other.grid_size_;
  }

  // Linear arithmetic is exact in both representations.
  SpectralField& operator+=(const SpectralField& rhs) { return combine(rhs, 1.0); }
  SpectralField& operator-=(const SpectralField& rhs) { return combine(rhs, -1.0); }
  SpectralField& operator*=(double s) {
    for (auto& v : values_) v *= s;
    for (auto& c : coeffs_) c *= s;
    return *this;
  }
  SpectralField& operator+=(double s) {
    for (auto& v : values_) v += s;
    coeffs_[0] += s;
    return *this;
  }
  SpectralField& operator-=(double s) { return *this += -s; }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(SpectralField a, double s) { return a *= s; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
  friend SpectralField operator/(SpectralField a, double s) { return a *= 1.0 / s; }
  friend SpectralField operator+(SpectralField a, double s) { return a += s; }
  friend SpectralField operator+(double s, SpectralField a) { return a += s; }
  friend SpectralField operator-(SpectralField a, double s) { return a -= s; }
  friend SpectralField operator-(double s, SpectralField a) { return (a *= -1.0) += s; }
  friend SpectralField operator-(SpectralField a) { return a *= -1.0; }

  // Used by the free functions below; not part of the value contract.
  static std::vector<Complex> forward(std::span<const double> values, const std::vector<int>& shape) {
    std::vector<Complex> data(values.begin(), values.end());
    auto out = fft::transform(data, shape, fft::Direction::Forward);
    const double scale = 1.0 / static_cast<double>(values.size());
    for (auto& c : out) c *= scale;
    return out;
  }

  static std::vector<Complex> backward(const std::vector<Complex>& coeffs, const std::vector<int>& shape) {
    return fft::transform(coeffs, shape, fft::Direction::Backward);
  }

  /// Real grid values from complex grid samples, rejecting a significant imaginary part.
  static std::vector<double> real_part_checked(const std::vector<Complex>& samples) {
    double max_re = 0.0;
    double max_im = 0.0;
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      out[i] = samples[i].real();
      max_re = std::max(max_re, std::abs(samples[i].real()));
      max_im = std::max(max_im, std::abs(samples[i].imag()));
    }
    if (max_im > kImaginaryResidueTolerance * std::max(max_re, 1e-300) && max_im > 1e-300)
      fail(ErrorKind::ImaginaryResidue, "imaginary residue " + std::to_string(max_im) + " on grid");
    return out;
  }

 private:
  SpectralField(int dim, int grid_size) : dim_(dim), grid_size_(grid_size) {
    if (dim < 1 || dim > 3) fail(ErrorKind::InvalidArgument, "field dimension must be 1, 2 or 3");
    if (!is_power_of_two(grid_size) || grid_size < 4)
      fail(ErrorKind::InvalidArgument, "grid_size must be a power of two >= 4, got " + std::to_string(grid_size));
    std::size_t total = 1;
    for (int i = 0; i < dim; ++i) total *= static_cast<std::size_t>(grid_size);
    values_.resize(total);
    coeffs_.resize(total);
    band_limit_ = dealias_band(grid_size);
  }

  static std::vector<double> backward_real(const std::vector<Complex>& coeffs, const std::vector<int>& shape) {
    return real_part_checked(backward(coeffs, shape));
  }

  SpectralField& combine(const SpectralField& rhs, double sign) {
    if (!same_shape(rhs)) fail(ErrorKind::ShapeMismatch, "fields on different grids");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += sign * rhs.values_[i];
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += sign * rhs.coeffs_[i];
    band_limit_ = std::min(band_limit_, rhs.band_limit_);
    return *this;
  }

  std::size_t mirror(std::size_t flat) const {
    std::size_t out = 0;
    std::size_t stride = 1;
    for (int axis = 0; axis < dim_; ++axis) {
      const std::size_t i = flat % static_cast<std::size_t>(grid_size_);
      flat /= static_cast<std::size_t>(grid_size_);
      const std::size_t j = (static_cast<std::size_t>(grid_size_) - i) % static_cast<std::size_t>(grid_size_);
      out += j * stride;
      stride *= static_cast<std::size_t>(grid_size_);
    }
    return out;
  }

  void symmetrize() {
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      const std::size_t j = mirror(i);
      if (j < i) continue;
      const Complex avg = 0.5 * (coeffs_[i] + std::conj(coeffs_[j]));
      coeffs_[i] = avg;
      coeffs_[j] = std::conj(avg);
    }
  }

  int dim_ = 0;
  int grid_size_ = 0;
  int band_limit_ = 0;
  Representation source_ = Representation::Coefficients;
  std::vector<double> values_;
  std::vector<Complex> coeffs_;
};

/// Recomputes the secondary representation from the authoritative one.
inline SpectralField synchronize(const SpectralField& f) {
  SpectralField out = f.source() == Representation::Grid
                          ? SpectralField::from_grid(f.dim(), f.grid_size(), {f.values().begin(), f.values().end()})
                          : SpectralField::from_coefficients(f.dim(), f.grid_size(),
                                                             {f.coefficients().begin(), f.coefficients().end()});
  return out.with_band_limit(f.band_limit());
}

inline double average(const SpectralField& f) { return f.coefficients()[0].real(); }

inline double sup_norm(const SpectralField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double min_value(const SpectralField& f) { return *std::min_element(f.values().begin(), f.values().end()); }
inline double max_value(const SpectralField& f) { return *std::max_element(f.values().begin(), f.values().end()); }

/// Applies fn to each coefficient together with its signed mode vector.
template <class Fn>
SpectralField map_coefficients(const SpectralField& f, Fn&& fn) {
  std::vector<Complex> coeffs(f.coefficients().begin(), f.coefficients().end());
  for (std::size_t flat = 0; flat < coeffs.size(); ++flat) coeffs[flat] = fn(coeffs[flat], f.mode_at(flat));
  return SpectralField::from_coefficients(f.dim(), f.grid_size(), std::move(coeffs)).with_band_limit(f.band_limit());
}

inline int max_abs_mode(std::span<const int> k) {
  int m = 0;
  for (int ki : k) m = std::max(m, std::abs(ki));
  return m;
}

/// Zeroes every coefficient with some |k_i| > band.
inline SpectralField truncate(const SpectralField& f, int band) {
  return map_coefficients(f, [band](Complex c, const Mode& k) {
    return max_abs_mode(k) > band ? Complex{} : c;
  });
}

inline SpectralField dealias(const SpectralField& f) { return truncate(f, f.band_limit()); }

/// Fraction of spectral energy carried by modes with some |k_i| > band.
inline double tail_fraction(const SpectralField& f, int band) {
  double total = 0.0;
  double tail = 0.0;
  for (std::size_t flat = 0; flat < f.size(); ++flat) {
    const double e = std::norm(f.coefficients()[flat]);
    total += e;
    if (max_abs_mode(f.mode_at(flat)) > band) tail += e;
  }
  return total > 0.0 ? tail / total : 0.0;
}

/// Exact translation f(psi + shift), a phase factor per mode.
inline SpectralField translate(const SpectralField& f, std::span<const double> shift) {
  if (shift.size() != static_cast<std::size_t>(f.dim())) fail(ErrorKind::ShapeMismatch, "shift length must equal dim");
  return map_coefficients(f, [&](Complex c, const Mode& k) {
    double phase = 0.0;
    for (std::size_t i = 0; i < shift.size(); ++i) phase += k[i] * shift[i];
    return c * std::polar(1.0, kTwoPi * phase);
  });
}

inline SpectralField translate(const SpectralField& f, const std::vector<double>& shift) {
  return translate(f, std::span<const double>(shift));
}

inline std::vector<double> negated(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x = -x;
  return out;
}

/// Nonlinear pointwise map on the grid followed by dealiasing.
template <class Fn>
SpectralField map_grid(const SpectralField& f, Fn&& fn) {
  std::vector<double> values(f.values().begin(), f.values().end());
  for (auto& v : values) v = fn(v);
  return truncate(SpectralField::from_grid(f.dim(), f.grid_size(), std::move(values)), f.band_limit())
      .with_band_limit(f.band_limit());
}

inline SpectralField pointwise_mul(const SpectralField& f, const SpectralField& g) {
  if (!f.same_shape(g)) fail(ErrorKind::ShapeMismatch, "pointwise_mul on different grids");
  std::vector<double> values(f.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = f.values()[i] * g.values()[i];
  const int band = std::min(f.band_limit(), g.band_limit());
  return truncate(SpectralField::from_grid(f.dim(), f.grid_size(), std::move(values)), band).with_band_limit(band);
}

inline SpectralField operator*(const SpectralField& f, const SpectralField& g) { return pointwise_mul(f, g); }

inline SpectralField exp_field(const SpectralField& f) {
  return map_grid(f, [](double x) { return std::exp(x); });
}

inline SpectralField log_field(const SpectralField& f) {
  const double lo = min_value(f);
  if (lo <= kPositivityFloor)
    fail(ErrorKind::NonPositiveCoefficient, "log of a field with minimum grid value " + std::to_string(lo));
  return map_grid(f, [](double x) { return std::log(x); });
}

/// 1/f for a field bounded away from zero (either sign).
inline SpectralField reciprocal(const SpectralField& f) {
  double lo = std::numeric_limits<double>::infinity();
  for (double v : f.values()) lo = std::min(lo, std::abs(v));
  if (lo <= kPositivityFloor) fail(ErrorKind::NonPositiveCoefficient, "reciprocal of a field touching zero");
  return map_grid(f, [](double x) { return 1.0 / x; });
}

/// Weighted l1 norm sum_k |fhat_k| e^{2 pi |k|_1 rho}, an upper bound for the
/// supremum on the complex strip |Im psi_i| <= rho.
inline AnalyticNormCertificate analytic_norm_bound(const SpectralField& f, double rho) {
  if (rho < 0.0) fail(ErrorKind::InvalidArgument, "rho must be nonnegative");
  AnalyticNormCertificate cert{rho, 0.0, false};
  for (std::size_t flat = 0; flat < f.size(); ++flat) {
    const Complex c = f.coefficients()[flat];
    if (c == Complex{}) continue;
    int l1 = 0;
    for (int k : f.mode_at(flat)) l1 += std::abs(k);
    cert.bound += std::abs(c) * std::exp(kTwoPi * l1 * rho);
  }
  if (!std::isfinite(cert.bound)) {
    cert.overflow = true;
    cert.bound = std::numeric_limits<double>::infinity();
  }
  return cert;
}

/// Spectral interpolation onto a grid of a different size (zero padding or truncation).
inline SpectralField resample(const SpectralField& f, int new_size) {
  if (new_size == f.grid_size()) return f;
  const SpectralField target = SpectralField::zeros(f.dim(), new_size);
  std::vector<Complex> coeffs(target.size());
  const int keep = std::min(f.grid_size(), new_size) / 2;
  for (std::size_t flat = 0; flat < f.size(); ++flat) {
    const auto k = f.mode_at(flat);
    bool inside = true;
    for (int ki : k) inside = inside && ki > -keep && ki < keep;
    if (!inside) continue;
    coeffs[target.flat_index(std::span<const int>(k.data(), static_cast<std::size_t>(f.dim())))] =
        f.coefficients()[flat];
  }
  const int band = new_size > f.grid_size() ? f.band_limit() : std::min(f.band_limit(), dealias_band(new_size));
  return SpectralField::from_coefficients(f.dim(), new_size, std::move(coeffs)).with_band_limit(band);
}

/// Random real field with modes |k_i| <= max_mode, amplitudes decaying like
/// e^{-|k|_1/2}, zero mean, rescaled to the requested sup norm.
template <class Rng>
SpectralField random_field(int dim, int grid_size, int max_mode, double sup, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const SpectralField probe = SpectralField::zeros(dim, grid_size);
  std::vector<Complex> coeffs(probe.size());
  for (std::size_t flat = 0; flat < coeffs.size(); ++flat) {
    const Mode k = probe.mode_at(flat);
    if (max_abs_mode(k) > max_mode || k == Mode{0, 0, 0}) continue;
    const double decay = std::exp(-0.5 * (std::abs(k[0]) + std::abs(k[1]) + std::abs(k[2])));
    const double re = unit(rng);
    const double im = unit(rng);
    coeffs[flat] = decay * Complex(re, im);
  }
  SpectralField f = SpectralField::from_coefficients(dim, grid_size, std::move(coeffs));
  const double norm = sup_norm(f);
  return norm > 0.0 ? f * (sup / norm) : f;
}

/// Evaluates the Fourier series at an arbitrary real point.
inline double evaluate_at(const SpectralField& f, std::span<const double> psi) {
  Complex sum{};
  for (std::size_t flat = 0; flat < f.size(); ++flat) {
    const Complex c = f.coefficients()[flat];
    if (c == Complex{}) continue;
    const auto k = f.mode_at(flat);
    double phase = 0.0;
    for (int i = 0; i < f.dim(); ++i) phase += k[static_cast<std::size_t>(i)] * psi[static_cast<std::size_t>(i)];
    sum += c * std::polar(1.0, kTwoPi * phase);
  }
  return sum.real();
}

}  // namespace fkkam
