#pragma once

// Thin wrapper over FFTW's complex multidimensional transforms. Plans are
// created once per (shape, direction) and executed through the new-array
// interface, which FFTW documents as thread-safe; only planning is locked.

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

namespace fkkam::fft {

using Complex = std::complex<double>;

enum class Direction { Forward, Backward };

namespace detail {

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(const std::vector<int>& shape, Direction dir) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_pair(shape, dir);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;

    std::size_t total = 1;
    for (int n : shape) total *= static_cast<std::size_t>(n);
    auto* in = fftw_alloc_complex(total);
    auto* out = fftw_alloc_complex(total);
    const int sign = dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD;
    fftw_plan plan = fftw_plan_dft(static_cast<int>(shape.size()), shape.data(), in, out, sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::pair<std::vector<int>, Direction>, fftw_plan> plans_;
};

}  // namespace detail

/// Unnormalized DFT over a row-major array of the given shape.
/// Forward uses the e^{-2 pi i k x} kernel.
inline std::vector<Complex> transform(const std::vector<Complex>& input, const std::vector<int>& shape,
                                      Direction dir) {
  std::vector<Complex> output(input.size());
  fftw_plan plan = detail::PlanCache::instance().get(shape, dir);
  // fftw_execute_dft takes non-const input; out-of-place plans do not modify it.
  auto* in = reinterpret_cast<fftw_complex*>(const_cast<Complex*>(input.data()));
  auto* out = reinterpret_cast<fftw_complex*>(output.data());
  fftw_execute_dft(plan, in, out);
  return output;
}

}  // namespace fkkam::fft
