#pragma once

// Thin RAII layer over FFTW. Plans are created once per (size, direction)
// with FFTW_ESTIMATE, which keeps results bit-reproducible run to run, and
// shared process-wide; executing a plan is thread-safe, planning is not, so
// plan creation is serialized.

#include <complex>
#include <numbers>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include <fftw3.h>

namespace essnl {

using cvec = std::vector<std::complex<double>>;

namespace detail {

class PlanCache {
  public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(std::size_t n, int sign) {
        std::lock_guard lock(mutex_);
        auto key = std::make_pair(n, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        std::vector<std::complex<double>> scratch(n);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, p);
        return p;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

  private:
    PlanCache() = default;

    std::mutex mutex_;
    std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

}  // namespace detail

/// In-place complex FFT of a fixed length. Both directions are unnormalized.
class Fft {
  public:
    explicit Fft(std::size_t n)
        : n_(n),
          forward_(detail::PlanCache::instance().get(n, FFTW_FORWARD)),
          inverse_(detail::PlanCache::instance().get(n, FFTW_BACKWARD)) {}

    std::size_t size() const noexcept { return n_; }

    void forward(std::span<std::complex<double>> data) const { run(forward_, data); }
    void inverse(std::span<std::complex<double>> data) const { run(inverse_, data); }

    /// Inverse scaled by 1/n.
    void inverse_normalized(std::span<std::complex<double>> data) const {
        run(inverse_, data);
        const double s = 1.0 / static_cast<double>(n_);
        for (auto& v : data) v *= s;
    }

  private:
    void run(fftw_plan plan, std::span<std::complex<double>> data) const {
        auto* buf = reinterpret_cast<fftw_complex*>(data.data());
        fftw_execute_dft(plan, buf, buf);
    }

    std::size_t n_;
    fftw_plan forward_;
    fftw_plan inverse_;
};

/// Angular frequency of FFT bin k for length n at sample rate fs (rad/s).
inline double bin_angular_frequency(std::size_t k, std::size_t n, double fs) {
    const auto signed_k = k < (n + 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
    return 2.0 * std::numbers::pi * signed_k * fs / static_cast<double>(n);
}

}  // namespace essnl
