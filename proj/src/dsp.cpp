#include "sicbench/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace sicbench::dsp {
namespace {

// FFTW's planner is not re-entrant; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::size_t next_fast_size(std::size_t n) {
    for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2u, 3u, 5u, 7u}) {
            while (r % p == 0) r /= p;
        }
        if (r == 1) return m;
    }
}

class ComplexPlan {
public:
    ComplexPlan(std::size_t n, int sign) : n_(n) {
        in_ = fftw_alloc_complex(n);
        out_ = fftw_alloc_complex(n);
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, sign, FFTW_ESTIMATE);
    }
    ~ComplexPlan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    ComplexPlan(const ComplexPlan&) = delete;
    ComplexPlan& operator=(const ComplexPlan&) = delete;

    std::vector<cplx> run(std::span<const cplx> x) {
        for (std::size_t i = 0; i < n_; ++i) {
            in_[i][0] = x[i].real();
            in_[i][1] = x[i].imag();
        }
        fftw_execute(plan_);
        std::vector<cplx> y(n_);
        for (std::size_t i = 0; i < n_; ++i) y[i] = {out_[i][0], out_[i][1]};
        return y;
    }

private:
    std::size_t n_;
    fftw_complex* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

class RealPlan {
public:
    explicit RealPlan(std::size_t n) : n_(n) {
        real_ = fftw_alloc_real(n);
        spec_ = fftw_alloc_complex(n / 2 + 1);
        std::lock_guard lock(planner_mutex());
        fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec_, FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, real_, FFTW_ESTIMATE);
    }
    ~RealPlan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
        fftw_free(real_);
        fftw_free(spec_);
    }
    RealPlan(const RealPlan&) = delete;
    RealPlan& operator=(const RealPlan&) = delete;

    double* real() { return real_; }
    fftw_complex* spectrum() { return spec_; }
    void forward() { fftw_execute(fwd_); }
    void inverse() { fftw_execute(inv_); }
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    double* real_ = nullptr;
    fftw_complex* spec_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan inv_ = nullptr;
};

}  // namespace

double kaiser(double t, double beta) {
    if (t < -1.0 || t > 1.0) return 0.0;
    return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - t * t)) / std::cyl_bessel_i(0.0, beta);
}

std::vector<double> design_lowpass(double cutoff, double sample_rate, std::size_t taps,
                                   double beta) {
    if (taps % 2 == 0) throw std::invalid_argument("lowpass length must be odd");
    if (!(cutoff > 0.0) || !(cutoff < sample_rate / 2.0)) {
        throw std::invalid_argument("lowpass cutoff must lie in (0, fs/2)");
    }
    const double fc = cutoff / sample_rate;
    const auto half = static_cast<double>(taps - 1) / 2.0;
    std::vector<double> h(taps);
    for (std::size_t i = 0; i < taps; ++i) {
        const double m = static_cast<double>(i) - half;
        const double s = (m == 0.0) ? 2.0 * fc : std::sin(2.0 * kPi * fc * m) / (kPi * m);
        h[i] = s * kaiser(half > 0.0 ? m / half : 0.0, beta);
    }
    const double dc = std::accumulate(h.begin(), h.end(), 0.0);
    for (double& v : h) v /= dc;
    return h;
}

std::vector<double> convolve_centered(std::span<const double> x, std::span<const double> h) {
    if (x.empty() || h.empty()) return std::vector<double>(x.size(), 0.0);
    const std::size_t full = x.size() + h.size() - 1;
    const std::size_t n = next_fast_size(full);
    RealPlan a(n);
    std::fill(a.real(), a.real() + n, 0.0);
    std::copy(x.begin(), x.end(), a.real());
    a.forward();
    std::vector<cplx> xs(n / 2 + 1);
    for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = {a.spectrum()[k][0], a.spectrum()[k][1]};

    std::fill(a.real(), a.real() + n, 0.0);
    std::copy(h.begin(), h.end(), a.real());
    a.forward();
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const cplx p = xs[k] * cplx{a.spectrum()[k][0], a.spectrum()[k][1]};
        a.spectrum()[k][0] = p.real();
        a.spectrum()[k][1] = p.imag();
    }
    a.inverse();
    const std::size_t lag = (h.size() - 1) / 2;
    std::vector<double> y(x.size());
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = a.real()[i + lag] * scale;
    return y;
}

std::vector<cplx> fft(std::span<const cplx> x) {
    ComplexPlan p(x.size(), FFTW_FORWARD);
    return p.run(x);
}

std::vector<cplx> ifft(std::span<const cplx> x) {
    ComplexPlan p(x.size(), FFTW_BACKWARD);
    auto y = p.run(x);
    const double scale = 1.0 / static_cast<double>(x.size());
    for (auto& v : y) v *= scale;
    return y;
}

std::vector<cplx> analytic_signal(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<cplx> buf(x.begin(), x.end());
    auto spec = fft(buf);
    // Keep DC (and Nyquist for even n) once, double the positive half.
    for (std::size_t k = 1; k < (n + 1) / 2; ++k) spec[k] *= 2.0;
    for (std::size_t k = n / 2 + 1; k < n; ++k) spec[k] = 0.0;
    return ifft(spec);
}

std::vector<double> rfft_power(std::span<const double> frame) {
    const std::size_t n = frame.size();
    RealPlan p(n);
    std::copy(frame.begin(), frame.end(), p.real());
    p.forward();
    std::vector<double> out(n / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double re = p.spectrum()[k][0];
        const double im = p.spectrum()[k][1];
        out[k] = re * re + im * im;
    }
    return out;
}

std::vector<double> fractional_delay(std::span<const double> x, double delay_samples) {
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    std::vector<double> y(x.size(), 0.0);
    const double whole = std::floor(delay_samples);
    const double frac = delay_samples - whole;
    const auto shift = static_cast<std::ptrdiff_t>(whole);

    if (frac == 0.0) {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const std::ptrdiff_t src = i - shift;
            if (src >= 0 && src < n) y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(src)];
        }
        return y;
    }

    // y[i] = sum_k h[k] x[i - shift - k], k in [-31, 32], h[k] = sinc(k - frac) w(k - frac)
    constexpr auto half = static_cast<std::ptrdiff_t>(kFracDelayTaps / 2);
    constexpr double beta = 6.0;
    std::vector<double> h(kFracDelayTaps);
    for (std::ptrdiff_t k = -half + 1; k <= half; ++k) {
        const double t = static_cast<double>(k) - frac;
        const double s = std::sin(kPi * t) / (kPi * t);
        h[static_cast<std::size_t>(k + half - 1)] = s * kaiser(t / static_cast<double>(half), beta);
    }
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -half + 1; k <= half; ++k) {
            const std::ptrdiff_t src = i - shift - k;
            if (src < 0 || src >= n) continue;
            acc += h[static_cast<std::size_t>(k + half - 1)] * x[static_cast<std::size_t>(src)];
        }
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

double mean_power(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return acc / static_cast<double>(x.size());
}

}  // namespace sicbench::dsp
