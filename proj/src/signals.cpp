#include "sicbench/signals.hpp"

#include "sicbench/dsp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace sicbench {
namespace {

constexpr double kPi = dsp::kPi;
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

std::size_t samples_per_symbol(double fs, double baud) {
    if (!(baud > 0.0)) throw std::invalid_argument("baud rate must be positive");
    const double ratio = fs / baud;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio) {
        throw std::invalid_argument("sample rate must be an integer multiple of the baud rate");
    }
    return static_cast<std::size_t>(rounded);
}

// Root-raised-cosine impulse response at t symbols from the pulse center.
double rrc(double t, double beta) {
    if (std::abs(t) < 1e-12) return 1.0 - beta + 4.0 * beta / kPi;
    if (beta > 0.0 && std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
        return beta / std::sqrt(2.0) *
               ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) +
                (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
    }
    const double num = std::sin(kPi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(kPi * t * (1.0 + beta));
    const double den = kPi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
    return num / den;
}

// Sampled pulse for one symbol: values at offsets [first, first + taps.size())
// relative to the symbol's first sample, scaled so that sum(g^2) == sps.
struct SampledPulse {
    std::ptrdiff_t first = 0;
    std::vector<double> taps;
};

SampledPulse sample_pulse(const PulseShape& pulse, std::size_t sps) {
    SampledPulse p;
    if (pulse.kind == PulseKind::kRectangular) {
        p.taps.assign(sps, 1.0);
        return p;
    }
    if (!(pulse.rolloff > 0.0 && pulse.rolloff <= 1.0) || pulse.span < 2) {
        throw std::invalid_argument("root-raised-cosine needs rolloff in (0,1] and span >= 2");
    }
    const double center = (static_cast<double>(sps) - 1.0) / 2.0;
    const auto half = static_cast<std::ptrdiff_t>(pulse.span * sps / 2);
    p.first = static_cast<std::ptrdiff_t>(std::floor(center)) - half;
    const auto len = static_cast<std::size_t>(2 * half + 1);
    p.taps.resize(len);
    double energy = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        const double t = (static_cast<double>(p.first) + static_cast<double>(i) - center) /
                         static_cast<double>(sps);
        p.taps[i] = rrc(t, pulse.rolloff);
        energy += p.taps[i] * p.taps[i];
    }
    const double scale = std::sqrt(static_cast<double>(sps) / energy);
    for (double& v : p.taps) v *= scale;
    return p;
}

}  // namespace

// ---------------------------------------------------------------------------

SampledSignal::SampledSignal(std::vector<double> samples, double sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
    if (!(sample_rate_ > 0.0) || !std::isfinite(sample_rate_)) {
        throw std::invalid_argument("sample rate must be positive and finite");
    }
    if (samples_.empty()) throw std::invalid_argument("signal must hold at least one sample");
    for (double v : samples_) {
        if (!std::isfinite(v)) throw std::invalid_argument("signal samples must be finite");
    }
}

SampledSignal SampledSignal::zeros(std::size_t n, double sample_rate) {
    return SampledSignal(std::vector<double>(n, 0.0), sample_rate);
}

double SampledSignal::power() const { return dsp::mean_power(samples_); }

SampledSignal SampledSignal::scaled(double gain) const {
    std::vector<double> out(samples_);
    for (double& v : out) v *= gain;
    return SampledSignal(std::move(out), sample_rate_);
}

SampledSignal SampledSignal::slice(std::size_t first, std::size_t count) const {
    if (first + count > samples_.size()) throw std::out_of_range("slice beyond signal end");
    const auto b = samples_.begin() + static_cast<std::ptrdiff_t>(first);
    return SampledSignal(std::vector<double>(b, b + static_cast<std::ptrdiff_t>(count)), sample_rate_);
}

namespace {
SampledSignal combine(const SampledSignal& a, const SampledSignal& b, double sign) {
    if (a.sample_rate() != b.sample_rate() || a.size() != b.size()) {
        throw std::invalid_argument("signals differ in length or sample rate");
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + sign * b[i];
    return SampledSignal(std::move(out), a.sample_rate());
}
}  // namespace

SampledSignal operator+(const SampledSignal& a, const SampledSignal& b) { return combine(a, b, 1.0); }
SampledSignal operator-(const SampledSignal& a, const SampledSignal& b) { return combine(a, b, -1.0); }

// ---------------------------------------------------------------------------

SymbolStream::SymbolStream(std::vector<cplx> symbols, double baud_rate, SymbolFormat format)
    : symbols_(std::move(symbols)), baud_rate_(baud_rate), format_(format) {
    if (!(baud_rate_ > 0.0)) throw std::invalid_argument("baud rate must be positive");
    if (symbols_.empty()) return;
    double energy = 0.0;
    for (const auto& s : symbols_) {
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) {
            throw std::invalid_argument("symbols must be finite");
        }
        energy += std::norm(s);
    }
    energy /= static_cast<double>(symbols_.size());
    if (std::abs(energy - 1.0) > 1e-12) {
        throw std::invalid_argument("symbol stream must have unit mean energy");
    }
    if (format_ == SymbolFormat::kQpsk) {
        for (const auto& s : symbols_) {
            if (std::abs(s - qpsk_decide(s)) > 1e-12) {
                throw std::invalid_argument("symbol is not a QPSK constellation point");
            }
        }
    }
}

SymbolStream SymbolStream::slice(std::size_t first, std::size_t count) const {
    if (first + count > symbols_.size()) throw std::out_of_range("slice beyond stream end");
    const auto b = symbols_.begin() + static_cast<std::ptrdiff_t>(first);
    std::vector<cplx> part(b, b + static_cast<std::ptrdiff_t>(count));
    if (format_ == SymbolFormat::kReceived && !part.empty()) {
        double e = 0.0;
        for (const auto& s : part) e += std::norm(s);
        const double g = 1.0 / std::sqrt(e / static_cast<double>(part.size()));
        for (auto& s : part) s *= g;
    }
    return SymbolStream(std::move(part), baud_rate_, format_);
}

const std::vector<cplx>& qpsk_constellation() {
    static const std::vector<cplx> points = {
        {kInvSqrt2, kInvSqrt2},    // 00
        {kInvSqrt2, -kInvSqrt2},   // 01
        {-kInvSqrt2, kInvSqrt2},   // 10
        {-kInvSqrt2, -kInvSqrt2},  // 11
    };
    return points;
}

cplx qpsk_decide(cplx z) {
    return {z.real() >= 0.0 ? kInvSqrt2 : -kInvSqrt2, z.imag() >= 0.0 ? kInvSqrt2 : -kInvSqrt2};
}

double CarrierPlan::if_freq() const { return std::abs(rf_carrier - lo_freq); }

void CarrierPlan::validate(double sample_rate, double baud_rate) const {
    const double f = if_freq();
    if (!(f > 0.0) || !(f < sample_rate / 2.0 - baud_rate)) {
        throw std::invalid_argument("IF " + std::to_string(f) +
                                    " Hz does not fit the first Nyquist zone with the signal bandwidth");
    }
}

SymbolStream qpsk_modulate(std::span<const std::uint8_t> bits, double baud_rate) {
    if (bits.size() % 2 != 0) throw std::invalid_argument("QPSK needs an even number of bits");
    const auto& points = qpsk_constellation();
    std::vector<cplx> symbols(bits.size() / 2);
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        const unsigned idx = ((bits[2 * k] & 1u) << 1) | (bits[2 * k + 1] & 1u);
        symbols[k] = points[idx];
    }
    return SymbolStream(std::move(symbols), baud_rate, SymbolFormat::kQpsk);
}

std::vector<std::uint8_t> random_bits(std::size_t n_symbols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> bits(2 * n_symbols);
    std::uint64_t word = 0;
    int left = 0;
    for (auto& b : bits) {
        if (left == 0) {
            word = rng();
            left = 64;
        }
        b = static_cast<std::uint8_t>(word & 1u);
        word >>= 1;
        --left;
    }
    return bits;
}

SampledSignal shape_and_upconvert(const SymbolStream& stream, double carrier, double fs,
                                  const PulseShape& pulse, std::optional<std::size_t> num_samples) {
    const double baud = stream.baud_rate();
    if (!(carrier >= 0.0)) throw std::invalid_argument("carrier must be non-negative");
    if (fs < 2.0 * (carrier + baud)) {
        throw std::invalid_argument("carrier plus signal bandwidth exceeds the Nyquist limit");
    }
    const std::size_t sps = samples_per_symbol(fs, baud);
    const std::size_t n = num_samples.value_or(stream.size() * sps);
    if (n == 0) throw std::invalid_argument("waveform length must be at least one sample");

    const SampledPulse p = sample_pulse(pulse, sps);
    std::vector<cplx> base(n, cplx{});
    for (std::size_t k = 0; k < stream.size(); ++k) {
        const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(k * sps) + p.first;
        if (start >= static_cast<std::ptrdiff_t>(n)) break;
        for (std::size_t i = 0; i < p.taps.size(); ++i) {
            const std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(i);
            if (idx < 0) continue;
            if (idx >= static_cast<std::ptrdiff_t>(n)) break;
            base[static_cast<std::size_t>(idx)] += stream[k] * p.taps[i];
        }
    }
    std::vector<double> out(n);
    const double w = 2.0 * kPi * carrier / fs;
    for (std::size_t i = 0; i < n; ++i) {
        const double ph = w * static_cast<double>(i);
        out[i] = base[i].real() * std::cos(ph) - base[i].imag() * std::sin(ph);
    }
    return SampledSignal(std::move(out), fs);
}

SymbolStream demodulate_qpsk(const SampledSignal& sig, double carrier, double baud, double genie_phase,
                             std::size_t genie_delay, const DemodOptions& options,
                             std::optional<std::size_t> max_symbols) {
    const double fs = sig.sample_rate();
    const std::size_t sps = samples_per_symbol(fs, baud);
    const double w = 2.0 * kPi * carrier / fs;
    const auto n = sig.size();
    std::vector<cplx> est;

    if (options.pulse.kind == PulseKind::kRectangular) {
        if (!(options.eye_fraction > 0.0 && options.eye_fraction <= 1.0)) {
            throw std::invalid_argument("eye_fraction must lie in (0, 1]");
        }
        const auto win = std::max<std::size_t>(
            2, static_cast<std::size_t>(std::lround(options.eye_fraction * static_cast<double>(sps))));
        const std::size_t lead = (sps - std::min(win, sps)) / 2;
        const std::size_t count = std::min(win, sps);
        for (std::size_t k = 0;; ++k) {
            if (max_symbols && est.size() >= *max_symbols) break;
            const std::size_t start = genie_delay + k * sps;
            if (start + sps > n) break;
            // Project the window onto {cos, -sin} at the genie phase: exact
            // I/Q recovery for an unfiltered rectangular symbol.
            Eigen::MatrixXd a(count, 2);
            Eigen::VectorXd b(count);
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t idx = start + lead + i;
                const double ph = w * static_cast<double>(idx) + genie_phase;
                a(static_cast<Eigen::Index>(i), 0) = std::cos(ph);
                a(static_cast<Eigen::Index>(i), 1) = -std::sin(ph);
                b(static_cast<Eigen::Index>(i)) = sig[idx];
            }
            const Eigen::Vector2d iq = a.colPivHouseholderQr().solve(b);
            est.emplace_back(iq(0), iq(1));
        }
    } else {
        const SampledPulse p = sample_pulse(options.pulse, sps);
        double energy = 0.0;
        for (double v : p.taps) energy += v * v;
        for (std::size_t k = 0;; ++k) {
            if (max_symbols && est.size() >= *max_symbols) break;
            const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(genie_delay + k * sps) + p.first;
            if (static_cast<std::size_t>(genie_delay + (k + 1) * sps) > n) break;
            cplx acc{};
            for (std::size_t i = 0; i < p.taps.size(); ++i) {
                const std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(i);
                if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(n)) continue;
                const double ph = w * static_cast<double>(idx) + genie_phase;
                acc += 2.0 * sig[static_cast<std::size_t>(idx)] * std::polar(1.0, -ph) * p.taps[i];
            }
            est.push_back(acc / energy);
        }
    }
    if (est.empty()) return SymbolStream({}, baud, SymbolFormat::kReceived);

    double e = 0.0;
    for (const auto& s : est) e += std::norm(s);
    e /= static_cast<double>(est.size());
    if (!(e > 0.0)) throw std::invalid_argument("demodulated symbols have zero energy");
    const double g = 1.0 / std::sqrt(e);
    for (auto& s : est) s *= g;
    return SymbolStream(std::move(est), baud, SymbolFormat::kReceived);
}

SampledSignal ideal_upconvert(const SampledSignal& sig, double shift_hz, double phase, double out_rate,
                              double gain) {
    const double in_rate = sig.sample_rate();
    const double ratio = out_rate / in_rate;
    const auto r = static_cast<std::size_t>(std::lround(ratio));
    if (r < 1 || std::abs(ratio - static_cast<double>(r)) > 1e-9) {
        throw std::invalid_argument("output rate must be an integer multiple of the input rate");
    }
    const std::size_t n = sig.size();
    std::vector<cplx> buf(sig.samples().begin(), sig.samples().end());
    auto spec = dsp::fft(buf);
    std::vector<cplx> up(n * r, cplx{});
    up[0] = spec[0];
    for (std::size_t k = 1; k < (n + 1) / 2; ++k) up[k] = 2.0 * spec[k];
    if (n % 2 == 0 && n > 1) up[n / 2] = spec[n / 2];
    auto a = dsp::ifft(up);
    std::vector<double> out(n * r);
    const double w = 2.0 * dsp::kPi * shift_hz / out_rate;
    const double scale = gain * static_cast<double>(r);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = scale * (a[i] * std::polar(1.0, w * static_cast<double>(i) + phase)).real();
    }
    return SampledSignal(std::move(out), out_rate);
}

SampledSignal ideal_downconvert(const SampledSignal& sig, double shift_hz, double phase, double out_rate) {
    const double in_rate = sig.sample_rate();
    const double ratio = in_rate / out_rate;
    const auto r = static_cast<std::size_t>(std::lround(ratio));
    if (r < 1 || std::abs(ratio - static_cast<double>(r)) > 1e-9 || sig.size() % r != 0) {
        throw std::invalid_argument("input rate and length must be integer multiples of the output");
    }
    const std::size_t n = sig.size();
    const std::size_t m = n / r;
    auto a = dsp::analytic_signal(sig.samples());
    const double w = 2.0 * dsp::kPi * shift_hz / in_rate;
    for (std::size_t i = 0; i < n; ++i) a[i] *= std::polar(1.0, -(w * static_cast<double>(i) + phase));
    auto spec = dsp::fft(a);
    std::vector<cplx> low(m, cplx{});
    // The analytic spectrum sits at non-negative frequencies, so an even
    // length's Nyquist bin comes from the positive side.
    for (std::size_t k = 0; k <= m / 2; ++k) low[k] = spec[k];
    for (std::size_t k = 1; k <= (m - 1) / 2; ++k) low[m - k] = spec[n - k];
    auto z = dsp::ifft(low);
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = z[i].real() / static_cast<double>(r);
    return SampledSignal(std::move(out), out_rate);
}

}  // namespace sicbench
