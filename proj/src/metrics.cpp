#include "sicbench/metrics.hpp"

#include "sicbench/dsp.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace sicbench {

namespace {

double to_db(double p) { return p > 0.0 ? 10.0 * std::log10(p) : -std::numeric_limits<double>::infinity(); }

std::vector<double> make_window(Window w, std::size_t n) {
    std::vector<double> out(n, 1.0);
    if (w == Window::kHann) {
        // Periodic Hann: overlapped at 50% it sums to a constant.
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = 0.5 - 0.5 * std::cos(2.0 * dsp::kPi * static_cast<double>(i) / static_cast<double>(n));
        }
    }
    return out;
}

}  // namespace

double PsdEstimate::band_power(double f_lo, double f_hi) const {
    double p = 0.0;
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        if (freqs[k] >= f_lo && freqs[k] <= f_hi) p += std::pow(10.0, power_db[k] / 10.0);
    }
    return p;
}

double PsdEstimate::total_power() const {
    double p = 0.0;
    for (double db : power_db) p += std::pow(10.0, db / 10.0);
    return p;
}

PsdEstimate welch_psd(const SampledSignal& sig, const WelchOptions& opt) {
    const std::size_t len = opt.segment;
    if (len < 2) throw std::invalid_argument("Welch segment must hold at least 2 samples");
    if (len > sig.size()) throw std::invalid_argument("Welch segment longer than the signal");
    if (!(opt.overlap >= 0.0 && opt.overlap < 1.0)) throw std::invalid_argument("overlap must lie in [0, 1)");

    const auto window = make_window(opt.window, len);
    double wss = 0.0;
    for (double w : window) wss += w * w;
    const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(len * (1.0 - opt.overlap))));
    const std::size_t segments = 1 + (sig.size() - len) / step;

    const std::size_t bins = len / 2 + 1;
    std::vector<double> acc(bins, 0.0);
    std::vector<double> frame(len);
    for (std::size_t s = 0; s < segments; ++s) {
        const std::size_t first = s * step;
        for (std::size_t i = 0; i < len; ++i) frame[i] = sig[first + i] * window[i];
        const auto p = dsp::rfft_power(frame);
        for (std::size_t k = 0; k < bins; ++k) acc[k] += p[k];
    }

    PsdEstimate psd;
    const double fs = sig.sample_rate();
    psd.resolution_bw = fs / static_cast<double>(len);
    psd.freqs.resize(bins);
    psd.power_db.resize(bins);
    const double norm = 1.0 / (static_cast<double>(segments) * static_cast<double>(len) * wss);
    for (std::size_t k = 0; k < bins; ++k) {
        // Fold negative frequencies onto the positive bins; DC and Nyquist have no mirror.
        const bool mirrored = k != 0 && !(len % 2 == 0 && k == len / 2);
        psd.freqs[k] = static_cast<double>(k) * psd.resolution_bw;
        psd.power_db[k] = to_db(acc[k] * norm * (mirrored ? 2.0 : 1.0));
    }
    return psd;
}

Band default_sic_band(double if_freq, double baud) {
    return {std::max(0.0, if_freq - 0.6 * baud), if_freq + 0.6 * baud};
}

SicReport sic_depth(const SampledSignal& y_off, const SampledSignal& y_on, Band band, const WelchOptions& opt) {
    if (y_off.sample_rate() != y_on.sample_rate()) throw std::invalid_argument("signals differ in sample rate");
    if (!(band.lo < band.hi)) throw std::invalid_argument("empty measurement band");
    const double before = welch_psd(y_off, opt).band_power(band.lo, band.hi);
    const double after = welch_psd(y_on, opt).band_power(band.lo, band.hi);
    if (!(before > 0.0)) throw std::invalid_argument("no in-band power before cancellation");

    SicReport r;
    r.band = band;
    r.power_before_db = to_db(before);
    if (after > 0.0 && to_db(before) - to_db(after) < kDepthCapDb) {
        r.power_after_db = to_db(after);
        r.depth_db = r.power_before_db - r.power_after_db;
    } else {
        r.capped = true;
        r.depth_db = kDepthCapDb;
        r.power_after_db = r.power_before_db - kDepthCapDb;
    }
    return r;
}

double evm(std::span<const cplx> rx) {
    if (rx.empty()) throw std::invalid_argument("EVM of an empty stream");
    double err = 0.0;
    double ref = 0.0;
    for (const auto& s : rx) {
        const cplx d = qpsk_decide(s);
        err += std::norm(s - d);
        ref += std::norm(d);
    }
    return 100.0 * std::sqrt(err / ref);
}

double evm(const SymbolStream& rx) { return evm(std::span<const cplx>(rx.symbols())); }

double evm(std::span<const cplx> rx, std::span<const cplx> reference) {
    if (rx.empty()) throw std::invalid_argument("EVM of an empty stream");
    if (reference.size() < rx.size()) throw std::invalid_argument("reference shorter than the received stream");
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        err += std::norm(rx[k] - reference[k]);
        ref += std::norm(reference[k]);
    }
    if (!(ref > 0.0)) throw std::invalid_argument("reference symbols have zero energy");
    return 100.0 * std::sqrt(err / ref);
}

double evm(const SymbolStream& rx, const SymbolStream& reference) {
    return evm(std::span<const cplx>(rx.symbols()), std::span<const cplx>(reference.symbols()));
}

std::size_t count_symbol_errors(const SymbolStream& rx, const SymbolStream& reference) {
    if (reference.size() < rx.size()) throw std::invalid_argument("reference shorter than the received stream");
    std::size_t errors = 0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        if (qpsk_decide(rx[k]) != qpsk_decide(reference[k])) ++errors;
    }
    return errors;
}

void write_psd_csv(std::ostream& os, const PsdEstimate& psd) {
    os << "freq_hz,power_db\n";
    for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
        os << format_double(psd.freqs[k]) << ',' << format_double(psd.power_db[k]) << '\n';
    }
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void KeyValueReport::add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
void KeyValueReport::add(const std::string& key, double value) { add(key, format_double(value)); }
void KeyValueReport::add(const std::string& key, long long value) { add(key, std::to_string(value)); }
void KeyValueReport::add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }

void KeyValueReport::write(std::ostream& os) const {
    for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
}

}  // namespace sicbench
