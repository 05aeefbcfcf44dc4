#include "sicbench/frontend.hpp"

#include "sicbench/dsp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sicbench {

void FrontendParams::validate(double if_freq, double signal_bandwidth, double sample_rate) const {
    if (!(if_lowpass_cutoff > if_freq + signal_bandwidth / 2.0)) {
        throw std::invalid_argument("IF lowpass cutoff " + std::to_string(if_lowpass_cutoff) +
                                    " Hz cuts into the IF signal band");
    }
    if (!(if_lowpass_cutoff < sample_rate / 2.0)) {
        throw std::invalid_argument("IF lowpass cutoff must be below the simulation Nyquist rate");
    }
    if (lowpass_taps % 2 == 0 || lowpass_taps < 3) {
        throw std::invalid_argument("lowpass length must be odd and at least 3");
    }
    if (!(lo_freq > 0.0) || !std::isfinite(lo_phase) || !std::isfinite(conversion_gain)) {
        throw std::invalid_argument("invalid LO or conversion gain");
    }
    if (nonlinearity == Nonlinearity::kSinusoidal) {
        if (!(modulation_index > 0.0 && modulation_index < dsp::kPi / 2.0)) {
            throw std::invalid_argument("modulation index must lie in (0, pi/2)");
        }
        if (!(full_scale > 0.0)) throw std::invalid_argument("full scale must be positive");
    }
}

SampledSignal apply_ref_path(const SampledSignal& ref, const RefPathParams& p) {
    if (!(p.attenuation_db >= 0.0) || !(p.delay >= 0.0)) {
        throw std::invalid_argument("reference path needs attenuation >= 0 dB and delay >= 0");
    }
    if (p.delay >= ref.duration()) throw std::invalid_argument("reference delay exceeds the signal");
    const double g = std::pow(10.0, -p.attenuation_db / 20.0);
    const double d = p.delay * ref.sample_rate();
    const double rd = std::round(d);
    auto shifted = dsp::fractional_delay(ref.samples(), std::abs(d - rd) < 1e-9 ? rd : d);
    for (double& v : shifted) v *= g;
    return SampledSignal(std::move(shifted), ref.sample_rate());
}

SampledSignal dpmzm_downconvert(const SampledSignal& received, const SampledSignal& reference,
                                const FrontendParams& fp) {
    if (received.size() != reference.size() || received.sample_rate() != reference.sample_rate()) {
        throw std::invalid_argument("received and reference signals differ in length or sample rate");
    }
    const double fs = received.sample_rate();
    if (!(fp.if_lowpass_cutoff < fs / 2.0)) {
        throw std::invalid_argument("IF lowpass cutoff must be below the simulation Nyquist rate");
    }
    const std::size_t n = received.size();
    const double w = 2.0 * dsp::kPi * fp.lo_freq / fs;
    std::vector<double> mixed(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = received[i] - reference[i];
        if (fp.nonlinearity == Nonlinearity::kSinusoidal) {
            v = fp.full_scale / fp.modulation_index * std::sin(fp.modulation_index * v / fp.full_scale);
        }
        mixed[i] = v * std::cos(w * static_cast<double>(i) + fp.lo_phase);
    }
    const auto h = dsp::design_lowpass(fp.if_lowpass_cutoff, fs, fp.lowpass_taps);
    auto y = dsp::convolve_centered(mixed, h);
    for (double& v : y) v *= fp.conversion_gain;
    return SampledSignal(std::move(y), fs);
}

SampledSignal dpmzm_downconvert(const SampledSignal& received, const FrontendParams& fp) {
    return dpmzm_downconvert(received, SampledSignal::zeros(received.size(), received.sample_rate()), fp);
}

SampledSignal capture(const SampledSignal& if_signal, double capture_rate) {
    const double ratio = if_signal.sample_rate() / capture_rate;
    const auto k = static_cast<std::size_t>(std::lround(ratio));
    if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9) {
        throw std::invalid_argument("capture rate must divide the simulation rate");
    }
    std::vector<double> out;
    out.reserve(if_signal.size() / k + 1);
    for (std::size_t i = 0; i < if_signal.size(); i += k) out.push_back(if_signal[i]);
    return SampledSignal(std::move(out), capture_rate);
}

}  // namespace sicbench
