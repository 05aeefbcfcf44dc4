// Behavioral model of the photonic canceler / downconverter: the upper
// modulator subtracts the reference drive from the received RF signal, the
// lower one supplies the LO, and the photodetector beat is lowpassed to IF.
#pragma once

#include "sicbench/signals.hpp"

#include <cstddef>

namespace sicbench {

enum class Nonlinearity { kLinear, kSinusoidal };

struct FrontendParams {
    double lo_freq = 8e9;
    double lo_phase = 0.0;
    double conversion_gain = 1.0;
    double if_lowpass_cutoff = 2.75e9;
    std::size_t lowpass_taps = 1025;
    Nonlinearity nonlinearity = Nonlinearity::kLinear;
    /// Peak phase swing (rad) reached when the drive difference equals full_scale.
    double modulation_index = 0.5;
    /// Drive amplitude mapped to modulation_index in sinusoidal mode.
    double full_scale = 1.0;

    /// Throws unless the lowpass passes if_freq + bandwidth/2 and the
    /// sinusoidal parameters are in range.
    void validate(double if_freq, double signal_bandwidth, double sample_rate) const;
};

struct RefPathParams {
    double attenuation_db = 0.0;  // >= 0
    double delay = 0.0;           // seconds, >= 0
};

/// Attenuate and delay the reference drive (fractional delays interpolated).
SampledSignal apply_ref_path(const SampledSignal& ref, const RefPathParams& p);

/// y(t) = g * LPF{ T[received(t) - reference(t)] * cos(2 pi f_LO t + phi) }
/// with T the identity (linear) or full_scale/m * sin(m * v / full_scale).
/// The lowpass is a zero-phase (group-delay compensated) Kaiser FIR, so the
/// output is time-aligned with the inputs and keeps their sample rate.
SampledSignal dpmzm_downconvert(const SampledSignal& received, const SampledSignal& reference,
                                const FrontendParams& fp);

/// Same as dpmzm_downconvert with no reference drive.
SampledSignal dpmzm_downconvert(const SampledSignal& received, const FrontendParams& fp);

/// Oscilloscope capture: keep every k-th sample of a band-limited IF signal
/// so that the result runs at capture_rate.
SampledSignal capture(const SampledSignal& if_signal, double capture_rate);

}  // namespace sicbench
