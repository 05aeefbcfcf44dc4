// Shared numerical building blocks: FFT wrappers, Kaiser-windowed filters and
// fractional-delay interpolation. Everything here works on plain sample
// vectors; the domain modules wrap them with rates and invariants.
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace sicbench::dsp {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

/// Kaiser window value at normalized position t in [-1, 1].
double kaiser(double t, double beta);

/// Odd-length linear-phase lowpass (Kaiser-windowed sinc), unit DC gain.
/// cutoff and sample_rate share units.
std::vector<double> design_lowpass(double cutoff, double sample_rate, std::size_t taps,
                                   double beta = 8.0);

/// Linear convolution trimmed so that output[n] aligns with input[n] for an
/// odd-length symmetric kernel (group delay removed). Uses FFTs.
std::vector<double> convolve_centered(std::span<const double> x, std::span<const double> h);

/// Forward/inverse complex DFT (unnormalized forward, inverse divides by n).
std::vector<cplx> fft(std::span<const cplx> x);
std::vector<cplx> ifft(std::span<const cplx> x);

/// Analytic signal x + j*Hilbert{x} via the DFT (circular).
std::vector<cplx> analytic_signal(std::span<const double> x);

/// Squared magnitude of the real-input DFT bins 0..n/2 for one windowed frame.
/// `frame` length is the transform length.
std::vector<double> rfft_power(std::span<const double> frame);

/// 64-tap Kaiser-windowed sinc fractional delay. Shifts x later by
/// `delay_samples` (may be negative or fractional). Integer delays are exact
/// shifts. Samples that would come from outside x are taken as zero.
std::vector<double> fractional_delay(std::span<const double> x, double delay_samples);

inline constexpr std::size_t kFracDelayTaps = 64;

double mean_power(std::span<const double> x);

}  // namespace sicbench::dsp
