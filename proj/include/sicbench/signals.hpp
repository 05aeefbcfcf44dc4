// Digital-domain waveforms: QPSK symbol streams, pulse shaping, carrier
// up/downconversion and the genie-synchronized QPSK demodulator.
#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace sicbench {

using cplx = std::complex<double>;

/// Real-valued waveform at a fixed sample rate (Hz). Always non-empty and finite.
class SampledSignal {
public:
    SampledSignal(std::vector<double> samples, double sample_rate);

    /// n zero samples.
    static SampledSignal zeros(std::size_t n, double sample_rate);

    const std::vector<double>& samples() const { return samples_; }
    std::span<const double> view() const { return samples_; }
    double sample_rate() const { return sample_rate_; }
    std::size_t size() const { return samples_.size(); }
    double duration() const { return static_cast<double>(samples_.size()) / sample_rate_; }
    double operator[](std::size_t i) const { return samples_[i]; }

    /// Mean of squared samples.
    double power() const;

    SampledSignal scaled(double gain) const;
    /// Copy of [first, first + count).
    SampledSignal slice(std::size_t first, std::size_t count) const;

    bool operator==(const SampledSignal&) const = default;

private:
    std::vector<double> samples_;
    double sample_rate_;
};

SampledSignal operator+(const SampledSignal& a, const SampledSignal& b);
SampledSignal operator-(const SampledSignal& a, const SampledSignal& b);

enum class SymbolFormat {
    kQpsk,      ///< ideal Gray-mapped QPSK points
    kReceived,  ///< demodulator estimates, normalized to unit RMS
};

/// Complex symbols at a baud rate. kQpsk streams hold only constellation
/// points; kReceived streams hold unit-RMS soft estimates.
class SymbolStream {
public:
    SymbolStream(std::vector<cplx> symbols, double baud_rate, SymbolFormat format);

    const std::vector<cplx>& symbols() const { return symbols_; }
    double baud_rate() const { return baud_rate_; }
    SymbolFormat format() const { return format_; }
    std::size_t size() const { return symbols_.size(); }
    bool empty() const { return symbols_.empty(); }
    const cplx& operator[](std::size_t i) const { return symbols_[i]; }

    SymbolStream slice(std::size_t first, std::size_t count) const;

private:
    std::vector<cplx> symbols_;
    double baud_rate_;
    SymbolFormat format_;
};

/// The four Gray-mapped QPSK points, indexed by (b0 << 1) | b1.
/// b0 selects the sign of I, b1 the sign of Q: 0 -> +, 1 -> -.
const std::vector<cplx>& qpsk_constellation();

/// Nearest QPSK point (hard decision).
cplx qpsk_decide(cplx z);

/// RF/LO/IF frequency plan. if_freq = |rf_carrier - lo_freq| must fit below
/// the capture Nyquist limit with room for the signal bandwidth.
struct CarrierPlan {
    double rf_carrier;
    double lo_freq;

    double if_freq() const;
    /// Throws std::invalid_argument unless 0 < if < sample_rate/2 - baud.
    void validate(double sample_rate, double baud_rate) const;
};

enum class PulseKind { kRectangular, kRootRaisedCosine };

struct PulseShape {
    PulseKind kind = PulseKind::kRectangular;
    double rolloff = 0.35;     // RRC only
    std::size_t span = 24;     // RRC length in symbols
};

/// Gray-mapped QPSK. Throws on odd bit counts.
SymbolStream qpsk_modulate(std::span<const std::uint8_t> bits, double baud_rate = 1.0);

/// 2*n_symbols pseudo-random bits from a seed (mt19937_64).
std::vector<std::uint8_t> random_bits(std::size_t n_symbols, std::uint64_t seed);

/// s(t) = Re{ b(t) exp(j 2 pi carrier t) } with b the pulse-shaped baseband,
/// t = n / fs starting at zero. Symbol k is centered on sample
/// k*sps + sps/2 (rectangular pulses occupy [k*sps, (k+1)*sps)).
/// `num_samples` fixes the output length (truncate or zero-pad); by default
/// it is symbols * sps. Requires fs >= 2 (carrier + baud) and an integer
/// number of samples per symbol.
SampledSignal shape_and_upconvert(const SymbolStream& stream, double carrier, double fs,
                                  const PulseShape& pulse = {},
                                  std::optional<std::size_t> num_samples = std::nullopt);

struct DemodOptions {
    PulseShape pulse{};
    /// Rectangular pulses: fraction of each symbol (centered) used by the
    /// integrate-and-dump, which keeps filtered symbol edges out of the decision.
    double eye_fraction = 0.6;
};

/// Coherent QPSK demodulation with genie carrier phase and timing.
/// `genie_phase` is the received carrier phase (the signal is modeled as
/// Re{b(t - delay) exp(j(2 pi f t + phase))}); `genie_delay` is the sample
/// index where symbol 0 begins. Every complete symbol after genie_delay is
/// returned (up to max_symbols), RMS-normalized to unit energy.
SymbolStream demodulate_qpsk(const SampledSignal& sig, double carrier, double baud,
                             double genie_phase, std::size_t genie_delay,
                             const DemodOptions& options = {},
                             std::optional<std::size_t> max_symbols = std::nullopt);

/// Ideal single-sideband frequency translation of a real signal: the
/// positive-frequency content is shifted up by `shift_hz` and the result is
/// resampled to `out_rate` (an integer multiple of the input rate). Circular
/// over the input span; callers pad the edges.
SampledSignal ideal_upconvert(const SampledSignal& sig, double shift_hz, double phase,
                              double out_rate, double gain = 1.0);

/// Inverse of ideal_upconvert: shift down by `shift_hz` and decimate to
/// `out_rate`, keeping the band (-out_rate/2, out_rate/2) after the shift.
SampledSignal ideal_downconvert(const SampledSignal& sig, double shift_hz, double phase,
                                double out_rate);

}  // namespace sicbench
