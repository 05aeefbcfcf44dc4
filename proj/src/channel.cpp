#include "sicbench/channel.hpp"

#include "sicbench/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sicbench {

MultipathChannel::MultipathChannel(std::vector<std::vector<Tap>> per_antenna_taps,
                                   std::optional<double> noise_snr_db)
    : taps_(std::move(per_antenna_taps)), noise_snr_db_(noise_snr_db) {
    if (taps_.empty()) throw std::invalid_argument("channel needs at least one transmit antenna");
    for (std::size_t j = 0; j < taps_.size(); ++j) {
        const auto& list = taps_[j];
        if (list.empty()) {
            throw std::invalid_argument("antenna " + std::to_string(j) + " has no taps");
        }
        for (std::size_t k = 0; k < list.size(); ++k) {
            const Tap& t = list[k];
            if (!std::isfinite(t.delay) || t.delay < 0.0 || !std::isfinite(t.gain_db) ||
                !std::isfinite(t.phase)) {
                throw std::invalid_argument("antenna " + std::to_string(j) + " tap " + std::to_string(k) +
                                            " has an invalid delay, gain or phase");
            }
            if (k > 0 && t.delay < list[k - 1].delay) {
                throw std::invalid_argument("antenna " + std::to_string(j) + " taps are not sorted by delay");
            }
        }
    }
    if (noise_snr_db_ && std::isnan(*noise_snr_db_)) throw std::invalid_argument("noise SNR is NaN");
}

double MultipathChannel::max_delay() const {
    double d = 0.0;
    for (const auto& list : taps_) d = std::max(d, list.back().delay);
    return d;
}

SampledSignal apply_multipath(const std::vector<SampledSignal>& tx, const MultipathChannel& ch) {
    if (tx.size() != ch.num_antennas()) {
        throw std::invalid_argument("transmit signal count does not match the channel's antennas");
    }
    const double fs = tx.front().sample_rate();
    const std::size_t n = tx.front().size();
    for (const auto& s : tx) {
        if (s.sample_rate() != fs) throw std::invalid_argument("transmit signals differ in sample rate");
        if (s.size() != n) throw std::invalid_argument("transmit signals differ in length");
    }
    if (ch.max_delay() * fs >= static_cast<double>(n)) {
        throw std::invalid_argument("channel delay spread exceeds the signal duration");
    }

    std::vector<double> out(n, 0.0);
    for (std::size_t j = 0; j < tx.size(); ++j) {
        const auto& taps = ch.taps()[j];
        const bool needs_quadrature =
            std::any_of(taps.begin(), taps.end(), [](const Tap& t) { return t.phase != 0.0; });
        std::vector<double> quad;
        if (needs_quadrature) {
            // Hilbert component: a path phase phi maps x -> x cos(phi) - H{x} sin(phi).
            const auto a = dsp::analytic_signal(tx[j].samples());
            quad.resize(n);
            for (std::size_t i = 0; i < n; ++i) quad[i] = a[i].imag();
        }
        for (const Tap& t : taps) {
            const double g = std::pow(10.0, t.gain_db / 20.0);
            const double d = t.delay * fs;
            // Snap delays that are integers up to float noise (e.g. 30 ns * 10 GSa/s).
            const double rd = std::round(d);
            const double delay = std::abs(d - rd) < 1e-9 ? rd : d;
            const auto shifted = dsp::fractional_delay(tx[j].samples(), delay);
            const double gc = g * std::cos(t.phase);
            for (std::size_t i = 0; i < n; ++i) out[i] += gc * shifted[i];
            if (needs_quadrature && t.phase != 0.0) {
                const auto qs = dsp::fractional_delay(quad, delay);
                const double gq = -g * std::sin(t.phase);
                for (std::size_t i = 0; i < n; ++i) out[i] += gq * qs[i];
            }
        }
    }
    return SampledSignal(std::move(out), fs);
}

SampledSignal add_awgn(const SampledSignal& sig, double snr_db, std::uint64_t seed,
                       std::optional<double> reference_power) {
    if (snr_db == kNoNoise) return sig;
    if (std::isnan(snr_db)) throw std::invalid_argument("SNR is NaN");
    const double p = reference_power.value_or(sig.power());
    const double sigma = std::sqrt(p / std::pow(10.0, snr_db / 10.0));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    std::vector<double> out(sig.samples());
    for (double& v : out) v += normal(rng);
    return SampledSignal(std::move(out), sig.sample_rate());
}

SampledSignal scale_soi(const SampledSignal& si, const SampledSignal& soi, double soi_power_db,
                        std::optional<double> reference_power) {
    if (si.size() != soi.size() || si.sample_rate() != soi.sample_rate()) {
        throw std::invalid_argument("SI and SOI differ in length or sample rate");
    }
    if (soi_power_db == kSoiDisabled) return SampledSignal::zeros(si.size(), si.sample_rate());
    const double p_soi = soi.power();
    if (!(p_soi > 0.0)) throw std::invalid_argument("SOI has zero power");
    const double target = reference_power.value_or(si.power()) * std::pow(10.0, soi_power_db / 10.0);
    return soi.scaled(std::sqrt(target / p_soi));
}

SampledSignal compose_received(const SampledSignal& si, const SampledSignal& soi, double soi_power_db,
                               std::optional<double> reference_power) {
    if (soi_power_db == kSoiDisabled) {
        if (si.size() != soi.size() || si.sample_rate() != soi.sample_rate()) {
            throw std::invalid_argument("SI and SOI differ in length or sample rate");
        }
        return si;
    }
    return si + scale_soi(si, soi, soi_power_db, reference_power);
}

}  // namespace sicbench
