// MIMO multipath self-interference channel: m transmit antennas into one
// receive antenna, plus the single-path SOI and additive white noise.
#pragma once

#include "sicbench/signals.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace sicbench {

/// One discrete path. Gain is relative to the direct path; phase rotates the
/// passband carrier of that path.
struct Tap {
    double delay = 0.0;    // seconds, >= 0
    double gain_db = 0.0;
    double phase = 0.0;    // radians

    bool operator==(const Tap&) const = default;
};

class MultipathChannel {
public:
    /// Throws unless every antenna has a non-empty, delay-sorted list of
    /// finite taps with non-negative delays.
    explicit MultipathChannel(std::vector<std::vector<Tap>> per_antenna_taps,
                              std::optional<double> noise_snr_db = std::nullopt);

    const std::vector<std::vector<Tap>>& taps() const { return taps_; }
    std::size_t num_antennas() const { return taps_.size(); }
    std::optional<double> noise_snr_db() const { return noise_snr_db_; }
    double max_delay() const;

    bool operator==(const MultipathChannel&) const = default;

private:
    std::vector<std::vector<Tap>> taps_;
    std::optional<double> noise_snr_db_;
};

/// r(t) = sum_j sum_k g_jk x_j(t - tau_jk). Integer-sample delays are exact
/// shifts; fractional ones use 64-tap Kaiser-windowed sinc interpolation.
/// Samples needing history before t = 0 are zero. Output length = input length.
SampledSignal apply_multipath(const std::vector<SampledSignal>& tx, const MultipathChannel& ch);

/// Marks "no noise" for add_awgn and "disabled" for compose_received.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();
inline constexpr double kSoiDisabled = -std::numeric_limits<double>::infinity();

/// sig + N(0, P / 10^(snr/10)) with P = reference_power, or the signal's own
/// power when no reference is given. snr_db = +inf returns sig unchanged.
SampledSignal add_awgn(const SampledSignal& sig, double snr_db, std::uint64_t seed,
                       std::optional<double> reference_power = std::nullopt);

/// si + a * soi where a scales soi to `soi_power_db` relative to
/// `reference_power` (the direct-path SI power; defaults to si's power).
/// soi_power_db = -inf leaves si untouched.
SampledSignal compose_received(const SampledSignal& si, const SampledSignal& soi, double soi_power_db,
                               std::optional<double> reference_power = std::nullopt);

/// The scaled SOI component compose_received would add.
SampledSignal scale_soi(const SampledSignal& si, const SampledSignal& soi, double soi_power_db,
                        std::optional<double> reference_power = std::nullopt);

}  // namespace sicbench
