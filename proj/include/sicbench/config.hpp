// Experiment configuration: a JSON document with unit-suffixed keys.
//
// Values are stored in the units of their keys (GHz, ns, dB, rad) so that
// parse(serialize(cfg)) reproduces cfg exactly; conversion to SI units
// happens when the pipeline builds module parameters.
#pragma once

#include "sicbench/channel.hpp"
#include "sicbench/estimator.hpp"
#include "sicbench/frontend.hpp"
#include "sicbench/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sicbench {

struct AntennaSpec {
    std::vector<double> delays_ns;
    std::vector<double> gains_db;
    std::vector<double> phases_rad;  // empty = all zero

    bool operator==(const AntennaSpec&) const = default;
};

struct ScenarioSpec {
    std::string name = "SI1";
    /// Empty means no self-interference at all (null channel).
    std::vector<AntennaSpec> antennas;
    /// AWGN at the receive antenna relative to total SI power; unset = noiseless.
    std::optional<double> noise_snr_db;

    bool operator==(const ScenarioSpec&) const = default;
};

struct WaveformSpec {
    double baud_gbaud = 1.0;
    double carrier_ghz = 10.0;
    std::string pulse = "rect";  // "rect" | "rrc"
    double rolloff = 0.35;

    bool operator==(const WaveformSpec&) const = default;
};

struct SoiSpec {
    bool enabled = false;
    /// Unset = half the SI baud rate.
    std::optional<double> baud_gbaud;
    double carrier_ghz = 10.0;
    /// Received power relative to one antenna's direct-path SI (equivalently
    /// its transmit power, the direct path being 0 dB). Required when enabled.
    std::optional<double> power_db;
    std::string pulse = "rect";
    double rolloff = 0.35;

    bool operator==(const SoiSpec&) const = default;
};

/// Keeps the signal band clear of the IF lowpass transition (about +-0.2 GHz
/// for the default 1025-tap filter at 80 GSa/s). The reference crosses that
/// filter twice on the optical path, so any in-band droop limits cancellation.
inline constexpr double kAutoCutoffMargin = 0.5e9;

struct FrontendSpec {
    double lo_ghz = 8.0;
    double lo_phase_rad = 0.0;
    double conversion_gain = 1.0;
    /// Unset = IF + half the widest occupied bandwidth + kAutoCutoffMargin.
    std::optional<double> if_cutoff_ghz;
    int lowpass_taps = 1025;
    std::string nonlinearity = "linear";  // "linear" | "sinusoidal"
    double modulation_index_rad = 0.5;

    bool operator==(const FrontendSpec&) const = default;
};

struct RefPathSpec {
    double attenuation_db = 0.0;
    double delay_ns = 0.0;

    bool operator==(const RefPathSpec&) const = default;
};

struct SamplingSpec {
    double capture_gsps = 10.0;
    /// RF simulation rate = capture rate * rf_oversampling.
    int rf_oversampling = 8;
    int block_samples = 40000;
    /// Extra capture samples before and after the block (filter edges).
    int edge_pad_samples = 128;

    bool operator==(const SamplingSpec&) const = default;
};

struct LsSpec {
    int alpha = 10;
    int delta = 1;
    int big_delta = 40;
    double gamma_min = 2000.0;
    double gamma_max = 4000.0;
    int max_iterations = 600;
    int l_init = 150;
    int l_min = 50;
    int l_max = 520;
    int patience = 20;
    bool normalize_e_delta = true;
    std::string order_reading = "fresh";  // "fresh" | "lagged"
    /// Skip the adaptive loop and estimate at this order.
    std::optional<int> fixed_order;
    /// Re-capture (fresh noise) for every iteration instead of reusing one block.
    bool live = false;

    bool operator==(const LsSpec&) const = default;
};

struct MetricsSpec {
    std::string band = "signal";  // "signal" (IF +/- 0.6 baud) | "nyquist"
    int welch_segment = 4096;
    double welch_overlap = 0.5;
    std::string window = "hann";  // "hann" | "rect"
    std::string evm_mode = "decision";  // "decision" | "data_aided"
    double eye_fraction = 0.6;

    bool operator==(const MetricsSpec&) const = default;
};

struct SweepSpec {
    std::string param;
    std::vector<nlohmann::json> values;
    int workers = 1;

    bool operator==(const SweepSpec&) const = default;
};

struct ExperimentConfig {
    ScenarioSpec scenario;
    WaveformSpec si;
    SoiSpec soi;
    FrontendSpec frontend;
    RefPathSpec ref_path;
    SamplingSpec sampling;
    LsSpec ls;
    std::string cancel = "optical";  // "optical" | "digital" | "genie"
    MetricsSpec metrics;
    std::optional<SweepSpec> sweep;
    std::uint64_t seed = 1;
    std::string output_dir;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Thrown for schema and invariant violations; `path` is the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& path, const std::string& what);
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

/// Parses and validates. Unknown keys are errors. "scenario" may be a library
/// name ("SI1".."SI4") or an inline object.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_text(const std::string& text);

/// Full document with every key, defaults included.
nlohmann::json serialize_config(const ExperimentConfig& cfg);

/// Throws ConfigError naming the first violated constraint across modules.
void validate_config(const ExperimentConfig& cfg);

/// Copy of cfg with the dotted parameter replaced by value (no sweep block).
ExperimentConfig with_parameter(const ExperimentConfig& cfg, const std::string& param, const nlohmann::json& value);

/// Scenario spec from a library entry.
ScenarioSpec scenario_spec(const std::string& name);

/// The channel described by a scenario spec (requires at least one antenna).
MultipathChannel make_channel(const ScenarioSpec& s);

// Module parameters in SI units.
double rf_rate(const ExperimentConfig& cfg);
double capture_rate(const ExperimentConfig& cfg);
double si_baud(const ExperimentConfig& cfg);
double soi_baud(const ExperimentConfig& cfg);
double if_freq(const ExperimentConfig& cfg);
PulseShape si_pulse(const ExperimentConfig& cfg);
PulseShape soi_pulse(const ExperimentConfig& cfg);
/// Occupied bandwidth: baud (rect) or baud * (1 + rolloff) (RRC).
double occupied_bandwidth(double baud, const PulseShape& p);
FrontendParams frontend_params(const ExperimentConfig& cfg);
RefPathParams ref_path_params(const ExperimentConfig& cfg);
LsConfig ls_config(const ExperimentConfig& cfg);
WelchOptions welch_options(const ExperimentConfig& cfg);

}  // namespace sicbench
