// Closed-loop experiment runner: capture, estimate, cancel, measure.
#pragma once

#include "sicbench/config.hpp"
#include "sicbench/estimator.hpp"
#include "sicbench/metrics.hpp"
#include "sicbench/signals.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sicbench {

/// A module error tagged with the pipeline stage that raised it.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what);
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Record layout in capture samples: [0, history) feeds filter edges and the
/// FIR history, [history, history + block) is the estimation/measurement
/// block, and `tail` pads the end. history is a whole number of SI and SOI
/// symbols so the block starts on a symbol boundary.
struct RecordLayout {
    std::size_t history = 0;
    std::size_t block = 0;
    std::size_t tail = 0;

    std::size_t total() const { return history + block + tail; }
    Block estimation_block() const { return {history, block}; }
};

RecordLayout record_layout(const ExperimentConfig& cfg);

/// Everything one capture produces. RF signals run at the simulation rate,
/// the rest at the capture rate over the full record.
struct Capture {
    RecordLayout layout;
    FrontendParams frontend;
    /// Noise-free SI at the receive antenna (what a perfect canceler subtracts).
    std::optional<SampledSignal> si_rf;
    SampledSignal received_rf;
    /// received_rf without the SOI; depth is measured on this path.
    SampledSignal shadow_rf;
    /// Digital IF images of the transmit waveforms (linear front end, no channel).
    std::vector<SampledSignal> x_if;
    SampledSignal y_off;
    SampledSignal shadow_off;
    std::optional<SymbolStream> soi_symbols;
};

/// Stage 1-3: waveforms, channel, front end with the canceler idle.
/// `variant` selects an independent data/noise realization (0 = the run's own).
Capture make_capture(const ExperimentConfig& cfg, std::uint64_t variant = 0);

struct EstimateResult {
    ChannelEstimate estimate;
    OrderTrace trace;
    bool adaptive = false;
};

/// Stage 4 on an existing capture (fixed order or adaptive loop).
EstimateResult estimate_channel(const ExperimentConfig& cfg, const Capture& cap);

struct Cancelled {
    SampledSignal y_on;
    SampledSignal shadow_on;
};

/// Stage 5: builds the reference from the estimate and re-runs the front end
/// with the canceler driven (optical), subtracts at IF (digital), or drives
/// the true SI waveform (genie; the estimate is ignored).
Cancelled cancel(const ExperimentConfig& cfg, const Capture& cap, const ChannelEstimate& est);

struct ExperimentReport {
    std::string config_text;
    std::uint64_t seed = 0;
    std::optional<SicReport> sic;  ///< unset when there is nothing to cancel
    std::optional<double> evm_off_pct;
    std::optional<double> evm_on_pct;
    std::optional<std::size_t> symbol_errors_off;
    std::optional<std::size_t> symbol_errors_on;
    std::size_t soi_symbols = 0;
    OrderTrace trace;
    bool adaptive = false;
    int order = 0;
    bool converged = false;
    double residual_db = 0.0;
    PsdEstimate psd_off;
    PsdEstimate psd_on;
    double wall_seconds = 0.0;
};

/// Stage 6.
void measure(const ExperimentConfig& cfg, const Capture& cap, const Cancelled& out, ExperimentReport& rep);

/// Full closed loop. `config_text` is echoed verbatim into the report; when
/// empty the serialized config is used. Throws StageError.
ExperimentReport run_single(const ExperimentConfig& cfg, const std::string& config_text = {});

struct SweepPoint {
    nlohmann::json value;
    std::optional<ExperimentReport> report;
    std::string error;  ///< "stage: message" when the run failed
};

/// One run per cfg.sweep value, in parallel up to sweep.workers. Failing
/// points are recorded and the sweep continues. A sweep over ls.fixed_order
/// shares one capture and one factorization across all points.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg);

/// Writes config.json, summary.txt, trace.csv, psd_off.csv, psd_on.csv and
/// timing.txt into dir (created if needed).
void write_run(const ExperimentReport& rep, const std::filesystem::path& dir);

/// Writes one run directory per point (point_000, ...) and sweep_summary.csv.
void write_sweep(const std::vector<SweepPoint>& points, const std::filesystem::path& dir);

/// summary.txt contents.
KeyValueReport summarize(const ExperimentReport& rep);

}  // namespace sicbench
