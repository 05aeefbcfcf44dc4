// Cancellation and link-quality measurements: Welch PSD, in-band SIC depth, EVM.
#pragma once

#include "sicbench/signals.hpp"

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sicbench {

enum class Window { kHann, kRectangular };

struct WelchOptions {
    std::size_t segment = 4096;
    double overlap = 0.5;
    Window window = Window::kHann;
};

/// One-sided spectrum on bins 0 .. segment/2. power_db is the power carried
/// by each bin (not a density), so the bins sum to the signal's mean power.
struct PsdEstimate {
    std::vector<double> freqs;
    std::vector<double> power_db;
    double resolution_bw = 0.0;

    /// Sum of linear bin powers with f_lo <= f <= f_hi.
    double band_power(double f_lo, double f_hi) const;
    double total_power() const;
};

PsdEstimate welch_psd(const SampledSignal& sig, const WelchOptions& opt = {});

struct Band {
    double lo;
    double hi;
};

/// if_freq +/- 0.6 baud, clipped at 0.
Band default_sic_band(double if_freq, double baud);

struct SicReport {
    double depth_db = 0.0;
    Band band{0.0, 0.0};
    double power_before_db = 0.0;
    double power_after_db = 0.0;
    /// Depth hit kDepthCapDb (after-power zero or below the cap); power_after_db
    /// is then reported as power_before_db - kDepthCapDb.
    bool capped = false;
};

inline constexpr double kDepthCapDb = 80.0;

/// depth = 10 log10(P_band(y_off) / P_band(y_on)) with powers from welch_psd.
SicReport sic_depth(const SampledSignal& y_off, const SampledSignal& y_on, Band band,
                    const WelchOptions& opt = {});

/// Decision-directed EVM (percent) against the nearest QPSK point. The caller
/// is responsible for unit-RMS scaling; SymbolStream inputs already are.
double evm(std::span<const cplx> rx);
double evm(const SymbolStream& rx);

/// Data-aided EVM (percent) against the transmitted symbols.
double evm(std::span<const cplx> rx, std::span<const cplx> reference);
double evm(const SymbolStream& rx, const SymbolStream& reference);

/// Hard-decision symbol errors of rx against the transmitted symbols.
std::size_t count_symbol_errors(const SymbolStream& rx, const SymbolStream& reference);

/// CSV with columns freq_hz,power_db.
void write_psd_csv(std::ostream& os, const PsdEstimate& psd);

/// Flat "key = value" report lines in insertion order.
class KeyValueReport {
public:
    void add(const std::string& key, const std::string& value);
    void add(const std::string& key, const char* value) { add(key, std::string(value)); }
    void add(const std::string& key, double value);
    void add(const std::string& key, long long value);
    void add(const std::string& key, bool value);
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    void write(std::ostream& os) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest round-trip decimal text for a double ("inf", "-inf", "nan" for specials).
std::string format_double(double v);

}  // namespace sicbench
