#include "sicbench/pipeline.hpp"

#include "sicbench/channel.hpp"
#include "sicbench/dsp.hpp"
#include "sicbench/frontend.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace sicbench {

StageError::StageError(std::string stage, const std::string& what)
    : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

namespace {

// Runs fn, re-raising anything but a StageError as one tagged with `stage`.
template <typename Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const RankDeficient& e) {
        throw StageError(stage, e.what());
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

// splitmix64 finalizer: decorrelates the per-stream seeds derived from one run seed.
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

enum Stream : std::uint64_t { kSiBits = 1, kSoiBits = 100, kNoise = 200 };

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t variant, std::uint64_t stream) {
    return mix(mix(seed) ^ mix(variant * 1000 + stream));
}

std::size_t samples_per(double rate, double baud) { return static_cast<std::size_t>(std::lround(rate / baud)); }

SampledSignal transmit(double baud, double carrier, const PulseShape& pulse, double fs, std::size_t n,
                       std::uint64_t seed, std::optional<SymbolStream>* symbols_out = nullptr) {
    const std::size_t sps = samples_per(fs, baud);
    const std::size_t count = n / sps + 1;
    const auto bits = random_bits(count, seed);
    auto syms = qpsk_modulate(bits, baud);
    auto wave = shape_and_upconvert(syms, carrier, fs, pulse, n);
    if (symbols_out) symbols_out->emplace(std::move(syms));
    return wave;
}

Band measurement_band(const ExperimentConfig& cfg) {
    if (cfg.metrics.band == "nyquist") return {0.0, capture_rate(cfg) / 2.0};
    return default_sic_band(if_freq(cfg), si_baud(cfg));
}

}  // namespace

RecordLayout record_layout(const ExperimentConfig& cfg) {
    const double fc = capture_rate(cfg);
    std::size_t align = samples_per(fc, si_baud(cfg));
    if (cfg.soi.enabled) align = std::lcm(align, samples_per(fc, soi_baud(cfg)));
    const auto pad = static_cast<std::size_t>(cfg.sampling.edge_pad_samples);
    const std::size_t want = static_cast<std::size_t>(cfg.ls.l_max) + pad;
    RecordLayout r;
    r.history = (want + align - 1) / align * align;
    r.block = static_cast<std::size_t>(cfg.sampling.block_samples);
    r.tail = pad;
    return r;
}

Capture make_capture(const ExperimentConfig& cfg, std::uint64_t variant) {
    const double fs = rf_rate(cfg), fc = capture_rate(cfg);
    const auto osr = static_cast<std::size_t>(cfg.sampling.rf_oversampling);
    const RecordLayout layout = record_layout(cfg);
    const std::size_t n_rf = layout.total() * osr;
    const double carrier = cfg.si.carrier_ghz * 1e9;
    const bool has_si = !cfg.scenario.antennas.empty();

    // Stage 1: transmit waveforms. A null channel still synthesizes antenna 0
    // because it defines the SOI and noise power references.
    std::vector<SampledSignal> x_rf;
    std::optional<SampledSignal> soi_rf;
    std::optional<SymbolStream> soi_symbols;
    staged("signals", [&] {
        const std::size_t m = has_si ? cfg.scenario.antennas.size() : 1;
        for (std::size_t j = 0; j < m; ++j) {
            x_rf.push_back(transmit(si_baud(cfg), carrier, si_pulse(cfg), fs, n_rf,
                                    stream_seed(cfg.seed, variant, kSiBits + j)));
        }
        if (cfg.soi.enabled) {
            soi_rf = transmit(soi_baud(cfg), cfg.soi.carrier_ghz * 1e9, soi_pulse(cfg), fs, n_rf,
                              stream_seed(cfg.seed, variant, kSoiBits), &soi_symbols);
        }
    });
    const double tx_power = x_rf.front().power();

    // Stage 2: channel, SOI and noise at the receive antenna.
    std::optional<SampledSignal> si_rf;
    std::optional<SampledSignal> received, shadow;
    staged("channel", [&] {
        SampledSignal clean = SampledSignal::zeros(n_rf, fs);
        if (has_si) {
            si_rf = apply_multipath(x_rf, make_channel(cfg.scenario));
            clean = *si_rf;
        }
        if (cfg.scenario.noise_snr_db) {
            const double ref = has_si ? si_rf->power() : tx_power;
            shadow = add_awgn(clean, *cfg.scenario.noise_snr_db, stream_seed(cfg.seed, variant, kNoise), ref);
        } else {
            shadow = clean;
        }
        received = soi_rf ? compose_received(*shadow, *soi_rf, *cfg.soi.power_db, tx_power) : *shadow;
    });

    // Stage 3: front end with the canceler idle, plus the digital IF images.
    Capture cap{layout, frontend_params(cfg), si_rf, *received, *shadow, {}, SampledSignal::zeros(1, fc),
                SampledSignal::zeros(1, fc), soi_symbols};
    staged("frontend", [&] {
        if (cap.frontend.nonlinearity == Nonlinearity::kSinusoidal) {
            const auto& v = cap.received_rf.samples();
            double peak = 0.0;
            for (double s : v) peak = std::max(peak, std::abs(s));
            cap.frontend.full_scale = peak > 0.0 ? peak : 1.0;
        }
        cap.y_off = capture(dpmzm_downconvert(cap.received_rf, cap.frontend), fc);
        cap.shadow_off = soi_rf ? capture(dpmzm_downconvert(cap.shadow_rf, cap.frontend), fc) : cap.y_off;
        FrontendParams twin = cap.frontend;
        twin.nonlinearity = Nonlinearity::kLinear;
        if (has_si) {
            for (const auto& x : x_rf) cap.x_if.push_back(capture(dpmzm_downconvert(x, twin), fc));
        }
    });
    return cap;
}

EstimateResult estimate_channel(const ExperimentConfig& cfg, const Capture& cap) {
    return staged("estimator", [&] {
        EstimateResult r;
        const Block block = cap.layout.estimation_block();
        if (cfg.ls.fixed_order) {
            r.estimate = ls_estimate(cap.x_if, cap.y_off, static_cast<std::size_t>(*cfg.ls.fixed_order), block);
            r.trace.converged = true;
            return r;
        }
        const LsConfig ls = ls_config(cfg);
        const auto l_max = static_cast<std::size_t>(ls.l_max);
        AdaptiveResult ar;
        if (cfg.ls.live) {
            // Every iteration after the first sees a fresh data/noise realization
            // of the same static channel.
            BlockProvider provider = [&](int i) {
                if (i == 0) return NestedLeastSquares(cap.x_if, cap.y_off, l_max, block);
                const Capture c = make_capture(cfg, static_cast<std::uint64_t>(i));
                return NestedLeastSquares(c.x_if, c.y_off, l_max, block);
            };
            ar = adaptive_order_loop(provider, ls);
        } else {
            ar = adaptive_order_loop(NestedLeastSquares(cap.x_if, cap.y_off, l_max, block), ls);
        }
        r.estimate = std::move(ar.estimate);
        r.trace = std::move(ar.trace);
        r.adaptive = true;
        return r;
    });
}

Cancelled cancel(const ExperimentConfig& cfg, const Capture& cap, const ChannelEstimate& est) {
    const double fs = rf_rate(cfg), fc = capture_rate(cfg);
    const std::size_t total = cap.layout.total();
    if (cfg.cancel == "digital") {
        const auto ref = staged("estimator", [&] { return reconstruct_reference(cap.x_if, est, {0, total}); });
        return {cap.y_off - ref, cap.shadow_off - ref};
    }
    // Canceler drive at RF.
    SampledSignal drive = staged("frontend", [&] {
        if (cfg.cancel == "genie") return *cap.si_rf;
        const auto ref = reconstruct_reference(cap.x_if, est, {0, total});
        // Inverse of the front-end mapping cos(w t + p) -> g/2 cos((w - w_LO) t + p - phi),
        // then pre-compensated so the drive arrives intact after the reference path.
        auto up = ideal_upconvert(ref, cap.frontend.lo_freq, cap.frontend.lo_phase, fs,
                                  2.0 / cap.frontend.conversion_gain);
        const RefPathParams rp = ref_path_params(cfg);
        const double boost = std::pow(10.0, rp.attenuation_db / 20.0);
        auto advanced = rp.delay > 0.0 ? dsp::fractional_delay(up.view(), -rp.delay * fs) : up.samples();
        for (auto& v : advanced) v *= boost;
        return apply_ref_path(SampledSignal(std::move(advanced), fs), rp);
    });
    return staged("frontend", [&] {
        Cancelled c{capture(dpmzm_downconvert(cap.received_rf, drive, cap.frontend), fc), SampledSignal::zeros(1, fc)};
        c.shadow_on = cap.soi_symbols ? capture(dpmzm_downconvert(cap.shadow_rf, drive, cap.frontend), fc) : c.y_on;
        return c;
    });
}

void measure(const ExperimentConfig& cfg, const Capture& cap, const Cancelled& out, ExperimentReport& rep) {
    staged("metrics", [&] {
        const auto& L = cap.layout;
        const WelchOptions wo = welch_options(cfg);
        const auto off = cap.y_off.slice(L.history, L.block);
        const auto on = out.y_on.slice(L.history, L.block);
        rep.psd_off = welch_psd(off, wo);
        rep.psd_on = welch_psd(on, wo);
        if (!cfg.scenario.antennas.empty()) {
            rep.sic = sic_depth(cap.shadow_off.slice(L.history, L.block), out.shadow_on.slice(L.history, L.block),
                                measurement_band(cfg), wo);
        }
        if (cap.soi_symbols) {
            const double fc = capture_rate(cfg), baud = soi_baud(cfg), f_if = if_freq(cfg);
            const std::size_t sps = samples_per(fc, baud);
            const std::size_t count = L.block / sps;
            const double phase = 2.0 * dsp::kPi * f_if * static_cast<double>(L.history) / fc - cap.frontend.lo_phase;
            const DemodOptions opts{soi_pulse(cfg), cfg.metrics.eye_fraction};
            const auto tx = cap.soi_symbols->slice(L.history / sps, count);
            const bool aided = cfg.metrics.evm_mode == "data_aided";
            auto quality = [&](const SampledSignal& y, std::optional<double>& evm_out,
                               std::optional<std::size_t>& errors_out) {
                const auto rx = demodulate_qpsk(y, f_if, baud, phase, 0, opts, count);
                evm_out = aided ? evm(rx, tx) : evm(rx);
                errors_out = count_symbol_errors(rx, tx);
                rep.soi_symbols = rx.size();
            };
            quality(off, rep.evm_off_pct, rep.symbol_errors_off);
            quality(on, rep.evm_on_pct, rep.symbol_errors_on);
        }
    });
}

ExperimentReport run_single(const ExperimentConfig& cfg, const std::string& config_text) {
    const auto t0 = std::chrono::steady_clock::now();
    staged("config", [&] { validate_config(cfg); });
    ExperimentReport rep;
    rep.config_text = config_text.empty() ? serialize_config(cfg).dump(2) + "\n" : config_text;
    rep.seed = cfg.seed;

    const Capture cap = make_capture(cfg);
    ChannelEstimate est;
    if (!cfg.scenario.antennas.empty()) {
        auto er = estimate_channel(cfg, cap);
        est = std::move(er.estimate);
        rep.trace = std::move(er.trace);
        rep.adaptive = er.adaptive;
        rep.order = est.order;
        rep.converged = rep.trace.converged;
        rep.residual_db =
            10.0 * std::log10(est.residual_power / cap.y_off.slice(cap.layout.history, cap.layout.block).power());
    }
    const Cancelled out = cfg.scenario.antennas.empty() ? Cancelled{cap.y_off, cap.shadow_off} : cancel(cfg, cap, est);
    measure(cfg, cap, out, rep);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg) {
    staged("config", [&] {
        validate_config(cfg);
        if (!cfg.sweep) throw std::invalid_argument("no sweep block");
    });
    const auto& sw = *cfg.sweep;
    std::vector<SweepPoint> points(sw.values.size());
    std::vector<std::optional<ExperimentConfig>> cfgs(sw.values.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        points[k].value = sw.values[k];
        try {
            cfgs[k] = with_parameter(cfg, sw.param, sw.values[k]);
        } catch (const std::exception& e) {
            points[k].error = std::string("config: ") + e.what();
        }
    }

    // Order sweeps share the capture and one nested factorization.
    const bool shared = sw.param == "ls.fixed_order" && !cfg.scenario.antennas.empty();
    std::optional<Capture> cap;
    std::optional<NestedLeastSquares> nls;
    std::string shared_error;
    if (shared) {
        try {
            ExperimentConfig base = cfg;
            base.sweep.reset();
            cap = make_capture(base);
            int top = 1;
            for (const auto& c : cfgs) {
                if (c && c->ls.fixed_order) top = std::max(top, *c->ls.fixed_order);
            }
            nls = staged("estimator", [&] {
                return NestedLeastSquares(cap->x_if, cap->y_off, static_cast<std::size_t>(top),
                                          cap->layout.estimation_block());
            });
        } catch (const std::exception& e) {
            shared_error = e.what();
        }
    }

    auto run_point = [&](std::size_t k) {
        auto& p = points[k];
        if (!cfgs[k]) return;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            if (!shared || !cfgs[k]->ls.fixed_order) {
                p.report = run_single(*cfgs[k]);
                return;
            }
            if (!shared_error.empty()) throw std::runtime_error(shared_error);
            ExperimentReport rep;
            rep.config_text = serialize_config(*cfgs[k]).dump(2) + "\n";
            rep.seed = cfgs[k]->seed;
            const auto est = staged("estimator", [&] { return nls->solve(static_cast<std::size_t>(*cfgs[k]->ls.fixed_order)); });
            rep.order = est.order;
            rep.converged = true;
            rep.trace.converged = true;
            rep.residual_db = 10.0 * std::log10(est.residual_power * static_cast<double>(cap->layout.block) / nls->energy());
            measure(*cfgs[k], *cap, cancel(*cfgs[k], *cap, est), rep);
            rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            p.report = std::move(rep);
        } catch (const std::exception& e) {
            p.error = e.what();
        }
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(sw.workers), points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < points.size(); k = next++) run_point(k);
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return points;
}

KeyValueReport summarize(const ExperimentReport& rep) {
    KeyValueReport kv;
    kv.add("seed", std::to_string(rep.seed));
    if (rep.sic) {
        kv.add("sic_depth_db", rep.sic->depth_db);
        kv.add("sic_capped", rep.sic->capped);
        kv.add("band_lo_hz", rep.sic->band.lo);
        kv.add("band_hi_hz", rep.sic->band.hi);
        kv.add("power_before_db", rep.sic->power_before_db);
        kv.add("power_after_db", rep.sic->power_after_db);
    } else {
        kv.add("sic_depth_db", "skipped");
    }
    kv.add("order", static_cast<long long>(rep.order));
    kv.add("adaptive", rep.adaptive);
    kv.add("converged", rep.converged);
    kv.add("iterations", static_cast<long long>(rep.trace.records.size()));
    kv.add("residual_db", rep.residual_db);
    if (rep.evm_on_pct) {
        kv.add("soi_symbols", static_cast<long long>(rep.soi_symbols));
        kv.add("evm_off_pct", *rep.evm_off_pct);
        kv.add("evm_on_pct", *rep.evm_on_pct);
        kv.add("symbol_errors_off", static_cast<long long>(*rep.symbol_errors_off));
        kv.add("symbol_errors_on", static_cast<long long>(*rep.symbol_errors_on));
    }
    return kv;
}

void write_run(const ExperimentReport& rep, const std::filesystem::path& dir) {
    staged("report", [&] {
        std::filesystem::create_directories(dir);
        auto open = [&](const char* name) {
            std::ofstream f(dir / name, std::ios::binary);
            if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
            return f;
        };
        open("config.json") << rep.config_text;
        {
            auto f = open("summary.txt");
            summarize(rep).write(f);
        }
        {
            auto f = open("trace.csv");
            rep.trace.write_csv(f);
        }
        {
            auto f = open("psd_off.csv");
            write_psd_csv(f, rep.psd_off);
        }
        {
            auto f = open("psd_on.csv");
            write_psd_csv(f, rep.psd_on);
        }
        open("timing.txt") << "wall_seconds = " << format_double(rep.wall_seconds) << "\n";
    });
}

void write_sweep(const std::vector<SweepPoint>& points, const std::filesystem::path& dir) {
    staged("report", [&] {
        std::filesystem::create_directories(dir);
        std::ofstream csv(dir / "sweep_summary.csv", std::ios::binary);
        if (!csv) throw std::runtime_error("cannot write " + (dir / "sweep_summary.csv").string());
        csv << "value,status,depth_db,evm_on_pct,evm_off_pct,order,converged,error\n";
        auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
        for (std::size_t k = 0; k < points.size(); ++k) {
            const auto& p = points[k];
            std::string value = p.value.is_string() ? p.value.get<std::string>() : p.value.dump();
            std::replace(value.begin(), value.end(), ',', ';');
            if (p.report) {
                std::ostringstream name;
                name << "point_" << std::setw(3) << std::setfill('0') << k;
                write_run(*p.report, dir / name.str());
                const auto& r = *p.report;
                csv << value << ",ok," << (r.sic ? format_double(r.sic->depth_db) : "") << ',' << opt(r.evm_on_pct)
                    << ',' << opt(r.evm_off_pct) << ',' << r.order << ',' << (r.converged ? "true" : "false") << ",\n";
            } else {
                std::string err = p.error;
                std::replace(err.begin(), err.end(), ',', ';');
                std::replace(err.begin(), err.end(), '\n', ' ');
                csv << value << ",failed,,,,,," << err << '\n';
            }
        }
    });
}

}  // namespace sicbench
