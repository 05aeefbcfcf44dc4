#include "sicbench/config.hpp"

#include "sicbench/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace sicbench {

using nlohmann::json;

ConfigError::ConfigError(const std::string& path, const std::string& what)
    : std::runtime_error(path.empty() ? what : path + ": " + what), path_(path) {}

namespace {

// Reads the members of one JSON object and rejects any key nobody asked for.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) throw ConfigError(key_path(key), "expected a number");
            out = v->get<double>();
        }
    }

    void integer(const std::string& key, int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) throw ConfigError(key_path(key), "expected an integer");
            out = v->get<int>();
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(key_path(key), "expected true or false");
            out = v->get<bool>();
        }
    }

    void string(const std::string& key, std::string& out, std::initializer_list<const char*> allowed = {}) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(key_path(key), "expected a string");
            out = v->get<std::string>();
        }
        if (allowed.size() != 0 &&
            std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return out == a; })) {
            std::string list;
            for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
            throw ConfigError(key_path(key), "'" + out + "' is not one of " + list);
        }
    }

    void optional_number(const std::string& key, std::optional<double>& out) {
        if (const json* v = find(key)) {
            if (v->is_null()) {
                out.reset();
            } else if (v->is_number()) {
                out = v->get<double>();
            } else {
                throw ConfigError(key_path(key), "expected a number or null");
            }
        }
    }

    void optional_integer(const std::string& key, std::optional<int>& out) {
        if (const json* v = find(key)) {
            if (v->is_null()) {
                out.reset();
            } else if (v->is_number_integer()) {
                out = v->get<int>();
            } else {
                throw ConfigError(key_path(key), "expected an integer or null");
            }
        }
    }

    void numbers(const std::string& key, std::vector<double>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(key_path(key), "expected an array of numbers");
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_number()) throw ConfigError(key_path(key), "expected an array of numbers");
                out.push_back(e.get<double>());
            }
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

ScenarioSpec parse_scenario(const json& j) {
    if (j.is_string()) {
        try {
            return scenario_spec(j.get<std::string>());
        } catch (const std::out_of_range& e) {
            throw ConfigError("scenario", e.what());
        }
    }
    ScenarioSpec s;
    s.antennas.clear();
    Fields f(j, "scenario");
    f.string("name", s.name);
    if (const json* ants = f.find("antennas")) {
        if (!ants->is_array()) throw ConfigError("scenario.antennas", "expected an array");
        for (std::size_t k = 0; k < ants->size(); ++k) {
            AntennaSpec a;
            Fields fa((*ants)[k], "scenario.antennas[" + std::to_string(k) + "]");
            fa.numbers("delays_ns", a.delays_ns);
            fa.numbers("gains_db", a.gains_db);
            fa.numbers("phases_rad", a.phases_rad);
            fa.finish();
            s.antennas.push_back(std::move(a));
        }
    } else {
        throw ConfigError("scenario.antennas", "missing (use [] for a null channel)");
    }
    f.optional_number("noise_snr_db", s.noise_snr_db);
    f.finish();
    return s;
}

PulseKind pulse_kind(const std::string& name) {
    return name == "rrc" ? PulseKind::kRootRaisedCosine : PulseKind::kRectangular;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

std::string pointer_for(const std::string& param) {
    if (param.empty()) throw ConfigError("sweep.param", "empty parameter name");
    std::string ptr = "/";
    for (char c : param) ptr += (c == '.') ? '/' : c;
    return ptr;
}

}  // namespace

ScenarioSpec scenario_spec(const std::string& name) {
    const auto& lib = find_scenario(name);
    ScenarioSpec s;
    s.name = lib.name;
    for (const auto& taps : lib.antennas) {
        AntennaSpec a;
        for (const auto& t : taps) {
            a.delays_ns.push_back(std::round(t.delay * 1e15) / 1e6);  // ns, exact for the 1 fs grid
            a.gains_db.push_back(t.gain_db);
            a.phases_rad.push_back(t.phase);
        }
        s.antennas.push_back(std::move(a));
    }
    return s;
}

MultipathChannel make_channel(const ScenarioSpec& s) {
    std::vector<std::vector<Tap>> taps;
    for (const auto& a : s.antennas) {
        std::vector<Tap> t;
        for (std::size_t k = 0; k < a.delays_ns.size(); ++k) {
            t.push_back({a.delays_ns[k] * 1e-9, a.gains_db[k], a.phases_rad.empty() ? 0.0 : a.phases_rad[k]});
        }
        taps.push_back(std::move(t));
    }
    return MultipathChannel(std::move(taps), s.noise_snr_db);
}

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    Fields top(j, "");

    if (const json* s = top.find("scenario")) {
        cfg.scenario = parse_scenario(*s);
    } else {
        throw ConfigError("scenario", "missing");
    }
    if (const json* s = top.find("si")) {
        Fields f(*s, "si");
        f.number("baud_gbaud", cfg.si.baud_gbaud);
        f.number("carrier_ghz", cfg.si.carrier_ghz);
        f.string("pulse", cfg.si.pulse, {"rect", "rrc"});
        f.number("rolloff", cfg.si.rolloff);
        f.finish();
    }
    if (const json* s = top.find("soi")) {
        Fields f(*s, "soi");
        f.boolean("enabled", cfg.soi.enabled);
        f.optional_number("baud_gbaud", cfg.soi.baud_gbaud);
        f.number("carrier_ghz", cfg.soi.carrier_ghz);
        f.optional_number("power_db", cfg.soi.power_db);
        f.string("pulse", cfg.soi.pulse, {"rect", "rrc"});
        f.number("rolloff", cfg.soi.rolloff);
        f.finish();
    }
    if (const json* s = top.find("frontend")) {
        Fields f(*s, "frontend");
        f.number("lo_ghz", cfg.frontend.lo_ghz);
        f.number("lo_phase_rad", cfg.frontend.lo_phase_rad);
        f.number("conversion_gain", cfg.frontend.conversion_gain);
        f.optional_number("if_cutoff_ghz", cfg.frontend.if_cutoff_ghz);
        f.integer("lowpass_taps", cfg.frontend.lowpass_taps);
        f.string("nonlinearity", cfg.frontend.nonlinearity, {"linear", "sinusoidal"});
        f.number("modulation_index_rad", cfg.frontend.modulation_index_rad);
        f.finish();
    }
    if (const json* s = top.find("ref_path")) {
        Fields f(*s, "ref_path");
        f.number("attenuation_db", cfg.ref_path.attenuation_db);
        f.number("delay_ns", cfg.ref_path.delay_ns);
        f.finish();
    }
    if (const json* s = top.find("sampling")) {
        Fields f(*s, "sampling");
        f.number("capture_gsps", cfg.sampling.capture_gsps);
        f.integer("rf_oversampling", cfg.sampling.rf_oversampling);
        f.integer("block_samples", cfg.sampling.block_samples);
        f.integer("edge_pad_samples", cfg.sampling.edge_pad_samples);
        f.finish();
    }
    if (const json* s = top.find("ls")) {
        Fields f(*s, "ls");
        auto& l = cfg.ls;
        f.integer("alpha", l.alpha);
        f.integer("delta", l.delta);
        f.integer("big_delta", l.big_delta);
        f.number("gamma_min", l.gamma_min);
        f.number("gamma_max", l.gamma_max);
        f.integer("max_iterations", l.max_iterations);
        f.integer("l_init", l.l_init);
        f.integer("l_min", l.l_min);
        f.integer("l_max", l.l_max);
        f.integer("patience", l.patience);
        f.boolean("normalize_e_delta", l.normalize_e_delta);
        f.string("order_reading", l.order_reading, {"fresh", "lagged"});
        f.optional_integer("fixed_order", l.fixed_order);
        f.boolean("live", l.live);
        f.finish();
    }
    top.string("cancel", cfg.cancel, {"optical", "digital", "genie"});
    if (const json* s = top.find("metrics")) {
        Fields f(*s, "metrics");
        auto& m = cfg.metrics;
        f.string("band", m.band, {"signal", "nyquist"});
        f.integer("welch_segment", m.welch_segment);
        f.number("welch_overlap", m.welch_overlap);
        f.string("window", m.window, {"hann", "rect"});
        f.string("evm_mode", m.evm_mode, {"decision", "data_aided"});
        f.number("eye_fraction", m.eye_fraction);
        f.finish();
    }
    if (const json* s = top.find("sweep"); s && !s->is_null()) {
        Fields f(*s, "sweep");
        SweepSpec sw;
        f.string("param", sw.param);
        if (const json* v = f.find("values")) {
            if (!v->is_array()) throw ConfigError("sweep.values", "expected an array");
            sw.values.assign(v->begin(), v->end());
        }
        f.integer("workers", sw.workers);
        f.finish();
        cfg.sweep = std::move(sw);
    }
    if (const json* s = top.find("seed")) {
        if (!s->is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
        cfg.seed = s->get<std::uint64_t>();
    }
    top.string("output_dir", cfg.output_dir);
    top.finish();

    validate_config(cfg);
    return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

json serialize_config(const ExperimentConfig& cfg) {
    json ants = json::array();
    for (const auto& a : cfg.scenario.antennas) {
        ants.push_back({{"delays_ns", a.delays_ns}, {"gains_db", a.gains_db}, {"phases_rad", a.phases_rad}});
    }
    const auto& l = cfg.ls;
    const auto& m = cfg.metrics;
    json j = {
        {"scenario", {{"name", cfg.scenario.name}, {"antennas", ants}, {"noise_snr_db", opt(cfg.scenario.noise_snr_db)}}},
        {"si",
         {{"baud_gbaud", cfg.si.baud_gbaud},
          {"carrier_ghz", cfg.si.carrier_ghz},
          {"pulse", cfg.si.pulse},
          {"rolloff", cfg.si.rolloff}}},
        {"soi",
         {{"enabled", cfg.soi.enabled},
          {"baud_gbaud", opt(cfg.soi.baud_gbaud)},
          {"carrier_ghz", cfg.soi.carrier_ghz},
          {"power_db", opt(cfg.soi.power_db)},
          {"pulse", cfg.soi.pulse},
          {"rolloff", cfg.soi.rolloff}}},
        {"frontend",
         {{"lo_ghz", cfg.frontend.lo_ghz},
          {"lo_phase_rad", cfg.frontend.lo_phase_rad},
          {"conversion_gain", cfg.frontend.conversion_gain},
          {"if_cutoff_ghz", opt(cfg.frontend.if_cutoff_ghz)},
          {"lowpass_taps", cfg.frontend.lowpass_taps},
          {"nonlinearity", cfg.frontend.nonlinearity},
          {"modulation_index_rad", cfg.frontend.modulation_index_rad}}},
        {"ref_path", {{"attenuation_db", cfg.ref_path.attenuation_db}, {"delay_ns", cfg.ref_path.delay_ns}}},
        {"sampling",
         {{"capture_gsps", cfg.sampling.capture_gsps},
          {"rf_oversampling", cfg.sampling.rf_oversampling},
          {"block_samples", cfg.sampling.block_samples},
          {"edge_pad_samples", cfg.sampling.edge_pad_samples}}},
        {"ls",
         {{"alpha", l.alpha},
          {"delta", l.delta},
          {"big_delta", l.big_delta},
          {"gamma_min", l.gamma_min},
          {"gamma_max", l.gamma_max},
          {"max_iterations", l.max_iterations},
          {"l_init", l.l_init},
          {"l_min", l.l_min},
          {"l_max", l.l_max},
          {"patience", l.patience},
          {"normalize_e_delta", l.normalize_e_delta},
          {"order_reading", l.order_reading},
          {"fixed_order", opt(l.fixed_order)},
          {"live", l.live}}},
        {"cancel", cfg.cancel},
        {"metrics",
         {{"band", m.band},
          {"welch_segment", m.welch_segment},
          {"welch_overlap", m.welch_overlap},
          {"window", m.window},
          {"evm_mode", m.evm_mode},
          {"eye_fraction", m.eye_fraction}}},
        {"seed", cfg.seed},
        {"output_dir", cfg.output_dir},
    };
    if (cfg.sweep) {
        j["sweep"] = {{"param", cfg.sweep->param}, {"values", cfg.sweep->values}, {"workers", cfg.sweep->workers}};
    } else {
        j["sweep"] = nullptr;
    }
    return j;
}

double rf_rate(const ExperimentConfig& cfg) { return capture_rate(cfg) * cfg.sampling.rf_oversampling; }
double capture_rate(const ExperimentConfig& cfg) { return cfg.sampling.capture_gsps * 1e9; }
double si_baud(const ExperimentConfig& cfg) { return cfg.si.baud_gbaud * 1e9; }
double soi_baud(const ExperimentConfig& cfg) {
    return cfg.soi.baud_gbaud ? *cfg.soi.baud_gbaud * 1e9 : si_baud(cfg) / 2.0;
}
double if_freq(const ExperimentConfig& cfg) { return (cfg.si.carrier_ghz - cfg.frontend.lo_ghz) * 1e9; }

PulseShape si_pulse(const ExperimentConfig& cfg) {
    return {pulse_kind(cfg.si.pulse), cfg.si.rolloff, 24};
}
PulseShape soi_pulse(const ExperimentConfig& cfg) {
    return {pulse_kind(cfg.soi.pulse), cfg.soi.rolloff, 24};
}

double occupied_bandwidth(double baud, const PulseShape& p) {
    return p.kind == PulseKind::kRootRaisedCosine ? baud * (1.0 + p.rolloff) : baud;
}

FrontendParams frontend_params(const ExperimentConfig& cfg) {
    FrontendParams fp;
    fp.lo_freq = cfg.frontend.lo_ghz * 1e9;
    fp.lo_phase = cfg.frontend.lo_phase_rad;
    fp.conversion_gain = cfg.frontend.conversion_gain;
    double widest = occupied_bandwidth(si_baud(cfg), si_pulse(cfg));
    if (cfg.soi.enabled) widest = std::max(widest, occupied_bandwidth(soi_baud(cfg), soi_pulse(cfg)));
    fp.if_lowpass_cutoff = cfg.frontend.if_cutoff_ghz ? *cfg.frontend.if_cutoff_ghz * 1e9
                                                      : if_freq(cfg) + widest / 2.0 + kAutoCutoffMargin;
    fp.lowpass_taps = static_cast<std::size_t>(std::max(cfg.frontend.lowpass_taps, 0));
    fp.nonlinearity = cfg.frontend.nonlinearity == "sinusoidal" ? Nonlinearity::kSinusoidal : Nonlinearity::kLinear;
    fp.modulation_index = cfg.frontend.modulation_index_rad;
    return fp;
}

RefPathParams ref_path_params(const ExperimentConfig& cfg) {
    return {cfg.ref_path.attenuation_db, cfg.ref_path.delay_ns * 1e-9};
}

LsConfig ls_config(const ExperimentConfig& cfg) {
    LsConfig c;
    const auto& l = cfg.ls;
    c.alpha = l.alpha;
    c.delta = l.delta;
    c.big_delta = l.big_delta;
    c.gamma_min = l.gamma_min;
    c.gamma_max = l.gamma_max;
    c.max_iterations = l.max_iterations;
    c.l_init = l.l_init;
    c.l_min = l.l_min;
    c.l_max = l.l_max;
    c.block_size = static_cast<std::size_t>(std::max(cfg.sampling.block_samples, 0));
    c.num_antennas = std::max<std::size_t>(cfg.scenario.antennas.size(), 1);
    c.patience = l.patience;
    c.normalize_e_delta = l.normalize_e_delta;
    c.reading = l.order_reading == "lagged" ? OrderReading::kLagged : OrderReading::kFresh;
    return c;
}

WelchOptions welch_options(const ExperimentConfig& cfg) {
    return {static_cast<std::size_t>(std::max(cfg.metrics.welch_segment, 0)), cfg.metrics.welch_overlap,
            cfg.metrics.window == "rect" ? Window::kRectangular : Window::kHann};
}

void validate_config(const ExperimentConfig& cfg) {
    // Module validators throw std::invalid_argument; rewrap with the config section.
    auto guard = [](const char* section, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(section, e.what());
        }
    };

    const auto& sp = cfg.sampling;
    if (!(sp.capture_gsps > 0.0)) throw ConfigError("sampling.capture_gsps", "must be positive");
    if (sp.rf_oversampling < 1) throw ConfigError("sampling.rf_oversampling", "must be at least 1");
    if (sp.block_samples < 1) throw ConfigError("sampling.block_samples", "must be positive");
    if (sp.edge_pad_samples < 0) throw ConfigError("sampling.edge_pad_samples", "must be non-negative");

    guard("scenario", [&] {
        for (const auto& a : cfg.scenario.antennas) {
            if (a.gains_db.size() != a.delays_ns.size() ||
                (!a.phases_rad.empty() && a.phases_rad.size() != a.delays_ns.size())) {
                throw std::invalid_argument("delays_ns, gains_db and phases_rad must have equal lengths");
            }
        }
        if (!cfg.scenario.antennas.empty()) make_channel(cfg.scenario);
        if (cfg.scenario.noise_snr_db && !std::isfinite(*cfg.scenario.noise_snr_db)) {
            throw std::invalid_argument("noise_snr_db must be finite (null disables noise)");
        }
    });

    const double fc = capture_rate(cfg), fs = rf_rate(cfg);
    auto check_waveform = [&](const char* section, double carrier_ghz, double baud, const PulseShape& pulse) {
        if (!(baud > 0.0)) throw ConfigError(std::string(section) + ".baud_gbaud", "must be positive");
        const double sps = fc / baud;
        if (std::abs(sps - std::round(sps)) > 1e-9 * sps) {
            throw ConfigError(std::string(section) + ".baud_gbaud",
                              "capture rate must be an integer number of samples per symbol");
        }
        if (pulse.kind == PulseKind::kRootRaisedCosine && !(pulse.rolloff > 0.0 && pulse.rolloff <= 1.0)) {
            throw ConfigError(std::string(section) + ".rolloff", "must lie in (0, 1]");
        }
        guard(section, [&] {
            const CarrierPlan plan{carrier_ghz * 1e9, cfg.frontend.lo_ghz * 1e9};
            if (!(plan.rf_carrier > plan.lo_freq)) throw std::invalid_argument("LO must sit below the carrier");
            plan.validate(fc, occupied_bandwidth(baud, pulse));
            if (!(fs >= 2.0 * (plan.rf_carrier + occupied_bandwidth(baud, pulse)))) {
                throw std::invalid_argument("RF simulation rate too low for the carrier");
            }
        });
    };
    check_waveform("si", cfg.si.carrier_ghz, si_baud(cfg), si_pulse(cfg));
    if (cfg.soi.enabled) {
        if (!cfg.soi.power_db) throw ConfigError("soi.power_db", "required when the SOI is enabled");
        if (!std::isfinite(*cfg.soi.power_db)) throw ConfigError("soi.power_db", "must be finite");
        if (cfg.soi.carrier_ghz != cfg.si.carrier_ghz) {
            throw ConfigError("soi.carrier_ghz", "the SOI shares the SI carrier (in-band full duplex)");
        }
        check_waveform("soi", cfg.soi.carrier_ghz, soi_baud(cfg), soi_pulse(cfg));
    }

    guard("frontend", [&] {
        const auto fp = frontend_params(cfg);
        double bw = occupied_bandwidth(si_baud(cfg), si_pulse(cfg));
        if (cfg.soi.enabled) bw = std::max(bw, occupied_bandwidth(soi_baud(cfg), soi_pulse(cfg)));
        fp.validate(if_freq(cfg), bw, fs);
        if (!(fp.if_lowpass_cutoff < fc / 2.0)) {
            throw std::invalid_argument("IF lowpass cutoff must be below the capture Nyquist rate");
        }
        if (!(cfg.frontend.conversion_gain > 0.0)) throw std::invalid_argument("conversion gain must be positive");
    });
    if (!(cfg.ref_path.attenuation_db >= 0.0) || !std::isfinite(cfg.ref_path.attenuation_db)) {
        throw ConfigError("ref_path.attenuation_db", "must be finite and non-negative");
    }
    if (!(cfg.ref_path.delay_ns >= 0.0) || !std::isfinite(cfg.ref_path.delay_ns)) {
        throw ConfigError("ref_path.delay_ns", "must be finite and non-negative");
    }

    if (!cfg.scenario.antennas.empty()) guard("ls", [&] { ls_config(cfg).validate(); });
    if (cfg.ls.fixed_order && !(*cfg.ls.fixed_order >= 1 && *cfg.ls.fixed_order <= cfg.ls.l_max)) {
        throw ConfigError("ls.fixed_order", "must lie in [1, l_max]");
    }

    const auto& m = cfg.metrics;
    if (m.welch_segment < 16 || m.welch_segment > sp.block_samples) {
        throw ConfigError("metrics.welch_segment", "must lie in [16, block_samples]");
    }
    if (!(m.welch_overlap >= 0.0 && m.welch_overlap < 1.0)) {
        throw ConfigError("metrics.welch_overlap", "must lie in [0, 1)");
    }
    if (!(m.eye_fraction > 0.0 && m.eye_fraction <= 1.0)) {
        throw ConfigError("metrics.eye_fraction", "must lie in (0, 1]");
    }

    if (cfg.sweep) {
        const auto& sw = *cfg.sweep;
        if (sw.values.empty()) throw ConfigError("sweep.values", "empty sweep list");
        if (sw.workers < 1) throw ConfigError("sweep.workers", "must be at least 1");
        const json doc = serialize_config(cfg);
        const json::json_pointer ptr(pointer_for(sw.param));
        if (sw.param.rfind("sweep", 0) == 0 || !doc.contains(ptr) || doc.at(ptr).is_object()) {
            throw ConfigError("sweep.param", "'" + sw.param + "' is not a configurable parameter");
        }
    }
}

ExperimentConfig with_parameter(const ExperimentConfig& cfg, const std::string& param, const json& value) {
    json doc = serialize_config(cfg);
    doc["sweep"] = nullptr;
    const json::json_pointer ptr(pointer_for(param));
    if (!doc.contains(ptr) || doc.at(ptr).is_object()) {
        throw ConfigError("sweep.param", "'" + param + "' is not a configurable parameter");
    }
    doc[ptr] = value;
    return parse_config(doc);
}

}  // namespace sicbench
