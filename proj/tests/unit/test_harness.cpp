#include <doctest.h>

#include "sicbench/config.hpp"
#include "sicbench/pipeline.hpp"
#include "sicbench/scenarios.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace sicbench;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(SICBENCH_SOURCE_DIR) / "configs";

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json base_json() { return {{"scenario", "SI1"}}; }

ExperimentConfig with(json patch) {
    json j = base_json();
    j.merge_patch(patch);
    return parse_config(j);
}

void check_rejected(json patch, const std::string& path) {
    json j = base_json();
    j.merge_patch(patch);
    try {
        parse_config(j);
        FAIL("accepted a config that should fail at " << path);
    } catch (const ConfigError& e) {
        CHECK(e.path() == path);
    }
}

// Small but complete experiment: block of 4000 samples, no sweep.
ExperimentConfig small(json patch = json::object()) {
    json j = base_json();
    j["sampling"] = {{"block_samples", 4000}};
    j["metrics"] = {{"welch_segment", 1024}};
    j["ls"] = {{"fixed_order", 320}};
    j.merge_patch(patch);
    return parse_config(j);
}

}  // namespace

TEST_CASE("config round trip: parse(serialize(cfg)) == cfg") {
    const ExperimentConfig defaults = parse_config(base_json());
    CHECK(parse_config(serialize_config(defaults)) == defaults);

    for (const auto& entry : fs::recursive_directory_iterator(kConfigs)) {
        if (entry.path().extension() != ".json" || entry.path().parent_path().filename() == "scenarios") continue;
        CAPTURE(entry.path().string());
        const auto cfg = parse_config_text(slurp(entry.path()));
        const auto again = parse_config(serialize_config(cfg));
        CHECK(again == cfg);
        CHECK(serialize_config(again) == serialize_config(cfg));
    }

    // Every optional set, non-default values everywhere.
    const auto odd = with({{"scenario", {{"name", "custom"},
                                         {"antennas", {{{"delays_ns", {0.0, 1.25}}, {"gains_db", {0.0, -7.5}},
                                                        {"phases_rad", {0.0, 0.3}}}}},
                                         {"noise_snr_db", 12.5}}},
                           {"soi", {{"enabled", true}, {"power_db", -4.25}, {"baud_gbaud", 0.25}}},
                           {"frontend", {{"if_cutoff_ghz", 3.3}, {"lo_phase_rad", 0.1}}},
                           {"ls", {{"fixed_order", 77}, {"order_reading", "lagged"}, {"normalize_e_delta", false}}},
                           {"metrics", {{"window", "rect"}, {"evm_mode", "data_aided"}}},
                           {"sweep", {{"param", "si.baud_gbaud"}, {"values", {0.5, 1}}, {"workers", 2}}},
                           {"seed", 987654321987ULL}});
    CHECK(parse_config(serialize_config(odd)) == odd);
}

TEST_CASE("schema violations name the offending key") {
    check_rejected({{"ls", {{"alfa", 3}}}}, "ls.alfa");
    check_rejected({{"colour", 1}}, "colour");
    check_rejected({{"ls", {{"l_init", 1.5}}}}, "ls.l_init");
    check_rejected({{"cancel", "magic"}}, "cancel");
    check_rejected({{"scenario", "SI9"}}, "scenario");
    check_rejected({{"frontend", {{"lo_ghz", 10.5}}}}, "si");
    check_rejected({{"soi", {{"enabled", true}}}}, "soi.power_db");
    check_rejected({{"soi", {{"enabled", true}, {"power_db", 0}, {"carrier_ghz", 11}}}}, "soi.carrier_ghz");
    check_rejected({{"si", {{"baud_gbaud", 3.0}}}}, "si.baud_gbaud");  // 10/3 samples per symbol
    check_rejected({{"ls", {{"fixed_order", 600}}}}, "ls.fixed_order");
    check_rejected({{"ls", {{"l_init", 600}}}}, "ls");
    check_rejected({{"frontend", {{"if_cutoff_ghz", 2.2}}}}, "frontend");
    check_rejected({{"sweep", {{"param", "si.baud_gbaud"}, {"values", json::array()}}}}, "sweep.values");
    check_rejected({{"sweep", {{"param", "si.colour"}, {"values", {1}}}}}, "sweep.param");
    check_rejected({{"sweep", {{"param", "ls"}, {"values", {1}}}}}, "sweep.param");
    check_rejected({{"scenario", {{"name", "x"}, {"antennas", {{{"delays_ns", {0, 1}}, {"gains_db", {0}}}}}}}},
                   "scenario");
    CHECK_THROWS_AS(parse_config_text("{\"scenario\": "), ConfigError);
}

TEST_CASE("with_parameter edits one value and revalidates") {
    const auto cfg = with(json::object());
    const auto b = with_parameter(cfg, "si.baud_gbaud", 2.0);
    CHECK(b.si.baud_gbaud == 2.0);
    auto expect = cfg;
    expect.si.baud_gbaud = 2.0;
    CHECK(b == expect);
    CHECK(with_parameter(cfg, "ls.fixed_order", 200).ls.fixed_order == 200);
    CHECK(with_parameter(cfg, "scenario.noise_snr_db", 7.0).scenario.noise_snr_db == 7.0);
    CHECK_THROWS_AS(with_parameter(cfg, "si.nope", 1), ConfigError);
    CHECK_THROWS_AS(with_parameter(cfg, "ls.fixed_order", 9999), ConfigError);
}

TEST_CASE("SI1 library entry holds the measured vectors") {
    const auto& s = find_scenario("SI1");
    REQUIRE(s.antennas.size() == 2);
    const std::vector<double> d1{0, 10e-9, 20e-9, 30e-9}, g1{0, -3.09, -10.45, -20};
    const std::vector<double> d2{0, 16e-9, 24e-9, 28e-9}, g2{0, -3.74, -9.12, -16.48};
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(s.antennas[0][k].delay == doctest::Approx(d1[k]).epsilon(1e-12));
        CHECK(s.antennas[0][k].gain_db == g1[k]);
        CHECK(s.antennas[1][k].delay == doctest::Approx(d2[k]).epsilon(1e-12));
        CHECK(s.antennas[1][k].gain_db == g2[k]);
        CHECK(s.antennas[0][k].phase == 0.0);
    }
    CHECK_THROWS_AS(find_scenario("si1"), std::out_of_range);
}

TEST_CASE("generated scenarios keep the quoted maximum delays and SI1's structure") {
    const std::vector<std::pair<std::string, double>> max_ns{{"SI2", 28}, {"SI3", 40}, {"SI4", 21}};
    for (const auto& [name, d] : max_ns) {
        CAPTURE(name);
        const auto& s = find_scenario(name);
        REQUIRE(s.antennas.size() == 2);
        CHECK(make_channel(scenario_spec(name)).max_delay() == doctest::Approx(d * 1e-9));
        CHECK(s.antennas[0].back().delay == doctest::Approx(d * 1e-9));
        const double c2 = s.antennas[1].back().delay * 1e9;
        CHECK(c2 >= d - 3 - 1e-9);
        CHECK(c2 <= d - 1 + 1e-9);
        for (const auto& ant : s.antennas) {
            REQUIRE(ant.size() == 4);
            CHECK(ant[0].delay == 0.0);
            for (std::size_t k = 1; k < 4; ++k) {
                CHECK(ant[k].delay > ant[k - 1].delay);
                const double ns = ant[k].delay * 1e9;
                CHECK(ns == doctest::Approx(std::round(ns)).epsilon(1e-9));
            }
        }
        // Gains reuse SI1's profiles.
        CHECK(s.antennas[0][2].gain_db == -10.45);
        CHECK(s.antennas[1][3].gain_db == -16.48);
    }
    // Seeded and reproducible; a different seed gives a different draw.
    const auto a = generate_scenario("X", 40, kScenarioSeed + 3);
    CHECK(a.antennas == find_scenario("SI3").antennas);
    std::set<std::vector<double>> distinct;
    for (std::uint64_t s = 0; s < 20; ++s) {
        std::vector<double> delays;
        for (const auto& ant : generate_scenario("X", 40, s).antennas) {
            for (const auto& t : ant) delays.push_back(t.delay);
        }
        distinct.insert(delays);
    }
    CHECK(distinct.size() > 1);
    CHECK_THROWS(generate_scenario("X", 5, 1));
}

TEST_CASE("fixture files match the scenario library") {
    for (const std::string name : {"SI1", "SI2", "SI3", "SI4"}) {
        std::string lower = name;
        for (auto& c : lower) c = static_cast<char>(std::tolower(c));
        const auto text = slurp(kConfigs / "scenarios" / (lower + ".json"));
        const auto cfg = parse_config(json{{"scenario", json::parse(text)}});
        CHECK(cfg.scenario == scenario_spec(name));
    }
}

TEST_CASE("record layout is symbol aligned and covers the FIR history") {
    const auto cfg = with({{"soi", {{"enabled", true}, {"power_db", 0}, {"baud_gbaud", 0.4}}}});
    const auto r = record_layout(cfg);
    CHECK(r.history >= static_cast<std::size_t>(cfg.ls.l_max + cfg.sampling.edge_pad_samples));
    CHECK(r.history % 10 == 0);  // SI symbols: 10 samples
    CHECK(r.history % 25 == 0);  // SOI symbols: 25 samples
    CHECK(r.block == 40000);
}

TEST_CASE("fixed order 320 on SI1 beats the measured 18.96 dB; genie beats 60 dB") {
    const auto rep = run_single(with({{"ls", {{"fixed_order", 320}}}}));
    REQUIRE(rep.sic);
    CHECK(rep.sic->depth_db > 18.96);
    CHECK(rep.order == 320);
    CHECK_FALSE(rep.adaptive);

    const auto genie = run_single(with({{"cancel", "genie"}}));
    REQUIRE(genie.sic);
    CHECK(genie.sic->depth_db > 60.0);

    // Optical cancellation matches the digital-subtraction upper bound here.
    const auto digital = run_single(with({{"ls", {{"fixed_order", 320}}}, {"cancel", "digital"}}));
    CHECK(digital.sic->depth_db >= rep.sic->depth_db - 1e-9);
}

TEST_CASE("truncated orders leave residual SI") {
    const auto low = run_single(small({{"ls", {{"fixed_order", 120}}}}));
    const auto full = run_single(small());
    CHECK(low.sic->depth_db < full.sic->depth_db);
    CHECK(low.sic->depth_db < 20.0);
}

TEST_CASE("null channel: depth skipped, SOI decodes cleanly") {
    const auto cfg = parse_config_text(slurp(kConfigs / "null_channel.json"));
    const auto rep = run_single(cfg);
    CHECK_FALSE(rep.sic.has_value());
    REQUIRE(rep.evm_on_pct);
    CHECK(*rep.evm_on_pct < 1.0);
    CHECK(*rep.symbol_errors_on == 0);
    CHECK(rep.soi_symbols == 2000);
    std::ostringstream os;
    summarize(rep).write(os);
    CHECK(os.str().find("sic_depth_db = skipped") != std::string::npos);
}

TEST_CASE("same config and seed give byte-identical outputs") {
    const auto cfg = small({{"soi", {{"enabled", true}, {"power_db", 0}}},
                            {"scenario", {{"name", "SI1n"},
                                          {"antennas", serialize_config(parse_config(base_json()))["scenario"]["antennas"]},
                                          {"noise_snr_db", 10}}}});
    const std::string text = serialize_config(cfg).dump(1) + "\n";
    const auto root = fs::temp_directory_path() / "sicbench_determinism";
    fs::remove_all(root);
    write_run(run_single(cfg, text), root / "a");
    write_run(run_single(cfg, text), root / "b");
    for (const char* f : {"config.json", "summary.txt", "trace.csv", "psd_off.csv", "psd_on.csv"}) {
        CAPTURE(f);
        CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
    }
    CHECK(slurp(root / "a" / "config.json") == text);

    auto other = cfg;
    other.seed = cfg.seed + 1;
    write_run(run_single(other, text), root / "c");
    CHECK(slurp(root / "a" / "psd_off.csv") != slurp(root / "c" / "psd_off.csv"));
    fs::remove_all(root);
}

TEST_CASE("adaptive run records a trace that ends at the reported order") {
    const auto rep = run_single(small({{"ls", {{"fixed_order", nullptr}}}}));
    CHECK(rep.adaptive);
    REQUIRE_FALSE(rep.trace.records.empty());
    CHECK(rep.trace.records.front().order == 150);
    CHECK(rep.order == rep.trace.records.back().order);
    CHECK(rep.converged == rep.trace.converged);
}

TEST_CASE("order sweep sharing one factorization matches independent runs") {
    auto cfg = small();
    cfg.sweep = SweepSpec{"ls.fixed_order", {json(120), json(320), json(9999)}, 2};
    const auto points = run_sweep(cfg);
    REQUIRE(points.size() == 3);
    for (std::size_t k = 0; k < 2; ++k) {
        REQUIRE(points[k].report);
        auto single_cfg = cfg;
        single_cfg.sweep.reset();
        single_cfg.ls.fixed_order = points[k].value.get<int>();
        const auto single = run_single(single_cfg);
        CHECK(points[k].report->sic->depth_db == doctest::Approx(single.sic->depth_db).epsilon(1e-6));
        CHECK(points[k].report->order == single.order);
    }
    // The invalid point is recorded; the others still ran.
    CHECK_FALSE(points[2].report);
    CHECK(points[2].error.rfind("config:", 0) == 0);

    const auto dir = fs::temp_directory_path() / "sicbench_sweep";
    fs::remove_all(dir);
    write_sweep(points, dir);
    std::istringstream csv(slurp(dir / "sweep_summary.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "value,status,depth_db,evm_on_pct,evm_off_pct,order,converged,error");
    std::getline(csv, line);
    CHECK(line.rfind("120,ok,", 0) == 0);
    std::getline(csv, line);
    std::getline(csv, line);
    CHECK(line.rfind("9999,failed,", 0) == 0);
    CHECK(fs::exists(dir / "point_000" / "summary.txt"));
    CHECK_FALSE(fs::exists(dir / "point_002"));
    fs::remove_all(dir);
}

TEST_CASE("generic sweeps run each point through the full pipeline") {
    auto cfg = small({{"ls", {{"fixed_order", 320}}}});
    cfg.sweep = SweepSpec{"cancel", {json("digital"), json("genie")}, 1};
    const auto points = run_sweep(cfg);
    REQUIRE(points[0].report);
    REQUIRE(points[1].report);
    CHECK(points[1].report->sic->depth_db > 60.0);
}

TEST_CASE("module failures surface as stage-named errors") {
    auto cfg = small();
    cfg.ls.fixed_order = 0;  // bypasses parse-time validation
    try {
        run_single(cfg);
        FAIL("expected a StageError");
    } catch (const StageError& e) {
        CHECK(e.stage() == "config");
    }

    // A silent antenna makes its regressor columns zero: the estimator must name itself.
    auto dead = small({{"scenario", {{"name", "dead"},
                                     {"antennas", {{{"delays_ns", {0.0}}, {"gains_db", {0.0}}},
                                                   {{"delays_ns", {0.0}}, {"gains_db", {0.0}}}}}}}});
    dead.si.baud_gbaud = 1.0;
    const auto cap = make_capture(dead);
    auto broken = cap;
    broken.x_if[1] = SampledSignal::zeros(cap.x_if[1].size(), cap.x_if[1].sample_rate());
    try {
        estimate_channel(dead, broken);
        FAIL("expected a StageError");
    } catch (const StageError& e) {
        CHECK(e.stage() == "estimator");
        CHECK(std::string(e.what()).find("antenna") != std::string::npos);
    }
}
