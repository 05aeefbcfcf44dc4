#include "sicbench/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sicbench {

namespace {

const std::vector<double> kGains1{0.0, -3.09, -10.45, -20.0};
const std::vector<double> kGains2{0.0, -3.74, -9.12, -16.48};

std::vector<Tap> make_taps(const std::vector<int>& delays_ns, const std::vector<double>& gains_db) {
    std::vector<Tap> taps;
    for (std::size_t k = 0; k < delays_ns.size(); ++k) taps.push_back({delays_ns[k] * 1e-9, gains_db[k], 0.0});
    return taps;
}

}  // namespace

NamedScenario generate_scenario(const std::string& name, int max_delay_ns, std::uint64_t seed) {
    if (max_delay_ns < 9) throw std::invalid_argument("max delay too short for four distinct taps per antenna");
    std::mt19937_64 rng(seed);
    auto draw = [&rng](int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return lo + static_cast<int>(rng() % span);
    };
    // SI1's intermediate delay at `frac` of the last delay, jittered by up to 1 ns.
    auto near = [&](double frac, int last) {
        const int d = static_cast<int>(std::lround(frac * last)) + draw(-1, 1);
        return std::clamp(d, 1, last - 1);
    };
    const int d = max_delay_ns;
    const int c2 = d - draw(1, 3);
    int a1 = near(10.0 / 30.0, d), b1 = near(20.0 / 30.0, d);
    int a2 = near(16.0 / 28.0, c2), b2 = near(24.0 / 28.0, c2);
    if (b1 <= a1) b1 = a1 + 1;
    if (b2 <= a2) b2 = a2 + 1;
    return {name, {make_taps({0, a1, b1, d}, kGains1), make_taps({0, a2, b2, c2}, kGains2)}};
}

const std::vector<NamedScenario>& scenario_library() {
    static const std::vector<NamedScenario> lib = [] {
        std::vector<NamedScenario> v;
        v.push_back({"SI1", {make_taps({0, 10, 20, 30}, kGains1), make_taps({0, 16, 24, 28}, kGains2)}});
        v.push_back(generate_scenario("SI2", 28, kScenarioSeed + 2));
        v.push_back(generate_scenario("SI3", 40, kScenarioSeed + 3));
        v.push_back(generate_scenario("SI4", 21, kScenarioSeed + 4));
        return v;
    }();
    return lib;
}

const NamedScenario& find_scenario(const std::string& name) {
    for (const auto& s : scenario_library()) {
        if (s.name == name) return s;
    }
    throw std::out_of_range("unknown scenario '" + name + "' (known: SI1, SI2, SI3, SI4)");
}

}  // namespace sicbench
