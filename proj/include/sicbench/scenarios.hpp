// Named SI channel scenarios SI1..SI4.
#pragma once

#include "sicbench/channel.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sicbench {

struct NamedScenario {
    std::string name;
    std::vector<std::vector<Tap>> antennas;
};

/// SI1 carries the measured two-antenna delay/gain vectors. SI2..SI4 only fix
/// the largest delay (28, 40 and 21 ns); their other delays are drawn on a
/// 1 ns grid from kScenarioSeed + index (see generate_scenario) and their
/// gains reuse SI1's per-antenna decay profile.
const std::vector<NamedScenario>& scenario_library();

/// Throws std::out_of_range for unknown names (case-sensitive).
const NamedScenario& find_scenario(const std::string& name);

inline constexpr std::uint64_t kScenarioSeed = 20190611;

/// Antenna 1: delays {0, a1, b1, D}; antenna 2: {0, a2, b2, c2} with
/// c2 = D - {1, 2 or 3}. The intermediate delays sit at SI1's relative
/// positions (1/3 and 2/3 of D, 16/28 and 24/28 of c2) plus a -1..+1 ns
/// jitter, which keeps gaps between paths as short as in SI1. All integer
/// ns. Draws use raw mt19937_64 words reduced modulo the range so every
/// platform produces the same taps.
NamedScenario generate_scenario(const std::string& name, int max_delay_ns, std::uint64_t seed);

}  // namespace sicbench
