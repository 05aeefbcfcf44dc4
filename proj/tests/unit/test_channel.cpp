#include <doctest.h>

#include "sicbench/channel.hpp"

#include <cmath>
#include <random>

using namespace sicbench;

namespace {

SampledSignal noise(std::size_t n, std::uint64_t seed, double fs = 10e9) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return SampledSignal(std::move(v), fs);
}

// Direct shift-and-add on integer-sample delays.
std::vector<double> shift_and_add(const std::vector<SampledSignal>& tx, const std::vector<std::vector<Tap>>& taps) {
    const double fs = tx[0].sample_rate();
    std::vector<double> out(tx[0].size(), 0.0);
    for (std::size_t j = 0; j < tx.size(); ++j) {
        for (const Tap& t : taps[j]) {
            const auto d = static_cast<std::size_t>(std::llround(t.delay * fs));
            const double g = std::pow(10.0, t.gain_db / 20.0);
            for (std::size_t i = d; i < out.size(); ++i) out[i] += g * tx[j][i - d];
        }
    }
    return out;
}

std::vector<std::vector<Tap>> si1_taps() {
    return {{{0.0, 0.0}, {10e-9, -3.09}, {20e-9, -10.45}, {30e-9, -20.0}},
            {{0.0, 0.0}, {16e-9, -3.74}, {24e-9, -9.12}, {28e-9, -16.48}}};
}

}  // namespace

TEST_CASE("single unit tap is the identity") {
    const auto x = noise(500, 1);
    const auto y = apply_multipath({x}, MultipathChannel({{Tap{}}}));
    CHECK(y == x);
}

TEST_CASE("3-sample, -6.0206 dB tap shifts and halves") {
    const auto x = noise(200, 2, 1.0);
    const auto y = apply_multipath({x}, MultipathChannel({{Tap{3.0, -6.0206}}}));
    for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == 0.0);
    for (std::size_t i = 3; i < 200; ++i) CHECK(y[i] == doctest::Approx(0.5 * x[i - 3]).epsilon(1e-5));
}

TEST_CASE("SI1 two-antenna channel equals the shift-and-add oracle") {
    const std::vector<SampledSignal> tx{noise(4000, 3), noise(4000, 4)};
    const auto taps = si1_taps();
    const auto y = apply_multipath(tx, MultipathChannel(taps));
    const auto want = shift_and_add(tx, taps);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
        worst = std::max(worst, std::abs(y[i] - want[i]));
        scale = std::max(scale, std::abs(want[i]));
    }
    CHECK(worst < 1e-9);
    CHECK(worst < 1e-12 * scale);
}

TEST_CASE("channel validation") {
    CHECK_THROWS(MultipathChannel({}));
    CHECK_THROWS(MultipathChannel(std::vector<std::vector<Tap>>{{}}));
    CHECK_THROWS(MultipathChannel({{Tap{-1e-9, 0.0}}}));
    CHECK_THROWS(MultipathChannel({{Tap{2e-9, 0.0}, Tap{1e-9, 0.0}}}));
    CHECK_THROWS(MultipathChannel({{Tap{0.0, INFINITY}}}));
    const MultipathChannel ch({{Tap{}}, {Tap{}}});
    CHECK_THROWS(apply_multipath({noise(10, 1)}, ch));
    CHECK_THROWS(apply_multipath({noise(10, 1), noise(10, 2, 5e9)}, ch));
    CHECK_THROWS(apply_multipath({noise(10, 1)}, MultipathChannel({{Tap{20e-9, 0.0}}})));
}

TEST_CASE("multipath is linear") {
    const MultipathChannel ch({{Tap{0.0, 0.0}, Tap{1.37e-9, -3.0, 0.4}}, {Tap{0.5e-9, -1.0}, Tap{2.2e-9, -6.0}}});
    const auto x1 = noise(1000, 5), x2 = noise(1000, 6), y1 = noise(1000, 7), y2 = noise(1000, 8);
    const double a = 0.7, b = -1.9;
    const auto lhs = apply_multipath({x1.scaled(a) + y1.scaled(b), x2.scaled(a) + y2.scaled(b)}, ch);
    const auto rx = apply_multipath({x1, x2}, ch);
    const auto ry = apply_multipath({y1, y2}, ch);
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (a * rx[i] + b * ry[i])) < 1e-9);
}

TEST_CASE("multipath is time invariant away from the edges") {
    const MultipathChannel ch({{Tap{0.0, 0.0}, Tap{0.73e-9, -2.0}, Tap{3e-9, -8.0}}});
    const auto x = noise(3000, 9);
    const std::size_t k = 17;
    std::vector<double> shifted(3000, 0.0);
    for (std::size_t i = k; i < 3000; ++i) shifted[i] = x[i - k];
    const auto y = apply_multipath({x}, ch);
    const auto ys = apply_multipath({SampledSignal(shifted, 10e9)}, ch);
    for (std::size_t i = 100; i < 2900; ++i) CHECK(std::abs(ys[i] - y[i - k]) < 1e-12);
}

TEST_CASE("tap phase rotates a passband tone") {
    const std::size_t n = 1000;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = std::cos(2.0 * M_PI * 100.0 * i / n);
    const auto y = apply_multipath({SampledSignal(v, 1.0)}, MultipathChannel({{Tap{0.0, 0.0, 0.6}}}));
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(std::cos(2.0 * M_PI * 100.0 * i / n + 0.6)).scale(1.0));
}

TEST_CASE("add_awgn") {
    const auto x = noise(1000, 10);
    CHECK(add_awgn(x, kNoNoise, 1) == x);
    CHECK(add_awgn(x, 10.0, 5) == add_awgn(x, 10.0, 5));
    CHECK(add_awgn(x, 10.0, 5) != add_awgn(x, 10.0, 6));

    std::vector<double> ones(1000000, 1.0);
    const SampledSignal unit(ones, 1.0);
    const auto noisy = add_awgn(unit, 0.0, 77);
    double p = 0.0;
    for (std::size_t i = 0; i < noisy.size(); ++i) p += (noisy[i] - 1.0) * (noisy[i] - 1.0);
    CHECK(p / 1e6 == doctest::Approx(1.0).epsilon(0.01));

    const auto ref = add_awgn(unit, 10.0, 77, 4.0);
    double q = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) q += (ref[i] - 1.0) * (ref[i] - 1.0);
    CHECK(q / 1e6 == doctest::Approx(0.4).epsilon(0.01));
}

TEST_CASE("compose_received") {
    const auto si = noise(2000, 11), soi = noise(2000, 12);
    CHECK(compose_received(si, soi, kSoiDisabled) == si);
    const auto doubled = compose_received(si, si, 0.0);
    for (std::size_t i = 0; i < si.size(); ++i) CHECK(doubled[i] == doctest::Approx(2.0 * si[i]));
    const auto scaled = scale_soi(si, soi, -10.0);
    CHECK(10.0 * std::log10(scaled.power() / si.power()) == doctest::Approx(-10.0).epsilon(0.1 / 10.0));
    const auto rel = scale_soi(si, soi, -10.0, 3.0);
    CHECK(10.0 * std::log10(rel.power() / 3.0) == doctest::Approx(-10.0).epsilon(1e-9));
    CHECK_THROWS(compose_received(si, noise(1999, 1), 0.0));
    CHECK_THROWS(compose_received(si, noise(1999, 1), kSoiDisabled));
}
