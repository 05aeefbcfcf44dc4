#include <doctest.h>

#include "sicbench/estimator.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace sicbench;

namespace {

SampledSignal noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return SampledSignal(std::move(v), 10e9);
}

// y[t] = sum_j sum_l h_j[l] x_j[t - l], zero history.
SampledSignal fir(const std::vector<SampledSignal>& x, const std::vector<std::vector<double>>& h) {
    std::vector<double> y(x[0].size(), 0.0);
    for (std::size_t j = 0; j < x.size(); ++j) {
        for (std::size_t t = 0; t < y.size(); ++t) {
            for (std::size_t l = 0; l < h[j].size() && l <= t; ++l) y[t] += h[j][l] * x[j][t - l];
        }
    }
    return SampledSignal(std::move(y), x[0].sample_rate());
}

// Explicit (X^T X)^{-1} X^T y via Gauss-Jordan with partial pivoting.
// Columns ordered antenna-major: antenna j, lag l at j*L + l.
std::vector<double> normal_equation_oracle(const std::vector<SampledSignal>& x, const SampledSignal& y,
                                           std::size_t order, const Block& b) {
    const std::size_t m = x.size(), n = m * order;
    auto col = [&](std::size_t c, std::size_t k) {
        const std::size_t j = c / order, l = c % order, t = b.start + k;
        return t >= l ? x[j][t - l] : 0.0;
    };
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            for (std::size_t k = 0; k < b.length; ++k) a[r][c] += col(r, k) * col(c, k);
        }
        for (std::size_t k = 0; k < b.length; ++k) a[r][n] += col(r, k) * y[b.start + k];
    }
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t best = p;
        for (std::size_t r = p + 1; r < n; ++r) {
            if (std::abs(a[r][p]) > std::abs(a[best][p])) best = r;
        }
        std::swap(a[p], a[best]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == p) continue;
            const double f = a[r][p] / a[p][p];
            for (std::size_t c = p; c <= n; ++c) a[r][c] -= f * a[p][c];
        }
    }
    std::vector<double> h(n);
    for (std::size_t r = 0; r < n; ++r) h[r] = a[r][n] / a[r][r];
    return h;
}

double direct_residual(const std::vector<SampledSignal>& x, const SampledSignal& y, const ChannelEstimate& est,
                       const Block& b) {
    const auto r = reconstruct_reference(x, est, b);
    double e = 0.0;
    for (std::size_t k = 0; k < b.length; ++k) e += (y[b.start + k] - r[k]) * (y[b.start + k] - r[k]);
    return e;
}

}  // namespace

TEST_CASE("convolution matrix examples") {
    const SampledSignal impulse({0.0, 0.0, 1.0, 0.0, 0.0}, 1.0);
    const auto eye = build_convolution_matrix(impulse, 3, {2, 3});
    CHECK(eye.isApprox(Eigen::MatrixXd::Identity(3, 3)));

    const SampledSignal x({1.0, 2.0, 3.0, 4.0}, 1.0);
    Eigen::MatrixXd want(3, 2);
    want << 2, 1, 3, 2, 4, 3;
    CHECK(build_convolution_matrix(x, 2, {1, 3}) == want);

    // History before index 0 reads as zero.
    Eigen::MatrixXd head(3, 3);
    head << 1, 0, 0, 2, 1, 0, 3, 2, 1;
    CHECK(build_convolution_matrix(x, 3, {0, 3}) == head);

    CHECK_THROWS(build_convolution_matrix(x, 4, {0, 3}));
    CHECK_THROWS(build_convolution_matrix(x, 1, {2, 3}));
}

TEST_CASE("convolution matrix times h equals direct FIR convolution") {
    const auto x = noise(200, 1);
    const Block b{40, 64};
    const auto m = build_convolution_matrix(x, 8, b);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> h(8);
        for (auto& v : h) v = normal(rng);
        const Eigen::VectorXd got = m * Eigen::Map<Eigen::VectorXd>(h.data(), 8);
        const auto want = fir({x}, {h});
        for (std::size_t k = 0; k < 64; ++k) CHECK(std::abs(got(static_cast<Eigen::Index>(k)) - want[40 + k]) < 1e-12);
    }
}

TEST_CASE("exact recovery, one antenna") {
    const auto x = noise(600, 3);
    const std::vector<double> h{0.9, -0.3, 0.0, 0.25, 0.1};
    const auto y = fir({x}, {h});
    const auto est = ls_estimate({x}, y, 9, {20, 500});
    REQUIRE(est.order == 9);
    REQUIRE(est.taps.size() == 1);
    for (std::size_t l = 0; l < 9; ++l) CHECK(std::abs(est.taps[0][l] - (l < h.size() ? h[l] : 0.0)) < 1e-9);
    CHECK(est.residual_power < 1e-20);
}

TEST_CASE("two antennas match the normal-equation oracle") {
    const std::vector<SampledSignal> x{noise(100, 4), noise(100, 5)};
    const auto y = noise(100, 6);
    const Block b{10, 64};
    const auto est = ls_estimate(x, y, 4, b);
    const auto oracle = normal_equation_oracle(x, y, 4, b);
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t l = 0; l < 4; ++l) {
            const double o = oracle[j * 4 + l];
            CHECK(std::abs(est.taps[j][l] - o) <= 1e-9 * std::max(1.0, std::abs(o)));
        }
    }
    CHECK(est.residual_power * 64 == doctest::Approx(direct_residual(x, y, est, b)).epsilon(1e-9));
}

TEST_CASE("received signal orthogonal to the regressors gives zero taps") {
    const std::vector<SampledSignal> x{noise(300, 7), noise(300, 8)};
    const Block b{0, 300};
    Eigen::MatrixXd xm(300, 6);
    xm << build_convolution_matrix(x[0], 3, b), build_convolution_matrix(x[1], 3, b);
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(noise(300, 9).samples().data(), 300);
    // Project out the column space with modified Gram-Schmidt.
    Eigen::MatrixXd q = xm;
    for (int c = 0; c < 6; ++c) {
        for (int p = 0; p < c; ++p) q.col(c) -= q.col(p).dot(q.col(c)) * q.col(p);
        q.col(c).normalize();
    }
    for (int c = 0; c < 6; ++c) v -= q.col(c).dot(v) * q.col(c);
    const SampledSignal y(std::vector<double>(v.data(), v.data() + 300), 10e9);
    const auto est = ls_estimate(x, y, 3, b);
    for (const auto& taps : est.taps) {
        for (double t : taps) CHECK(std::abs(t) < 1e-9);
    }
}

TEST_CASE("reconstruct_reference") {
    const auto x = noise(300, 10);
    ChannelEstimate unit;
    unit.order = 3;
    unit.taps = {{1.0, 0.0, 0.0}};
    const auto r = reconstruct_reference({x}, unit, {50, 200});
    for (std::size_t k = 0; k < 200; ++k) CHECK(r[k] == x[50 + k]);

    const std::vector<SampledSignal> xs{noise(3000, 11), noise(3000, 12)};
    const auto y = fir(xs, {{0.5, 0.0, -0.2}, {0.0, 0.7}});
    const Block b{100, 2800};
    const auto est = ls_estimate(xs, y, 6, b);
    const auto fit = reconstruct_reference(xs, est, b);
    for (std::size_t k = 0; k < b.length; ++k) CHECK(std::abs(fit[k] - y[b.start + k]) < 1e-9);
}

TEST_CASE("multi-chunk factorization matches the oracle and direct residuals") {
    // 9000 rows with 16 columns spans three 4096-row chunks.
    const std::vector<SampledSignal> x{noise(9100, 13), noise(9100, 14)};
    const auto y = noise(9100, 15);
    const Block b{100, 9000};
    const NestedLeastSquares ls(x, y, 8, b);
    const auto est = ls.solve(8);
    const auto oracle = normal_equation_oracle(x, y, 8, b);
    for (std::size_t j = 0; j < 2; ++j) {
        for (std::size_t l = 0; l < 8; ++l) CHECK(std::abs(est.taps[j][l] - oracle[j * 8 + l]) < 1e-9);
    }
    for (std::size_t order = 1; order <= 8; ++order) {
        const auto e = ls.solve(order);
        CHECK(ls.residual(order) == doctest::Approx(direct_residual(x, y, e, b)).epsilon(1e-9));
    }
    double energy = 0.0;
    for (std::size_t k = 0; k < b.length; ++k) energy += y[b.start + k] * y[b.start + k];
    CHECK(ls.energy() == doctest::Approx(energy).epsilon(1e-12));
    CHECK(ls.residual(0) == doctest::Approx(energy).epsilon(1e-9));
}

TEST_CASE("nested residuals are non-increasing in the order") {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<SampledSignal> x{noise(2000, rng()), noise(2000, rng())};
        const auto y = noise(2000, rng());
        const NestedLeastSquares ls(x, y, 60, {60, 1900});
        for (std::size_t l = 1; l <= 60; ++l) CHECK(ls.residual(l) <= ls.residual(l - 1));
    }
}

TEST_CASE("rank deficiency is reported, not regularized") {
    const auto a = noise(500, 17);
    try {
        ls_estimate({a, a}, noise(500, 18), 4, {10, 400});
        FAIL("expected RankDeficient");
    } catch (const RankDeficient& e) {
        CHECK(e.antenna() == 1);
        CHECK(e.lag() == 0);
        CHECK(std::string(e.what()).find("antenna 1") != std::string::npos);
    }
    CHECK_THROWS_AS(ls_estimate({SampledSignal::zeros(500, 10e9)}, a, 2, {0, 500}), RankDeficient);
    CHECK_THROWS_AS(ls_estimate({a}, a, 20, {0, 10}), std::invalid_argument);
}

TEST_CASE("order_error_delta") {
    const auto x = noise(5000, 19);
    SUBCASE("both orders cover the support") {
        const auto y = fir({x}, {{1.0, 0.5, -0.3, 0.2, 0.1}});
        CHECK(std::abs(order_error_delta({x}, y, 100, 40, {100, 4800})) < 1e-9);
    }
    SUBCASE("probe order truncates the support") {
        // Decay resembling the SI1 gain profile, spread over 50 lags.
        std::vector<double> h(50, 0.0);
        h[0] = 1.0;
        h[16] = std::pow(10.0, -3.09 / 20.0);
        h[33] = std::pow(10.0, -10.45 / 20.0);
        h[49] = std::pow(10.0, -20.0 / 20.0);
        const auto y = fir({x}, {h});
        const Block b{60, 2000};
        const double e = order_error_delta({x}, y, 60, 40, b);
        CHECK(e < -0.01);
        // Oracle: explicit LS residuals at orders 60 and 20.
        double energy = 0.0;
        for (std::size_t k = 0; k < b.length; ++k) energy += y[b.start + k] * y[b.start + k];
        auto residual_at = [&](std::size_t order) {
            const auto h_hat = normal_equation_oracle({x}, y, order, b);
            ChannelEstimate est;
            est.order = static_cast<int>(order);
            est.taps = {h_hat};
            return direct_residual({x}, y, est, b);
        };
        CHECK(e == doctest::Approx((residual_at(60) - residual_at(20)) / energy).epsilon(1e-6));
    }
    SUBCASE("zero received signal is rejected") {
        CHECK_THROWS_AS(order_error_delta({x}, SampledSignal::zeros(5000, 10e9), 60, 40, {60, 2000}),
                        std::invalid_argument);
    }
}

TEST_CASE("gamma schedule") {
    LsConfig cfg;
    cfg.gamma_min = 100.0;
    cfg.gamma_max = 300.0;
    cfg.max_iterations = 101;
    CHECK(gamma_schedule(0, cfg) == 100.0);
    CHECK(gamma_schedule(100, cfg) == 300.0);
    CHECK(gamma_schedule(50, cfg) == doctest::Approx(200.0));
}

TEST_CASE("update_order") {
    LsConfig cfg;
    cfg.l_max = 520;
    OrderState s{0, 450, 450.0, 0.0};
    SUBCASE("no truncation error walks the order down by alpha") {
        const auto n = update_order(s, 0.0, 3000.0, cfg);
        CHECK(n.order_float == 440.0);
        CHECK(n.order == 440);
        CHECK(n.iteration == 1);
    }
    SUBCASE("e_delta = -alpha/gamma is a fixed point") {
        const auto n = update_order(s, -10.0 / 2500.0, 2500.0, cfg);
        CHECK(n.order_float == doctest::Approx(450.0));
        CHECK(n.order == 450);
    }
    SUBCASE("changes within delta hold the order") {
        const auto n = update_order(s, -9.5 / 1000.0, 1000.0, cfg);
        CHECK(n.order_float == doctest::Approx(449.5));
        CHECK(n.order == 450);
    }
    SUBCASE("floor on larger moves") {
        const auto n = update_order(s, -7.5 / 1000.0, 1000.0, cfg);
        CHECK(n.order_float == doctest::Approx(447.5));
        CHECK(n.order == 447);
    }
    SUBCASE("clamped to the order bounds") {
        CHECK(update_order(s, -1.0, 1000.0, cfg).order == 520);
        OrderState low{0, 55, 55.0, 0.0};
        const auto n = update_order(low, 0.0, 1000.0, cfg);
        CHECK(n.order_float == 50.0);
        CHECK(n.order == 50);
    }
    SUBCASE("lagged reading uses the previous l_f") {
        cfg.reading = OrderReading::kLagged;
        OrderState t{3, 450, 440.0, 0.0};
        const auto n = update_order(t, 0.0, 1000.0, cfg);
        CHECK(n.order_float == 430.0);
        CHECK(n.order == 440);
    }
}

TEST_CASE("config validation") {
    LsConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.l_init = 600;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.big_delta = 50;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.block_size = 1000;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.gamma_max = 1.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("single-tap channel lets the order decay to l_min") {
    const auto x = noise(3000, 20);
    const auto y = fir({x}, {{0.8}});
    LsConfig cfg;
    cfg.num_antennas = 1;
    cfg.l_min = 50;
    cfg.l_max = 120;
    cfg.l_init = 100;
    cfg.big_delta = 40;
    cfg.block_size = 2800;
    cfg.max_iterations = 100;
    const auto res = adaptive_order_loop({x}, y, {120, 2800}, cfg);
    const auto& rec = res.trace.records;
    REQUIRE(!rec.empty());
    for (std::size_t i = 1; i < rec.size(); ++i) {
        CHECK(rec[i].i == rec[i - 1].i + 1);
        CHECK(rec[i].order <= rec[i - 1].order);
        CHECK(rec[i].e_delta <= 1e-12);
    }
    CHECK(res.estimate.order == 50);
    CHECK(res.trace.converged);
    CHECK(res.estimate.taps[0][0] == doctest::Approx(0.8));

    std::ostringstream csv;
    res.trace.write_csv(csv);
    CHECK(csv.str().rfind("i,L,l_f,e_delta,gamma,residual_db\n", 0) == 0);
}

TEST_CASE("truncation error keeps the order above the channel support") {
    // 40-lag channel: once L - big_delta cuts the last tap, e_delta pushes L back up.
    const std::vector<SampledSignal> x{noise(6000, 21), noise(6000, 22)};
    std::vector<double> h1(40, 0.0), h2(30, 0.0);
    h1[0] = 1.0;
    h1[39] = 0.3;
    h2[0] = 0.9;
    h2[29] = 0.4;
    const auto y = fir(x, {h1, h2});
    LsConfig cfg;
    cfg.l_min = 45;
    cfg.l_max = 150;
    cfg.l_init = 140;
    cfg.big_delta = 40;
    cfg.block_size = 5000;
    cfg.max_iterations = 200;
    const auto res = adaptive_order_loop(x, y, {150, 5000}, cfg);
    const auto& rec = res.trace.records;
    REQUIRE(rec.size() > 20);
    for (std::size_t i = 20; i < rec.size(); ++i) CHECK(rec[i].order >= 60);
    CHECK(res.estimate.order >= 40);
    CHECK(res.estimate.residual_power < 1e-20);
}

TEST_CASE("live provider sees one factorization per iteration") {
    const auto x = noise(3000, 23);
    const auto y = fir({x}, {{0.8, 0.1}});
    LsConfig cfg;
    cfg.num_antennas = 1;
    cfg.l_min = 50;
    cfg.l_max = 120;
    cfg.l_init = 80;
    cfg.block_size = 2800;
    cfg.max_iterations = 30;
    int calls = 0;
    const auto res = adaptive_order_loop(
        [&](int i) {
            CHECK(i == calls);
            ++calls;
            return NestedLeastSquares({x}, y, 120, {120, 2800});
        },
        cfg);
    CHECK(calls == static_cast<int>(res.trace.records.size()));
    CHECK(res.estimate.taps[0][1] == doctest::Approx(0.1));
}

TEST_CASE("rank failures inside the loop name the iteration") {
    const auto a = noise(3000, 24);
    LsConfig cfg;
    cfg.l_max = 100;
    cfg.l_init = 80;
    cfg.block_size = 2800;
    try {
        adaptive_order_loop({a, a}, a, {100, 2800}, cfg);
        FAIL("expected RankDeficient");
    } catch (const RankDeficient& e) {
        CHECK(e.iteration() == 0);
        CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    }
}
