#include "sicbench/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace sicbench {

namespace {

void check_block(const std::vector<SampledSignal>& x_list, const SampledSignal& y, const Block& block) {
    if (x_list.empty()) throw std::invalid_argument("need at least one transmit signal");
    for (const auto& x : x_list) {
        if (x.sample_rate() != y.sample_rate()) {
            throw std::invalid_argument("transmit and received signals differ in sample rate");
        }
        if (block.start + block.length > x.size()) {
            throw std::invalid_argument("block runs past the end of a transmit signal");
        }
    }
    if (block.start + block.length > y.size()) {
        throw std::invalid_argument("block runs past the end of the received signal");
    }
}

// In-place Householder triangularization of [a | b]: on return the upper
// triangle of a holds R and b holds Q^T b. Reflectors are applied in panels
// of kPanel columns as I - V T V^T so the trailing update is a matrix product.
void householder_reduce(Eigen::Ref<Eigen::MatrixXd> a, Eigen::Ref<Eigen::VectorXd> b) {
    constexpr Eigen::Index kPanel = 32;
    const Eigen::Index rows = a.rows(), cols = a.cols(), steps = std::min(rows, cols);
    Eigen::MatrixXd v, t, w;
    Eigen::VectorXd tau(kPanel), wp(kPanel);
    for (Eigen::Index k0 = 0; k0 < steps; k0 += kPanel) {
        const Eigen::Index jb = std::min(kPanel, steps - k0), m = rows - k0;
        v.setZero(m, jb);
        for (Eigen::Index i = 0; i < jb; ++i) {
            const Eigen::Index k = k0 + i;
            auto x = a.col(k).tail(rows - k);
            const double norm = x.norm();
            tau(i) = 0.0;
            if (norm == 0.0) continue;
            const double alpha = x(0) > 0.0 ? -norm : norm;
            x(0) -= alpha;
            // x.x = -2 alpha x0 after the shift, so H = I - x x^T / (-alpha x0)
            tau(i) = 1.0 / (-alpha * x(0));
            v.col(i).tail(m - i) = x;
            if (i + 1 < jb) {
                auto p = a.block(k, k + 1, rows - k, jb - i - 1);
                wp.head(jb - i - 1).noalias() = p.transpose() * x;
                p.noalias() -= (tau(i) * x) * wp.head(jb - i - 1).transpose();
            }
            x.setZero();
            x(0) = alpha;
        }
        // H_0 ... H_{jb-1} = I - V T V^T with T upper triangular
        t.setZero(jb, jb);
        for (Eigen::Index i = 0; i < jb; ++i) {
            t(i, i) = tau(i);
            if (i == 0 || tau(i) == 0.0) continue;
            const Eigen::VectorXd g = v.leftCols(i).transpose() * v.col(i);
            t.col(i).head(i) = t.topLeftCorner(i, i).triangularView<Eigen::Upper>() * g;
            t.col(i).head(i) *= -tau(i);
        }
        const Eigen::Index rest = cols - k0 - jb;
        if (rest > 0) {
            auto c = a.block(k0, k0 + jb, m, rest);
            w.noalias() = v.transpose() * c;
            w = t.transpose().triangularView<Eigen::Lower>() * w;
            c.noalias() -= v * w;
        }
        auto bb = b.tail(m);
        const Eigen::VectorXd wb = t.transpose().triangularView<Eigen::Lower>() * (v.transpose() * bb);
        bb.noalias() -= v * wb;
    }
}

std::string rank_message(std::size_t antenna, std::size_t lag, double ratio, int iteration) {
    std::ostringstream os;
    os << "regressor matrix is rank deficient at antenna " << antenna << ", lag " << lag
       << " (|R_ii| / max |R_jj| = " << ratio << ")";
    if (iteration >= 0) os << " in iteration " << iteration;
    return os.str();
}

}  // namespace

void LsConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("LS config: " + what); };
    if (alpha <= 0) fail("alpha must be positive");
    if (delta <= 0) fail("delta must be positive");
    if (big_delta <= 0) fail("big_delta must be positive");
    if (!(gamma_min > 0.0) || !(gamma_max >= gamma_min)) fail("need 0 < gamma_min <= gamma_max");
    if (max_iterations <= 0) fail("max_iterations must be positive");
    if (!(0 < l_min && l_min <= l_init && l_init <= l_max)) fail("need 0 < l_min <= l_init <= l_max");
    if (big_delta >= l_min) fail("big_delta must be smaller than l_min");
    if (num_antennas == 0) fail("num_antennas must be positive");
    if (block_size < num_antennas * static_cast<std::size_t>(l_max)) {
        fail("block_size must be at least num_antennas * l_max");
    }
    if (patience <= 0) fail("patience must be positive");
}

void OrderTrace::write_csv(std::ostream& os) const {
    os << "i,L,l_f,e_delta,gamma,residual_db\n";
    os << std::setprecision(12);
    for (const auto& r : records) {
        os << r.i << ',' << r.order << ',' << r.order_float << ',' << r.e_delta << ',' << r.gamma << ','
           << r.residual_db << '\n';
    }
}

RankDeficient::RankDeficient(std::size_t antenna, std::size_t lag, double ratio, int iteration)
    : std::runtime_error(rank_message(antenna, lag, ratio, iteration)),
      antenna_(antenna),
      lag_(lag),
      ratio_(ratio),
      iteration_(iteration) {}

Eigen::MatrixXd build_convolution_matrix(const SampledSignal& x, std::size_t order, const Block& block) {
    if (block.length < order) throw std::invalid_argument("block shorter than the order (underdetermined)");
    if (block.start + block.length > x.size()) throw std::invalid_argument("block runs past the signal end");
    const auto n = static_cast<Eigen::Index>(block.length);
    Eigen::MatrixXd m(n, static_cast<Eigen::Index>(order));
    for (std::size_t l = 0; l < order; ++l) {
        for (std::size_t k = 0; k < block.length; ++k) {
            const std::size_t t = block.start + k;
            m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = t >= l ? x[t - l] : 0.0;
        }
    }
    return m;
}

NestedLeastSquares::NestedLeastSquares(const std::vector<SampledSignal>& x_list, const SampledSignal& y,
                                       std::size_t l_max, const Block& block)
    : m_(x_list.size()), l_max_(l_max), rows_(block.length) {
    check_block(x_list, y, block);
    if (l_max == 0) throw std::invalid_argument("order must be positive");
    const std::size_t n = m_ * l_max;
    if (block.length < n) {
        throw std::invalid_argument("block of " + std::to_string(block.length) + " rows cannot fit " +
                                    std::to_string(n) + " coefficients (underdetermined)");
    }
    const auto ni = static_cast<Eigen::Index>(n);
    const std::size_t chunk = std::max<std::size_t>(4 * n, 4096);

    Eigen::MatrixXd stack(ni + static_cast<Eigen::Index>(chunk), ni);
    Eigen::VectorXd rhs(stack.rows());
    r_ = Eigen::MatrixXd::Zero(ni, ni);
    z_ = Eigen::VectorXd::Zero(ni);
    double tail = 0.0;
    bool have_r = false;

    for (std::size_t first = 0; first < block.length; first += chunk) {
        const std::size_t count = std::min(chunk, block.length - first);
        const Eigen::Index offset = have_r ? ni : 0;
        const Eigen::Index total = offset + static_cast<Eigen::Index>(count);
        if (have_r) {
            stack.topRows(ni) = r_;
            rhs.head(ni) = z_;
        }
        for (std::size_t lag = 0; lag < l_max; ++lag) {
            for (std::size_t j = 0; j < m_; ++j) {
                const auto& x = x_list[j].samples();
                double* col = stack.col(static_cast<Eigen::Index>(lag * m_ + j)).data() + offset;
                for (std::size_t k = 0; k < count; ++k) {
                    const std::size_t t = block.start + first + k;
                    col[k] = t >= lag ? x[t - lag] : 0.0;
                }
            }
        }
        for (std::size_t k = 0; k < count; ++k) {
            const double v = y[block.start + first + k];
            rhs(offset + static_cast<Eigen::Index>(k)) = v;
            y_energy_ += v * v;
        }

        Eigen::Ref<Eigen::MatrixXd> a = stack.topRows(total);
        Eigen::Ref<Eigen::VectorXd> b = rhs.head(total);
        householder_reduce(a, b);

        const Eigen::Index kept = std::min(total, ni);
        r_.setZero();
        r_.topRows(kept) = a.topRows(kept).triangularView<Eigen::Upper>();
        z_.setZero();
        z_.head(kept) = b.head(kept);
        if (total > ni) tail += b.tail(total - ni).squaredNorm();
        have_r = true;
    }

    suffix_.assign(n + 1, tail);
    for (std::size_t i = n; i-- > 0;) {
        const double zi = z_(static_cast<Eigen::Index>(i));
        suffix_[i] = suffix_[i + 1] + zi * zi;
    }
}

double NestedLeastSquares::residual(std::size_t order) const {
    if (order > l_max_) throw std::invalid_argument("order exceeds the factorized maximum");
    return suffix_[order * m_];
}

void NestedLeastSquares::check_rank(std::size_t order) const {
    if (order == 0 || order > l_max_) throw std::invalid_argument("order outside [1, max order]");
    const auto k = static_cast<Eigen::Index>(order * m_);
    const double top = r_.diagonal().head(k).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < k; ++i) {
        const double d = std::abs(r_(i, i));
        if (!(d > kRankTolerance * top)) {
            const auto iu = static_cast<std::size_t>(i);
            throw RankDeficient(iu % m_, iu / m_, top > 0.0 ? d / top : 0.0);
        }
    }
}

ChannelEstimate NestedLeastSquares::solve(std::size_t order) const {
    check_rank(order);
    const auto k = static_cast<Eigen::Index>(order * m_);
    const Eigen::VectorXd h = r_.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(z_.head(k));
    ChannelEstimate est;
    est.order = static_cast<int>(order);
    est.taps.assign(m_, std::vector<double>(order));
    for (std::size_t lag = 0; lag < order; ++lag) {
        for (std::size_t j = 0; j < m_; ++j) est.taps[j][lag] = h(static_cast<Eigen::Index>(lag * m_ + j));
    }
    est.residual_power = residual(order) / static_cast<double>(rows_);
    return est;
}

ChannelEstimate ls_estimate(const std::vector<SampledSignal>& x_list, const SampledSignal& y,
                            std::size_t order, const Block& block) {
    return NestedLeastSquares(x_list, y, order, block).solve(order);
}

SampledSignal reconstruct_reference(const std::vector<SampledSignal>& x_list, const ChannelEstimate& est,
                                    const Block& block) {
    if (est.taps.size() != x_list.size()) throw std::invalid_argument("estimate and signal antenna counts differ");
    if (block.length == 0) throw std::invalid_argument("empty block");
    std::vector<double> out(block.length, 0.0);
    for (std::size_t j = 0; j < x_list.size(); ++j) {
        const auto& h = est.taps[j];
        if (h.size() != static_cast<std::size_t>(est.order)) {
            throw std::invalid_argument("estimate tap count does not match its order");
        }
        const auto& x = x_list[j].samples();
        if (block.start + block.length > x.size()) throw std::invalid_argument("block runs past the signal end");
        for (std::size_t k = 0; k < block.length; ++k) {
            const std::size_t t = block.start + k;
            const std::size_t lags = std::min(h.size(), t + 1);
            double acc = 0.0;
            for (std::size_t l = 0; l < lags; ++l) acc += h[l] * x[t - l];
            out[k] += acc;
        }
    }
    return SampledSignal(std::move(out), x_list.front().sample_rate());
}

double order_error_delta(const std::vector<SampledSignal>& x_list, const SampledSignal& y, std::size_t order,
                         std::size_t big_delta, const Block& block) {
    if (big_delta == 0 || big_delta >= order) throw std::invalid_argument("need 1 <= order - big_delta < order");
    NestedLeastSquares ls(x_list, y, order, block);
    if (!(ls.energy() > 0.0)) throw std::invalid_argument("received block has zero energy");
    ls.check_rank(order);
    return (ls.residual(order) - ls.residual(order - big_delta)) / ls.energy();
}

double gamma_schedule(int i, const LsConfig& cfg) {
    if (cfg.max_iterations <= 1) return cfg.gamma_min;
    return cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * static_cast<double>(i) /
                               static_cast<double>(cfg.max_iterations - 1);
}

OrderState update_order(const OrderState& state, double e_delta, double gamma, const LsConfig& cfg) {
    const double lo = cfg.l_min;
    const double hi = cfg.l_max;
    const double lf = std::clamp(state.order_float - cfg.alpha - gamma * e_delta, lo, hi);
    const double probe = cfg.reading == OrderReading::kFresh ? lf : state.order_float;
    int order = state.order;
    if (std::abs(state.order - probe) > cfg.delta) order = static_cast<int>(std::floor(probe));
    OrderState next;
    next.iteration = state.iteration + 1;
    next.order = std::clamp(order, cfg.l_min, cfg.l_max);
    next.order_float = lf;
    next.last_e_delta = e_delta;
    return next;
}

namespace {

using Source = std::function<const NestedLeastSquares&(int)>;

AdaptiveResult run_loop(const Source& source, const LsConfig& cfg) {
    cfg.validate();
    AdaptiveResult result;
    OrderState state;
    state.order = cfg.l_init;
    state.order_float = cfg.l_init;
    int unchanged = 0;
    const NestedLeastSquares* last = nullptr;
    for (int i = 0; i < cfg.max_iterations; ++i) {
        const NestedLeastSquares& ls = source(i);
        last = &ls;
        if (ls.num_antennas() != cfg.num_antennas) throw std::invalid_argument("antenna count differs from config");
        if (ls.max_order() < static_cast<std::size_t>(cfg.l_max)) {
            throw std::invalid_argument("factorization does not reach l_max");
        }
        const auto order = static_cast<std::size_t>(state.order);
        try {
            ls.check_rank(order);
        } catch (const RankDeficient& e) {
            throw RankDeficient(e.antenna(), e.lag(), e.ratio(), i);
        }
        const double energy = ls.energy();
        if (cfg.normalize_e_delta && !(energy > 0.0)) {
            throw std::invalid_argument("received block has zero energy in iteration " + std::to_string(i));
        }
        const double res = ls.residual(order);
        double e = res - ls.residual(order - static_cast<std::size_t>(cfg.big_delta));
        if (cfg.normalize_e_delta) e /= energy;
        const double gamma = gamma_schedule(i, cfg);
        const double res_db = energy > 0.0 ? 10.0 * std::log10(std::max(res / energy, 1e-300)) : 0.0;
        result.trace.records.push_back({i, state.order, state.order_float, e, gamma, res_db});

        const OrderState next = update_order(state, e, gamma, cfg);
        unchanged = next.order == state.order ? unchanged + 1 : 0;
        state = next;
        if (unchanged >= cfg.patience) {
            result.trace.converged = true;
            break;
        }
    }
    try {
        result.estimate = last->solve(static_cast<std::size_t>(state.order));
    } catch (const RankDeficient& e) {
        throw RankDeficient(e.antenna(), e.lag(), e.ratio(), state.iteration);
    }
    return result;
}

}  // namespace

AdaptiveResult adaptive_order_loop(const NestedLeastSquares& ls, const LsConfig& cfg) {
    return run_loop([&ls](int) -> const NestedLeastSquares& { return ls; }, cfg);
}

AdaptiveResult adaptive_order_loop(const std::vector<SampledSignal>& x_list, const SampledSignal& y,
                                   const Block& block, const LsConfig& cfg) {
    cfg.validate();
    const NestedLeastSquares ls(x_list, y, static_cast<std::size_t>(cfg.l_max), block);
    return adaptive_order_loop(ls, cfg);
}

AdaptiveResult adaptive_order_loop(const BlockProvider& provider, const LsConfig& cfg) {
    std::optional<NestedLeastSquares> current;
    return run_loop(
        [&](int i) -> const NestedLeastSquares& {
            current.emplace(provider(i));
            return *current;
        },
        cfg);
}

}  // namespace sicbench
