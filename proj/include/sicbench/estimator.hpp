// Multi-antenna least-squares SI channel estimation and the adaptive order
// loop that picks the FIR length L.
#pragma once

#include "sicbench/signals.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace sicbench {

/// Rows [start, start + length) of the signals; history before index 0 reads as zero.
struct Block {
    std::size_t start = 0;
    std::size_t length = 0;
};

enum class OrderReading {
    kFresh,   ///< hold test and floor use the l_f just produced by the update
    kLagged,  ///< hold test and floor use the l_f from before the update
};

struct LsConfig {
    int alpha = 10;
    int delta = 1;
    int big_delta = 40;
    double gamma_min = 2000.0;
    double gamma_max = 4000.0;
    int max_iterations = 600;
    int l_init = 150;
    int l_min = 50;
    int l_max = 520;
    std::size_t block_size = 40000;
    std::size_t num_antennas = 2;
    /// Stop once L has not changed for this many consecutive iterations.
    int patience = 20;
    /// Divide e_delta by ||y||^2. Off feeds raw squared-error differences.
    bool normalize_e_delta = true;
    OrderReading reading = OrderReading::kFresh;

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
};

struct OrderState {
    int iteration = 0;
    int order = 0;
    double order_float = 0.0;
    double last_e_delta = 0.0;
};

struct ChannelEstimate {
    /// taps[j][l]: coefficient of antenna j at lag l.
    std::vector<std::vector<double>> taps;
    int order = 0;
    /// ||y - X h||^2 / N
    double residual_power = 0.0;
};

struct OrderRecord {
    int i;
    int order;
    double order_float;
    double e_delta;
    double gamma;
    double residual_db;  ///< 10 log10(||e_L||^2 / ||y||^2)
};

struct OrderTrace {
    std::vector<OrderRecord> records;
    bool converged = false;

    void write_csv(std::ostream& os) const;
};

/// Thrown when the regressor matrix loses column rank.
class RankDeficient : public std::runtime_error {
public:
    /// iteration < 0 when raised outside the adaptive loop.
    RankDeficient(std::size_t antenna, std::size_t lag, double ratio, int iteration = -1);
    std::size_t antenna() const { return antenna_; }
    std::size_t lag() const { return lag_; }
    double ratio() const { return ratio_; }
    int iteration() const { return iteration_; }

private:
    std::size_t antenna_;
    std::size_t lag_;
    double ratio_;
    int iteration_;
};

/// N x L Toeplitz matrix, row k / column l = x(start + k - l).
Eigen::MatrixXd build_convolution_matrix(const SampledSignal& x, std::size_t order, const Block& block);

/// One orthogonal factorization serving every order up to l_max.
///
/// Columns are interleaved by lag (lag 0 of every antenna, then lag 1, ...),
/// so the first m*L columns span exactly the order-L model. Rows are folded in
/// chunks through Householder QR, keeping only R, Q^T y and the energy that
/// falls outside the column space. Residuals of all nested orders then come
/// for free and are exactly non-increasing in L.
class NestedLeastSquares {
public:
    NestedLeastSquares(const std::vector<SampledSignal>& x_list, const SampledSignal& y,
                       std::size_t l_max, const Block& block);

    std::size_t max_order() const { return l_max_; }
    std::size_t num_antennas() const { return m_; }
    /// ||y_block||^2
    double energy() const { return y_energy_; }
    /// ||y - X_L h_L||^2, minimized over h_L.
    double residual(std::size_t order) const;
    /// Throws RankDeficient if the first `order` lags are (numerically) dependent.
    void check_rank(std::size_t order) const;
    /// Least-squares fit at `order`; throws RankDeficient if X_L is singular.
    ChannelEstimate solve(std::size_t order) const;

private:
    std::size_t m_;
    std::size_t l_max_;
    std::size_t rows_;
    double y_energy_ = 0.0;
    Eigen::MatrixXd r_;
    Eigen::VectorXd z_;
    /// suffix_[k] = energy of y outside the span of the first k columns.
    std::vector<double> suffix_;
};

/// Relative |R_ii| threshold below which X is treated as rank deficient.
inline constexpr double kRankTolerance = 1e-10;

ChannelEstimate ls_estimate(const std::vector<SampledSignal>& x_list, const SampledSignal& y,
                            std::size_t order, const Block& block);

/// X h over the block (length block.length, at the rate of x_list).
SampledSignal reconstruct_reference(const std::vector<SampledSignal>& x_list, const ChannelEstimate& est,
                                    const Block& block);

/// (||e_L||^2 - ||e_{L-big_delta}||^2) / ||y||^2; always <= 0.
double order_error_delta(const std::vector<SampledSignal>& x_list, const SampledSignal& y, std::size_t order,
                         std::size_t big_delta, const Block& block);

double gamma_schedule(int i, const LsConfig& cfg);

OrderState update_order(const OrderState& state, double e_delta, double gamma, const LsConfig& cfg);

struct AdaptiveResult {
    ChannelEstimate estimate;
    OrderTrace trace;
};

/// Runs the order update loop on one captured block, using a single nested
/// factorization at cfg.l_max for every probe.
AdaptiveResult adaptive_order_loop(const std::vector<SampledSignal>& x_list, const SampledSignal& y,
                                   const Block& block, const LsConfig& cfg);

/// Same loop on an already factorized block (lets callers share one
/// factorization across several starting orders).
AdaptiveResult adaptive_order_loop(const NestedLeastSquares& ls, const LsConfig& cfg);

/// Live variant: `provider(i)` returns the factorization for iteration i,
/// e.g. over a freshly captured block. The final estimate uses the last one.
using BlockProvider = std::function<NestedLeastSquares(int)>;
AdaptiveResult adaptive_order_loop(const BlockProvider& provider, const LsConfig& cfg);

}  // namespace sicbench
