#ifndef QFE_RISKLAB_HPP
#define QFE_RISKLAB_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "qfe/estimators.hpp"
#include "qfe/model.hpp"

namespace qfe::risklab {

using estimators::EstimatorSpec;
using model::BallSpec;
using model::CoefficientVector;
using model::NoiseLevel;

struct BlockContribution {
    std::int64_t block;  // 0 = quadratic part, j >= 1 tail blocks, -1 beyond schedule
    double bias;
    double variance;
};

struct RiskReport {
    double bias = 0.0;
    double variance = 0.0;
    double risk = 0.0;  // bias^2 + variance (exact) or empirical MSE (MC)
    double std_error = 0.0;
    std::uint64_t replicates = 0;
    std::vector<BlockContribution> per_block;
    double truncation_bias_bound = 0.0;
};

struct RateFit {
    double slope;
    double intercept;
    double r_squared;
    std::vector<std::pair<double, double>> points;  // (n, risk)
};

struct Exponents {
    double r_star;
    double r_q_star;
};

struct HullSupResult {
    double sup_ball;
    double sup_hull;
    double sup_vertices;
    double tolerance;  // certified grid resolution error (Lipschitz * step)
};

/// Deterministic risk of the rule at theta: per-coordinate Gaussian moments,
/// with the identically-distributed zero-theta tail coordinates of each block
/// aggregated in O(1). Infinite schedules are summed to convergence. When a
/// ball is supplied for an infinite schedule, truncation_bias_bound reports
/// the ball-wide tail mass beyond the evaluation horizon.
RiskReport exact_risk(const EstimatorSpec& spec, const CoefficientVector& theta, NoiseLevel n,
                      const BallSpec* ball = nullptr);

/// Monte Carlo risk: `replicates` independent draws of the estimator, each
/// from a counter-based stream keyed by (master_seed, replicate); reduction
/// runs in fixed replicate order, so output is bit-identical for any worker
/// count. workers = 0 picks hardware concurrency.
RiskReport mc_risk(const EstimatorSpec& spec, const CoefficientVector& theta, NoiseLevel n,
                   std::uint64_t replicates, std::uint64_t master_seed, unsigned workers = 0);

/// Max of exact_risk over the adversarial family built from the estimator's
/// own schedule; ties broken by first family index.
std::pair<CoefficientVector, RiskReport> worst_case_risk(const EstimatorSpec& spec,
                                                         const BallSpec& ball, NoiseLevel n);

struct WorstCase {
    std::size_t family_index;
    RiskReport report;
};

/// Same, over an externally supplied family.
WorstCase worst_case_risk_over(const EstimatorSpec& spec,
                               const std::vector<CoefficientVector>& family, NoiseLevel n);

/// Least-squares fit of ln(risk) on ln(n); needs >= 3 positive points.
RateFit rate_fit(const std::vector<std::pair<double, double>>& points);

/// Minimax (r*) and minimax-quadratic (r_q*) rate exponents as functions of
/// (p, alpha); boundary alpha = 1/(2p) belongs to the nonparametric branch.
Exponents table1_exponents(double p, double alpha);

/// Brute-force grid check of the hull equality for one diagonal rule
/// sum a_i Y_i^2 + c: sup of the exact risk over an eps-grid of the ball,
/// of its quadratic hull, and over {0, spikes 1..dim}. Lp balls, p < 2,
/// dim <= 6, grid_step <= 1e-2.
HullSupResult hull_sup_equality(const std::vector<double>& a, double c, const BallSpec& ball,
                                unsigned dim, double grid_step, NoiseLevel n);

/// The soft-threshold variance bound evaluated for the rule's schedule:
/// 2m/n^2 + 4 sum_{i<=m} theta_i^2 / n + 6 sum_tail theta_i^2 / n
/// + sum_j 2^{j-1} m (4 (2j)^{1/2} + 18) / (n^2 e^j).
double variance_bound_53(const EstimatorSpec& spec, const CoefficientVector& theta, NoiseLevel n);

}  // namespace qfe::risklab

#endif
