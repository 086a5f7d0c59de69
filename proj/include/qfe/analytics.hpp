#ifndef QFE_ANALYTICS_HPP
#define QFE_ANALYTICS_HPP

#include "qfe/model.hpp"

namespace qfe::analytics {

using model::NoiseLevel;

enum class TailKind { soft, hard };

/// First two moments of a thresholded squared observation.
struct ThresholdMoments {
    double m1;  // E of the statistic
    double m2;  // E of its square
    double variance() const { return m2 - m1 * m1; }
};

/// One audit point: centered bias and variance of (X^2 - tau/n)_+ - mu0 for
/// X ~ N(theta, 1/n), compared against the analytic bounds.
struct Lemma1Report {
    double mu0;
    double bias;
    double variance;
    double bound_mu0;   // 4 / (sqrt(2 pi) n tau^{1/2} e^{tau/2})
    double bound_bias;  // min(2 tau / n, theta^2)
    double bound_var;   // 6 theta^2 / n + (4 tau^{1/2} + 18) / (n^2 e^{tau/2})
    bool all_bounds_hold;
};

/// P(Z > z) for standard normal Z, via the complementary error function.
double gauss_upper_tail(double z);

/// e^{z^2/2} P(Z > z): the scaled tail, stable for large z.
double gauss_upper_tail_scaled(double z);

/// Standard normal density.
double gauss_density(double z);

/// Scaled complementary error function e^{x^2} erfc(x).
double erfcx(double x);

/// Exact moments of (X^2 - t)_+ for X ~ N(theta, 1/n), t >= 0.
ThresholdMoments soft_moments(double theta, NoiseLevel n, double t);

/// Exact moments of X^2 1{X^2 > t} for X ~ N(theta, 1/n), t >= 0.
ThresholdMoments hard_moments(double theta, NoiseLevel n, double t);

/// mu_{n,i} (soft, tau >= 1) or rho_{n,i} (hard, tau >= 0): the theta = 0
/// mean of the thresholded statistic at threshold tau/n. Scales exactly
/// as 1/n.
double centering_constant(NoiseLevel n, double tau, TailKind kind);

/// Evaluate the centered soft-threshold statistic's bias and variance at one
/// (theta, n, tau) and compare with the analytic bounds (additive slack
/// 1e-12 on each comparison).
Lemma1Report lemma1_check(double theta, NoiseLevel n, double tau);

/// Independent brute-force check of the closed forms: adaptive quadrature of
/// the thresholded statistic (power 1 or 2) against the N(theta, 1/n)
/// density over theta +- 12 sigma. Absolute tolerance 1e-12 (1 + |result|).
/// Throws on non-convergence.
double quad_oracle(double theta, NoiseLevel n, double t, TailKind kind, int power);

}  // namespace qfe::analytics

#endif
