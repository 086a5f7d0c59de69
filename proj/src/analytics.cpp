#include "qfe/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace qfe::analytics {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr double kSqrt2 = 1.4142135623730950488016887;

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Truncated standard normal moments over (c, inf):
//   T0 = P(Z > c), T1 = phi(c), T2 = T0 + c phi, T3 = (c^2 + 2) phi,
//   T4 = 3 T0 + (c^3 + 3c) phi.
struct TailMoments {
    double t0, t1, t2, t3, t4;
};

TailMoments tail_moments(double c) {
    const double t0 = gauss_upper_tail(c);
    const double t1 = gauss_density(c);
    return {t0, t1, t0 + c * t1, (c * c + 2.0) * t1, 3.0 * t0 + (c * c * c + 3.0 * c) * t1};
}

}  // namespace

double erfcx(double x) {
    if (x < 0.0) return 2.0 * std::exp(x * x) - erfcx(-x);
    if (x < 26.0) return std::exp(x * x) * std::erfc(x);
    // Asymptotic series 1/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4) - ...);
    // at x >= 26 ten terms are far below double precision.
    const double inv2x2 = 1.0 / (2.0 * x * x);
    double term = 1.0, sum = 1.0;
    for (int k = 1; k <= 10; ++k) {
        term *= -(2.0 * k - 1.0) * inv2x2;
        sum += term;
    }
    return sum / (x * 1.7724538509055160272981675);
}

double gauss_upper_tail(double z) { return 0.5 * std::erfc(z / kSqrt2); }

double gauss_upper_tail_scaled(double z) { return 0.5 * erfcx(z / kSqrt2); }

double gauss_density(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

ThresholdMoments soft_moments(double theta, NoiseLevel n, double t) {
    require(t >= 0.0, "soft_moments: threshold t must be >= 0");
    const double sigma = 1.0 / std::sqrt(n.n);
    const double a = std::sqrt(t);
    const double cr = (a - theta) / sigma;  // right crossing, x = +a
    const double cl = (a + theta) / sigma;  // left crossing, x = -a
    const TailMoments R = tail_moments(cr);
    const TailMoments L = tail_moments(cl);
    const double s2 = sigma * sigma;

    // (x^2 - t) with x = theta + sigma z expands to
    //   (theta^2 + s2 - t) + 2 theta sigma z + s2 (z^2 - 1).
    const double m1 = (theta * theta + s2 - t) * (R.t0 + L.t0) +
                      (2.0 * theta * sigma + s2 * cr) * R.t1 +
                      (-2.0 * theta * sigma + s2 * cl) * L.t1;

    // (x^2 - t)^2 expands in z with coefficients A..E; the left piece flips
    // the sign of the odd ones.
    const double A = (theta * theta - t) * (theta * theta - t);
    const double B = 4.0 * theta * sigma * (theta * theta - t);
    const double C = s2 * (6.0 * theta * theta - 2.0 * t);
    const double D = 4.0 * theta * s2 * sigma;
    const double E = s2 * s2;
    const double m2 = A * (R.t0 + L.t0) + B * (R.t1 - L.t1) + C * (R.t2 + L.t2) +
                      D * (R.t3 - L.t3) + E * (R.t4 + L.t4);
    return {m1, m2};
}

ThresholdMoments hard_moments(double theta, NoiseLevel n, double t) {
    require(t >= 0.0, "hard_moments: threshold t must be >= 0");
    const double sigma = 1.0 / std::sqrt(n.n);
    const double a = std::sqrt(t);
    const double cr = (a - theta) / sigma;
    const double cl = (a + theta) / sigma;
    const TailMoments R = tail_moments(cr);
    const TailMoments L = tail_moments(cl);
    const double s2 = sigma * sigma;

    // x^2 = theta^2 + 2 theta sigma z + s2 z^2.
    const double m1 = theta * theta * (R.t0 + L.t0) + 2.0 * theta * sigma * (R.t1 - L.t1) +
                      s2 * (R.t2 + L.t2);

    // x^4 = theta^4 + 4 theta^3 sigma z + 6 theta^2 s2 z^2 + 4 theta s2 sigma z^3 + s2^2 z^4.
    const double t2 = theta * theta;
    const double m2 = t2 * t2 * (R.t0 + L.t0) + 4.0 * t2 * theta * sigma * (R.t1 - L.t1) +
                      6.0 * t2 * s2 * (R.t2 + L.t2) + 4.0 * theta * s2 * sigma * (R.t3 - L.t3) +
                      s2 * s2 * (R.t4 + L.t4);
    return {m1, m2};
}

double centering_constant(NoiseLevel n, double tau, TailKind kind) {
    if (kind == TailKind::soft) {
        require(tau >= 1.0, "centering_constant: soft centering needs tau >= 1");
        // mu0 = (2 sqrt(tau) phi(sqrt(tau)) - 2 (tau - 1) Phi~(sqrt(tau))) / n,
        // with e^{-tau/2} factored out so the bracket is evaluated in scaled
        // space and large tau cannot underflow intermediates.
        const double rt = std::sqrt(tau);
        const double bracket =
            2.0 * rt * kInvSqrt2Pi - 2.0 * (tau - 1.0) * gauss_upper_tail_scaled(rt);
        return std::exp(-0.5 * tau) * bracket / n.n;
    }
    require(tau >= 0.0, "centering_constant: hard centering needs tau >= 0");
    // rho0 = 2 (Phi~(sqrt(tau)) + sqrt(tau) phi(sqrt(tau))) / n.
    const double rt = std::sqrt(tau);
    const double bracket = 2.0 * (gauss_upper_tail_scaled(rt) + rt * kInvSqrt2Pi);
    return std::exp(-0.5 * tau) * bracket / n.n;
}

Lemma1Report lemma1_check(double theta, NoiseLevel n, double tau) {
    require(tau >= 1.0, "lemma1_check: tau must be >= 1");
    const double mu0 = centering_constant(n, tau, TailKind::soft);
    const double t = tau / n.n;
    const ThresholdMoments sm = soft_moments(theta, n, t);
    Lemma1Report rep{};
    rep.mu0 = mu0;
    // The zero point is taken through the same moment path so the bias at
    // theta = 0 is identically zero (same-argument call); it agrees with
    // mu0 to rounding.
    rep.bias = sm.m1 - soft_moments(0.0, n, t).m1 - theta * theta;
    rep.variance = sm.variance();
    rep.bound_mu0 = 4.0 / (2.5066282746310005024157653 * n.n * std::sqrt(tau)) *
                    std::exp(-0.5 * tau);
    rep.bound_bias = std::min(2.0 * tau / n.n, theta * theta);
    rep.bound_var = 6.0 * theta * theta / n.n +
                    (4.0 * std::sqrt(tau) + 18.0) / (n.n * n.n) * std::exp(-0.5 * tau);
    constexpr double slack = 1e-12;
    rep.all_bounds_hold = std::fabs(rep.mu0) <= rep.bound_mu0 + slack &&
                          std::fabs(rep.bias) <= rep.bound_bias + slack &&
                          rep.variance <= rep.bound_var + slack;
    return rep;
}

namespace {

// Adaptive Simpson on a smooth piece.
struct SimpsonCtx {
    double theta, sigma, t;
    TailKind kind;
    int power;

    // Evaluated only on the exceedance region x^2 >= t, where both statistic
    // kinds are smooth; the complement contributes 0 and is never integrated.
    double f(double x) const {
        double g = (kind == TailKind::soft) ? std::max(x * x - t, 0.0) : x * x;
        if (power == 2) g *= g;
        const double z = (x - theta) / sigma;
        return g * kInvSqrt2Pi * std::exp(-0.5 * z * z) / sigma;
    }
};

double simpson_rec(const SimpsonCtx& ctx, double a, double m, double b, double fa, double fm,
                   double fb, double whole, double tol, int depth) {
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = ctx.f(lm), frm = ctx.f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    // A minimum depth guards against an accidentally small first correction.
    if ((depth >= 4 && std::fabs(delta) <= 15.0 * tol) ||
        (b - a) < 1e-14 * (1.0 + std::fabs(a)))
        return left + right + delta / 15.0;
    if (depth > 60) throw std::runtime_error("quad_oracle: refinement cap exceeded");
    return simpson_rec(ctx, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
           simpson_rec(ctx, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

double simpson_piece(const SimpsonCtx& ctx, double a, double b, double tol) {
    if (b <= a) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = ctx.f(a), fm = ctx.f(m), fb = ctx.f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(ctx, a, m, b, fa, fm, fb, whole, tol, 0);
}

}  // namespace

double quad_oracle(double theta, NoiseLevel n, double t, TailKind kind, int power) {
    require(t >= 0.0, "quad_oracle: threshold t must be >= 0");
    require(power == 1 || power == 2, "quad_oracle: power must be 1 or 2");
    const double sigma = 1.0 / std::sqrt(n.n);
    const SimpsonCtx ctx{theta, sigma, t, kind, power};
    const double lo = theta - 12.0 * sigma;
    const double hi = theta + 12.0 * sigma;
    // The statistic vanishes on x^2 < t; integrate the two exceedance pieces.
    const double a = std::sqrt(t);
    std::pair<double, double> pieces[2];
    int np = 0;
    if (a == 0.0) {
        pieces[np++] = {lo, hi};
    } else {
        if (-a > lo) pieces[np++] = {lo, -a};
        if (a < hi) pieces[np++] = {a, hi};
    }

    // Two passes: a rough value to scale the tolerance, then the real one.
    // The contract is absolute 1e-12 (1 + |result|); refinement additionally
    // targets relative 1e-12 so small results remain comparable in relative
    // terms.
    double rough = 0.0;
    for (int i = 0; i < np; ++i) {
        const double scale = std::max(std::fabs(simpson_piece(ctx, pieces[i].first,
                                                              pieces[i].second, 1e30)),
                                      1e-300);
        rough += simpson_piece(ctx, pieces[i].first, pieces[i].second, 1e-6 * scale);
    }
    const double tol =
        std::min(1e-12 * (1.0 + std::fabs(rough)), std::max(1e-12 * std::fabs(rough), 1e-290));
    double total = 0.0;
    for (int i = 0; i < np; ++i)
        total += simpson_piece(ctx, pieces[i].first, pieces[i].second, 0.5 * tol);
    return total;
}

}  // namespace qfe::analytics
