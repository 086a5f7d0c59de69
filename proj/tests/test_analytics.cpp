#include <doctest.h>

#include <cmath>
#include <vector>

#include "qfe/analytics.hpp"
#include "qfe/rng.hpp"

using namespace qfe;
using analytics::TailKind;
using model::NoiseLevel;

namespace {

double rel_err(double got, double want) {
    return std::fabs(got - want) / std::max(1e-300, std::fabs(want));
}

}  // namespace

TEST_CASE("gaussian upper tail") {
    CHECK(analytics::gauss_upper_tail(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    // Quadrature of the density over [3, 40] gives 1.3498980316300946e-3.
    CHECK(rel_err(analytics::gauss_upper_tail(3.0), 1.3498980316300946e-3) < 1e-12);
    for (double z : {-3.0, -1.0, -0.25, 0.5, 2.0}) {
        CHECK(analytics::gauss_upper_tail(-z) ==
              doctest::Approx(1.0 - analytics::gauss_upper_tail(z)).epsilon(1e-14));
    }
    // Scaled tail recovers the plain tail and stays finite far out.
    for (double z : {0.5, 2.0, 8.0, 20.0, 36.0}) {
        CHECK(rel_err(analytics::gauss_upper_tail_scaled(z) * std::exp(-0.5 * z * z),
                      analytics::gauss_upper_tail(z)) < 1e-12);
    }
    CHECK(analytics::gauss_upper_tail_scaled(60.0) > 0.0);
    CHECK(std::isfinite(analytics::gauss_upper_tail_scaled(60.0)));
    // Monotone decreasing.
    double prev = 1.0;
    for (double z = -6.0; z <= 38.0; z += 0.5) {
        const double v = analytics::gauss_upper_tail(z);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("normal quantile inverts the tail") {
    for (double p : {0.4, 0.1, 1e-3, 1e-8, 1e-16, 1e-40, 1e-120, 1e-250}) {
        const double z = rng::normal_upper_quantile(p);
        CHECK(rel_err(analytics::gauss_upper_tail(z), p) < 1e-10);
    }
}

TEST_CASE("soft moments: anchors and raw-moment identities") {
    const auto m = analytics::soft_moments(0.0, NoiseLevel(1.0), 1.0);
    // m1 = 2 phi(1); frozen against the quadrature oracle.
    CHECK(rel_err(m.m1, 4.839414490382867e-01) < 1e-12);

    rng::Stream s(3);
    for (int rep = 0; rep < 30; ++rep) {
        const double theta = 3.0 * s.next_normal();
        const double nn = std::exp(3.0 * s.next_unit_open());
        const auto raw = analytics::soft_moments(theta, NoiseLevel(nn), 0.0);
        CHECK(rel_err(raw.m1, theta * theta + 1.0 / nn) < 1e-12);
        const double want_m2 = std::pow(theta, 4) + 6.0 * theta * theta / nn + 3.0 / (nn * nn);
        CHECK(rel_err(raw.m2, want_m2) < 1e-11);
    }

    // Sign symmetry.
    const auto a = analytics::soft_moments(0.3, NoiseLevel(4.0), 0.5);
    const auto b = analytics::soft_moments(-0.3, NoiseLevel(4.0), 0.5);
    CHECK(a.m1 == doctest::Approx(b.m1).epsilon(1e-14));
    CHECK(a.m2 == doctest::Approx(b.m2).epsilon(1e-14));
}

TEST_CASE("hard moments: anchors and limits") {
    const auto m = analytics::hard_moments(0.0, NoiseLevel(1.0), 1.0);
    // m1 = 2 (phi(1) + Phi~(1)); frozen against the quadrature oracle.
    CHECK(rel_err(m.m1, 8.012519569012009e-01) < 1e-12);

    const auto raw = analytics::hard_moments(0.7, NoiseLevel(5.0), 0.0);
    CHECK(rel_err(raw.m1, 0.49 + 0.2) < 1e-12);

    // m1 decreasing to zero in t.
    double prev = std::numeric_limits<double>::infinity();
    for (double t : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
        const double m1 = analytics::hard_moments(0.9, NoiseLevel(2.0), t).m1;
        CHECK(m1 <= prev * (1.0 + 1e-14));
        prev = m1;
    }
    CHECK(prev < 1e-8);
}

TEST_CASE("centering constants") {
    CHECK(rel_err(analytics::centering_constant(NoiseLevel(1.0), 1.0, TailKind::soft),
                  4.839414490382867e-01) < 1e-12);
    CHECK(rel_err(analytics::centering_constant(NoiseLevel(4.0), 2.0, TailKind::soft),
                  6.445207259257742e-02) < 1e-12);
    CHECK(rel_err(analytics::centering_constant(NoiseLevel(1.0), 9.0, TailKind::soft),
                  4.992721965546532e-03) < 1e-11);
    // tau = 9 stays below the mu0 bound 4/(sqrt(2 pi) 3 e^{4.5}).
    CHECK(analytics::centering_constant(NoiseLevel(1.0), 9.0, TailKind::soft) <
          5.909131215917344e-03);

    // Both kinds equal the theta = 0 first moments.
    for (double tau : {1.0, 2.0, 7.5, 30.0}) {
        for (double nn : {1.0, 64.0, 1e4}) {
            const NoiseLevel n(nn);
            CHECK(rel_err(analytics::centering_constant(n, tau, TailKind::soft),
                          analytics::soft_moments(0.0, n, tau / nn).m1) < 1e-10);
            CHECK(rel_err(analytics::centering_constant(n, tau, TailKind::hard),
                          analytics::hard_moments(0.0, n, tau / nn).m1) < 1e-10);
        }
    }

    // Exact 1/n scale law.
    for (double tau : {1.0, 3.0, 16.0, 200.0}) {
        for (double nn : {2.0, 100.0, 1e6}) {
            CHECK(analytics::centering_constant(NoiseLevel(nn), tau, TailKind::soft) ==
                  analytics::centering_constant(NoiseLevel(1.0), tau, TailKind::soft) / nn);
        }
    }

    // Large tau does not underflow and still meets the bound.
    const auto rep = analytics::lemma1_check(0.0, NoiseLevel(1.0), 200.0);
    CHECK(rep.mu0 > 0.0);
    CHECK(rep.all_bounds_hold);

    CHECK_THROWS(analytics::centering_constant(NoiseLevel(1.0), 0.5, TailKind::soft));
    CHECK_THROWS(analytics::centering_constant(NoiseLevel(1.0), -1.0, TailKind::hard));
}

TEST_CASE("lemma audit grid") {
    // tau in {1,2,4,8,16} x sqrt(n) theta in {0,0.1,...,5} x n in {1,1e2,1e4}:
    // all 765 points satisfy the three bounds; bias at theta = 0 is exactly 0.
    int points = 0;
    for (double tau : {1.0, 2.0, 4.0, 8.0, 16.0}) {
        for (double nn : {1.0, 1e2, 1e4}) {
            const NoiseLevel n(nn);
            for (int k = 0; k <= 50; ++k) {
                const double theta = 0.1 * k / std::sqrt(nn);
                const auto rep = analytics::lemma1_check(theta, n, tau);
                CHECK(rep.all_bounds_hold);
                if (k == 0) CHECK(rep.bias == 0.0);
                // Lemma 2 consequence: Var((X^2 - t)_+) <= Var(X^2).
                CHECK(rep.variance <=
                      4.0 * theta * theta / nn + 2.0 / (nn * nn) + 1e-12);
                ++points;
            }
        }
    }
    CHECK(points == 765);
    CHECK_THROWS(analytics::lemma1_check(0.0, NoiseLevel(1.0), 0.99));
}

TEST_CASE("worked lemma point: theta=1, n=1, tau=9") {
    const auto rep = analytics::lemma1_check(1.0, NoiseLevel(1.0), 9.0);
    CHECK(rep.bound_bias == doctest::Approx(1.0).epsilon(1e-15));  // min(18, 1)
    CHECK(rep.bound_var ==
          doctest::Approx(6.0 + 30.0 / std::exp(4.5)).epsilon(1e-12));
    CHECK(rep.all_bounds_hold);
}

TEST_CASE("quad oracle anchors") {
    CHECK(rel_err(analytics::quad_oracle(0.0, NoiseLevel(1.0), 1.0, TailKind::soft, 1),
                  4.839414490382867e-01) < 1e-10);
    CHECK(rel_err(analytics::quad_oracle(0.0, NoiseLevel(1.0), 0.0, TailKind::soft, 2), 3.0) <
          1e-10);
}

TEST_CASE("closed forms match the oracle on random tuples") {
    rng::Stream s(41);
    for (int rep = 0; rep < 250; ++rep) {
        const double nn = std::exp(6.0 * s.next_unit_open());  // n in (1, e^6)
        const double theta = 2.5 * s.next_normal() / std::sqrt(nn);
        const double tau = 50.0 * s.next_unit_open();
        const double t = tau / nn;
        const NoiseLevel n(nn);
        const auto sm = analytics::soft_moments(theta, n, t);
        const auto hm = analytics::hard_moments(theta, n, t);
        CHECK(rel_err(sm.m1, analytics::quad_oracle(theta, n, t, TailKind::soft, 1)) < 1e-9);
        CHECK(rel_err(sm.m2, analytics::quad_oracle(theta, n, t, TailKind::soft, 2)) < 1e-9);
        CHECK(rel_err(hm.m1, analytics::quad_oracle(theta, n, t, TailKind::hard, 1)) < 1e-9);
        CHECK(rel_err(hm.m2, analytics::quad_oracle(theta, n, t, TailKind::hard, 2)) < 1e-9);
        // Monotonicity of m1 in t.
        const auto sm2 = analytics::soft_moments(theta, n, t + 0.3);
        const auto hm2 = analytics::hard_moments(theta, n, t + 0.3);
        CHECK(sm2.m1 <= sm.m1 * (1.0 + 1e-13) + 1e-300);
        CHECK(hm2.m1 <= hm.m1 * (1.0 + 1e-13) + 1e-300);
        // m2 >= m1^2.
        CHECK(sm.m2 >= sm.m1 * sm.m1 * (1.0 - 1e-12));
        CHECK(hm.m2 >= hm.m1 * hm.m1 * (1.0 - 1e-12));
    }
}
