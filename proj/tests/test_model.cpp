#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "qfe/model.hpp"
#include "qfe/rng.hpp"

using namespace qfe;
using model::BallSpec;
using model::CoefficientVector;
using model::NoiseLevel;

namespace {

CoefficientVector dense(std::vector<double> v) { return CoefficientVector(v); }

// Random ball member: random directions scaled to a random radius.
CoefficientVector random_member(const BallSpec& ball, rng::Stream& s, std::uint64_t len) {
    std::vector<double> v(len);
    for (auto& x : v) x = s.next_normal();
    CoefficientVector raw(v);
    const double norm = model::ball_norm(ball, raw);
    if (norm == 0.0) return raw;
    const double target = ball.M * s.next_unit_open();
    return raw.scaled(target / norm);
}

}  // namespace

TEST_CASE("quadratic functional") {
    CHECK(model::quadratic_functional(dense({3, 4})) == doctest::Approx(25.0).epsilon(1e-15));
    CHECK(model::quadratic_functional(CoefficientVector()) == 0.0);
    rng::Stream s(7);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> v(8);
        for (auto& x : v) x = s.next_normal();
        const double c = 2.0 * s.next_unit_open() - 1.0;
        const CoefficientVector theta(v);
        CHECK(model::quadratic_functional(theta.scaled(c)) ==
              doctest::Approx(c * c * model::quadratic_functional(theta)).epsilon(1e-12));
    }
}

TEST_CASE("sample_observation determinism and moments") {
    const CoefficientVector theta = dense({1.0, -0.5});
    const NoiseLevel n(4.0);
    const auto y1 = model::sample_observation(theta, n, 16, 99);
    const auto y2 = model::sample_observation(theta, n, 16, 99);
    REQUIRE(y1.length() == 16);
    for (std::uint64_t i = 1; i <= 16; ++i) CHECK(y1.at(i) == y2.at(i));
    const auto y3 = model::sample_observation(theta, n, 16, 100);
    bool differs = false;
    for (std::uint64_t i = 1; i <= 16; ++i) differs |= (y1.at(i) != y3.at(i));
    CHECK(differs);

    // theta = 0, n = 1: 1e5 draws of Y1; 4-sigma moment bands.
    const std::uint64_t reps = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (std::uint64_t r = 0; r < reps; ++r) {
        const auto y = model::sample_observation(CoefficientVector(), NoiseLevel(1.0), 1, r);
        sum += y.at(1);
        sumsq += y.at(1) * y.at(1);
    }
    const double mean = sum / reps;
    const double var = sumsq / reps - mean * mean;
    CHECK(std::fabs(mean) <= 0.013);
    CHECK(var >= 0.98);
    CHECK(var <= 1.02);

    // Location shift: theta = (5), n = 1e4 keeps Y1 within the 5-sigma band.
    for (std::uint64_t r = 0; r < 200; ++r) {
        const auto y = model::sample_observation(dense({5.0}), NoiseLevel(1e4), 1, 1000 + r);
        CHECK(y.at(1) >= 4.95);
        CHECK(y.at(1) <= 5.05);
    }

    CHECK_THROWS(model::sample_observation(dense({1.0, 2.0}), n, 1, 0));
}

TEST_CASE("ball norms: worked values") {
    // Lp p=1, alpha=1.2 (s=0.7): two-term evaluation.
    const BallSpec b1 = BallSpec::lp(1.0, 1.2, 1.0);
    const double v2 = 0.3 * std::pow(2.0, -0.7);
    CHECK(model::ball_norm(b1, dense({0.5, v2})) == doctest::Approx(0.8).epsilon(1e-12));

    // Besov single coefficient at level j: 2^{js} |t| for every q.
    for (double q : {0.5, 1.0, 2.0, std::numeric_limits<double>::infinity()}) {
        const BallSpec bb = BallSpec::besov(1.5, q, 0.9, 2.0);
        const double s = bb.s();
        const std::uint64_t i = model::flat_index({3, 5});
        const auto theta = CoefficientVector::from_entries(i, {{i, 0.25}});
        CHECK(model::ball_norm(bb, theta) ==
              doctest::Approx(std::pow(2.0, 3.0 * s) * 0.25).epsilon(1e-12));
    }

    // Lp p=2 spike at index i saturates the norm at M.
    const BallSpec b2 = BallSpec::lp(2.0, 0.25, 1.5);
    const auto spike = model::spike_config(b2, std::uint64_t{7});
    CHECK(model::ball_norm(b2, spike) == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("norm homogeneity") {
    rng::Stream s(11);
    const BallSpec balls[] = {
        BallSpec::lp(1.3, 0.6, 1.0),
        BallSpec::lp(2.5, 0.3, 2.0),
        BallSpec::besov(1.5, 1.0, 0.5, 1.0),
        BallSpec::besov(1.0, std::numeric_limits<double>::infinity(), 1.0, 1.0),
    };
    for (const auto& ball : balls) {
        for (int rep = 0; rep < 25; ++rep) {
            std::vector<double> v(13);
            for (auto& x : v) x = s.next_normal();
            const double c = 3.0 * (s.next_unit_open() - 0.5);
            const CoefficientVector theta(v);
            CHECK(model::ball_norm(ball, theta.scaled(c)) ==
                  doctest::Approx(std::fabs(c) * model::ball_norm(ball, theta)).epsilon(1e-10));
        }
    }
}

TEST_CASE("besov index bijection") {
    std::uint64_t bad = 0;
    for (std::uint64_t i = 1; i <= (std::uint64_t{1} << 20); ++i) {
        const auto jk = model::besov_index(i);
        bad += (model::flat_index(jk) != i) || (jk.k >= (std::uint64_t{1} << jk.j));
    }
    CHECK(bad == 0);
    CHECK(model::flat_index({0, 0}) == 1);
    CHECK(model::flat_index({4, 3}) == 19);
}

TEST_CASE("contains: spikes sit exactly on the boundary") {
    const BallSpec balls[] = {BallSpec::lp(1.0, 1.2, 1.0), BallSpec::lp(1.5, 0.25, 1.0),
                              BallSpec::besov(1.5, 2.0, 0.9, 2.0)};
    for (const auto& ball : balls) {
        CHECK(model::contains(ball, CoefficientVector::zero(4)));
        for (std::uint64_t i : {1, 2, 16, 333}) {
            const auto spike = model::spike_config(ball, i);
            CHECK(model::contains(ball, spike));
            CHECK(model::ball_norm(ball, spike) == doctest::Approx(ball.M).epsilon(1e-13));
            CHECK_FALSE(model::contains(ball, spike.scaled(1.0 + 1e-6)));
        }
    }
    // Lp(p=1, alpha=1.2), i = 1: the spike is exactly (1).
    CHECK(model::spike_config(BallSpec::lp(1.0, 1.2, 1.0), std::uint64_t{1}).at(1) ==
          doctest::Approx(1.0).epsilon(1e-15));
    // Lp(p=1.5, alpha=0.25), i = 16: height 16^{-1/12}.
    CHECK(model::spike_config(BallSpec::lp(1.5, 0.25, 1.0), std::uint64_t{16}).at(16) ==
          doctest::Approx(0.7937005259840998).epsilon(1e-12));
    // Besov s = 0.5, level-4 spike: height M / 4.
    const BallSpec bb = BallSpec::besov(2.0, 1.0, 0.5, 2.0);
    CHECK(model::spike_config(bb, model::BesovIndex{4, 0}).at(16) ==
          doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("quadratic hull") {
    const BallSpec h1 = model::quadratic_hull(BallSpec::lp(1.0, 1.2, 1.0));
    CHECK(h1.p == 2.0);
    CHECK(h1.alpha == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(h1.M == 1.0);

    const BallSpec h2 = model::quadratic_hull(BallSpec::besov(1.5, 1.0, 0.9, 2.0));
    CHECK(h2.p == 2.0);
    CHECK(h2.q == 1.0);
    CHECK(h2.alpha == doctest::Approx(0.9 + 0.5 - 2.0 / 3.0).epsilon(1e-12));

    const BallSpec already = BallSpec::lp(2.0, 0.3, 1.0);
    const BallSpec same = model::quadratic_hull(already);
    CHECK(same.p == already.p);
    CHECK(same.alpha == already.alpha);

    for (const auto& ball : {BallSpec::lp(1.2, 0.9, 1.0), BallSpec::besov(1.8, 2.0, 0.4, 1.0)}) {
        const BallSpec once = model::quadratic_hull(ball);
        const BallSpec twice = model::quadratic_hull(once);
        CHECK(once.p == twice.p);
        CHECK(once.alpha == twice.alpha);
        CHECK(once.M == twice.M);
    }
}

TEST_CASE("hull monotonicity witness") {
    rng::Stream s(23);
    for (const auto& ball : {BallSpec::lp(1.0, 1.2, 1.0), BallSpec::lp(1.5, 0.25, 1.0),
                             BallSpec::besov(1.2, 2.0, 0.8, 1.5)}) {
        const BallSpec hull = model::quadratic_hull(ball);
        for (int rep = 0; rep < 1000; ++rep) {
            const auto theta = random_member(ball, s, 24);
            REQUIRE(model::contains(ball, theta));
            CHECK(model::contains(hull, theta));
        }
    }
}

TEST_CASE("adversarial family contract") {
    const NoiseLevel n(256.0);
    for (const auto& ball : {BallSpec::lp(1.5, 0.25, 1.0), BallSpec::lp(1.25, 0.5, 1.0),
                             BallSpec::besov(1.5, 2.0, 0.4, 1.0)}) {
        const model::ScheduleView sched{16, 3};
        const auto family = model::adversarial_family(ball, sched, n);
        CHECK(family.size() >= sched.blocks + 2);
        CHECK(family.size() <= 4 * (sched.blocks + 2) + 3);
        bool has_zero = false;
        for (const auto& member : family) {
            CHECK(model::contains(ball, member));
            has_zero |= member.entries().empty();
        }
        CHECK(has_zero);
        // Q(theta) <= M^2 on every member when p < 2 (worst case: index-1 spike).
        if (ball.p < 2.0) {
            for (const auto& member : family)
                CHECK(model::quadratic_functional(member) <= ball.M * ball.M * (1.0 + 1e-12));
        }
        // Determinism.
        const auto family2 = model::adversarial_family(ball, sched, n);
        REQUIRE(family.size() == family2.size());
        for (std::size_t i = 0; i < family.size(); ++i) {
            REQUIRE(family[i].entries().size() == family2[i].entries().size());
            for (std::size_t e = 0; e < family[i].entries().size(); ++e) {
                CHECK(family[i].entries()[e].index == family2[i].entries()[e].index);
                CHECK(family[i].entries()[e].value == family2[i].entries()[e].value);
            }
        }
    }
}

TEST_CASE("coefficient vector basics") {
    CHECK_THROWS(dense({1.0, std::nan("")}));
    CHECK_THROWS(CoefficientVector::from_entries(4, {{5, 1.0}}));
    CHECK_THROWS(CoefficientVector::from_entries(4, {{2, 1.0}, {2, 2.0}}));
    const auto v = CoefficientVector::from_entries(10, {{3, 1.5}, {7, -2.0}});
    CHECK(v.at(3) == 1.5);
    CHECK(v.at(7) == -2.0);
    CHECK(v.at(5) == 0.0);
    CHECK(v.at(10) == 0.0);
    CHECK(v.length() == 10);
    CHECK_THROWS(NoiseLevel(0.0));
    CHECK_THROWS(NoiseLevel(-1.0));
}
