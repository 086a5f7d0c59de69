#include "qfe/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace qfe::estimators {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

analytics::TailKind to_analytics(Tail t) {
    require(t != Tail::none, "threshold tail kind is none");
    return t == Tail::soft ? analytics::TailKind::soft : analytics::TailKind::hard;
}

// floor with a snap to the nearest integer when pow lands within relative
// 1e-9 of one (e.g. 1024^1.2 = 4095.9999999999986).
std::uint64_t snapped_floor(double x) {
    require(x >= 0.0 && x < 9.0e18, "estimator size out of range");
    const double r = std::round(x);
    if (std::fabs(x - r) <= 1e-9 * std::max(1.0, std::fabs(x)))
        return static_cast<std::uint64_t>(r);
    return static_cast<std::uint64_t>(std::floor(x));
}

std::uint64_t resolve_m(double formula) { return std::max<std::uint64_t>(1, snapped_floor(formula)); }

// Largest j >= 0 with 2^j m <= bound; 0 when not even one block fits.
std::uint64_t solve_blocks(std::uint64_t m, double bound) {
    std::uint64_t j = 0;
    while (j < 200 && std::ldexp(static_cast<double>(m), static_cast<int>(j + 1)) <= bound) ++j;
    return j;
}

}  // namespace

double ThresholdSchedule::tau(std::uint64_t i) const {
    return 2.0 * static_cast<double>(block_of(i));
}

std::uint64_t ThresholdSchedule::block_of(std::uint64_t i) const {
    require(i > m, "block_of: index not in the threshold tail");
    std::uint64_t j = 1;
    std::uint64_t cap = m;
    while (cap <= (~std::uint64_t{0}) / 2 && i > 2 * cap) {
        cap *= 2;
        ++j;
    }
    return j;
}

double ThresholdSchedule::centering(NoiseLevel n, std::uint64_t j) const {
    return analytics::centering_constant(n, 2.0 * static_cast<double>(j), to_analytics(tail));
}

std::uint64_t ThresholdSchedule::end_index() const {
    require(!infinite(), "end_index: schedule is infinite");
    require(blocks < 63, "end_index: schedule end exceeds index range");
    const std::uint64_t factor = std::uint64_t{1} << blocks;
    require(m <= (~std::uint64_t{0}) / factor, "end_index: schedule end exceeds index range");
    return m * factor;
}

EstimatorSpec make_estimator(Name name, const BallSpec& ball, NoiseLevel n,
                             const MakeParams& params) {
    const double logn = std::log(n.n);
    require(logn > 0.0, "make_estimator: n must exceed 1");
    const double s = ball.s();
    char buf[160];

    auto with_m = [&](double formula) {
        return params.m_override ? *params.m_override : resolve_m(formula);
    };

    switch (name) {
        case Name::q1: {
            const std::uint64_t m = with_m(n.n / logn);
            std::snprintf(buf, sizeof buf, "Q1(m=%llu,n=%.17g)",
                          static_cast<unsigned long long>(m), n.n);
            return {Q1Rule{m}, buf};
        }
        case Name::q2:
        case Name::qtilde: {
            const std::uint64_t m = with_m(n.n / logn);
            const double bound = std::pow(n.n, 1.0 / (4.0 * s)) * logn;
            const std::uint64_t js = solve_blocks(m, bound);
            const Tail tail = (name == Name::q2) ? Tail::soft : Tail::hard;
            std::snprintf(buf, sizeof buf, "%s(m=%llu,J*=%llu,p=%.17g,alpha=%.17g,n=%.17g)",
                          name == Name::q2 ? "Q2" : "Qtilde",
                          static_cast<unsigned long long>(m),
                          static_cast<unsigned long long>(js), ball.p, ball.alpha, n.n);
            return {ThresholdSchedule{m, js, tail}, buf};
        }
        case Name::q3: {
            const std::uint64_t m = with_m(std::pow(n.n, ball.p / (1.0 + 2.0 * ball.p * s)));
            const double bound = std::pow(n.n, 1.0 / (4.0 * s)) * logn;
            const std::uint64_t js = solve_blocks(m, bound);
            std::snprintf(buf, sizeof buf, "Q3(m=%llu,J*=%llu,p=%.17g,alpha=%.17g,n=%.17g)",
                          static_cast<unsigned long long>(m),
                          static_cast<unsigned long long>(js), ball.p, ball.alpha, n.n);
            return {ThresholdSchedule{m, js, Tail::soft}, buf};
        }
        case Name::q4: {
            require(params.gamma && *params.gamma > 1.0, "make_estimator: q4 needs gamma > 1");
            const std::uint64_t m = with_m(n.n / logn);
            const double bound = std::pow(n.n, *params.gamma) * logn;
            const std::uint64_t js = solve_blocks(m, bound);
            std::snprintf(buf, sizeof buf, "Q4(m=%llu,J*=%llu,gamma=%.17g,n=%.17g)",
                          static_cast<unsigned long long>(m),
                          static_cast<unsigned long long>(js), *params.gamma, n.n);
            return {ThresholdSchedule{m, js, Tail::soft}, buf};
        }
        case Name::q5: {
            const std::uint64_t m = with_m(n.n / logn);
            std::snprintf(buf, sizeof buf, "Q5(m=%llu,n=%.17g)",
                          static_cast<unsigned long long>(m), n.n);
            return {ThresholdSchedule{m, ThresholdSchedule::kInfinite, Tail::soft}, buf};
        }
        case Name::q6: {
            require(params.r && *params.r > 0.0 && *params.r < 1.0,
                    "make_estimator: q6 needs 0 < r < 1");
            const std::uint64_t m = with_m(std::pow(n.n, 2.0 - *params.r));
            std::snprintf(buf, sizeof buf, "Q6(m=%llu,r=%.17g,n=%.17g)",
                          static_cast<unsigned long long>(m), *params.r, n.n);
            return {ThresholdSchedule{m, ThresholdSchedule::kInfinite, Tail::soft}, buf};
        }
    }
    throw std::invalid_argument("make_estimator: unknown name");
}

double estimate(const EstimatorSpec& spec, const CoefficientVector& y, NoiseLevel n) {
    if (const auto* q1 = std::get_if<Q1Rule>(&spec.rule)) {
        require(y.length() >= q1->m, "estimate: observation vector too short");
        double sum = 0.0;
        for (const auto& e : y.entries()) {
            if (e.index > q1->m) break;
            sum += e.value * e.value;
        }
        return sum - static_cast<double>(q1->m) / n.n;
    }
    if (const auto* dq = std::get_if<DiagQuadRule>(&spec.rule)) {
        require(y.length() >= dq->a.size(), "estimate: observation vector too short");
        double sum = 0.0;
        for (const auto& e : y.entries()) {
            if (e.index > dq->a.size()) break;
            sum += dq->a[e.index - 1] * e.value * e.value;
        }
        return sum + dq->c;
    }

    const auto& sc = std::get<ThresholdSchedule>(spec.rule);
    require(sc.m >= 1, "estimate: schedule m must be >= 1");
    require(y.length() >= sc.m, "estimate: observation vector too short");
    std::uint64_t cover_end;
    if (sc.infinite()) {
        cover_end = y.length();  // infinite tail truncated at the data
    } else {
        cover_end = sc.end_index();
        require(y.length() >= cover_end, "estimate: observation vector too short");
    }

    double sum = 0.0;
    const analytics::TailKind kind = to_analytics(sc.tail);
    for (const auto& e : y.entries()) {
        const double y2 = e.value * e.value;
        if (e.index <= sc.m) {
            sum += y2;
        } else if (e.index <= cover_end) {
            const double thr = sc.tau(e.index) / n.n;
            if (kind == analytics::TailKind::soft)
                sum += std::max(y2 - thr, 0.0);
            else if (y2 > thr)
                sum += y2;
        }
    }
    sum -= static_cast<double>(sc.m) / n.n;

    // Centering: constant within a block, summed over the covered range.
    std::uint64_t block_lo = sc.m + 1;
    for (std::uint64_t j = 1; block_lo <= cover_end; ++j) {
        const std::uint64_t block_hi =
            (block_lo - 1 > cover_end / 2) ? cover_end : std::min(2 * (block_lo - 1), cover_end);
        const double count = static_cast<double>(block_hi - block_lo + 1);
        sum -= count * sc.centering(n, j);
        if (block_hi == cover_end) break;
        block_lo = block_hi + 1;
    }
    return sum;
}

double omega_r_alpha(double p, double r) {
    require(p > 0.0 && p < 2.0, "omega_r_alpha: requires 0 < p < 2");
    require(r > 0.0 && r < 1.0, "omega_r_alpha: requires 0 < r < 1");
    const double s = (p / (2.0 - r) - 1.0) / (2.0 * p);
    require(s > 0.0, "omega_r_alpha: no solution with s > 0");
    const double alpha = s - 0.5 + 1.0 / p;
    require(alpha > 0.0 && alpha < 1.0 / (2.0 * p),
            "omega_r_alpha: alpha outside the region 0 < alpha < 1/(2p)");
    return alpha;
}

double q4_efficiency_region(double p, double gamma) {
    require(p > 0.0 && p < 2.0, "q4_efficiency_region: requires 0 < p < 2");
    require(gamma > 1.0, "q4_efficiency_region: requires gamma > 1");
    const double inv2p = 1.0 / (2.0 * p);
    return inv2p + std::max(0.0, inv2p - 0.5 + 1.0 / (4.0 * gamma));
}

model::ScheduleView schedule_view(const EstimatorSpec& spec, NoiseLevel n) {
    if (const auto* q1 = std::get_if<Q1Rule>(&spec.rule)) return {q1->m, 0};
    if (const auto* dq = std::get_if<DiagQuadRule>(&spec.rule))
        return {std::max<std::uint64_t>(1, dq->a.size()), 0};
    const auto& sc = std::get<ThresholdSchedule>(spec.rule);
    std::uint64_t blocks = sc.blocks;
    if (sc.infinite())
        blocks = static_cast<std::uint64_t>(std::ceil(std::log2(std::max(n.n, 2.0))));
    return {sc.m, blocks};
}

std::vector<CoefficientVector> adversarial_family(const BallSpec& ball,
                                                  const EstimatorSpec& est, NoiseLevel n) {
    return model::adversarial_family(ball, schedule_view(est, n), n);
}

}  // namespace qfe::estimators
