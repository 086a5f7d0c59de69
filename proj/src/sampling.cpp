#include "sampling.hpp"

#include <algorithm>
#include <stdexcept>

namespace qfe::sampling {

namespace {

constexpr std::uint64_t kMaxExplicitSlots = std::uint64_t{1} << 22;

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Plan make_plan(const EstimatorSpec& spec, const CoefficientVector& theta, NoiseLevel n) {
    Plan plan;
    plan.n = n.n;
    plan.sigma = 1.0 / std::sqrt(n.n);

    if (const auto* dq = std::get_if<estimators::DiagQuadRule>(&spec.rule)) {
        require(dq->a.size() <= kMaxExplicitSlots, "mc: diagonal rule support too large to simulate");
        plan.kind = Plan::Kind::diag;
        plan.diag_a = dq->a;
        plan.diag_c = dq->c;
        plan.diag_theta.assign(dq->a.size(), 0.0);
        for (const auto& e : theta.entries())
            if (e.index <= dq->a.size()) plan.diag_theta[e.index - 1] = e.value;
        plan.expected_draws = static_cast<double>(dq->a.size());
        return plan;
    }

    const bool is_q1 = std::holds_alternative<estimators::Q1Rule>(spec.rule);
    const ThresholdSchedule* sc = spec.schedule();
    plan.kind = is_q1 ? Plan::Kind::quad : Plan::Kind::thresh;
    plan.m = is_q1 ? std::get<estimators::Q1Rule>(spec.rule).m : sc->m;
    plan.quad_center = static_cast<double>(plan.m) / n.n;

    std::uint64_t quad_support = 0;
    for (const auto& e : theta.entries()) {
        if (e.index <= plan.m) {
            plan.quad_support.push_back({e.index, e.value});
            ++quad_support;
        }
    }
    plan.quad_zero_dof = static_cast<double>(plan.m) - static_cast<double>(quad_support);
    plan.expected_draws = static_cast<double>(quad_support) + 2.0;

    if (is_q1) return plan;

    plan.tail = sc->tail;
    const analytics::TailKind kind = (sc->tail == Tail::soft) ? analytics::TailKind::soft
                                                              : analytics::TailKind::hard;

    // Collect tail support per block.
    std::vector<std::pair<std::uint64_t, double>> tail_support;
    std::uint64_t support_max_block = 0;
    for (const auto& e : theta.entries()) {
        if (e.index <= plan.m) continue;
        const std::uint64_t j = sc->block_of(e.index);
        if (!sc->infinite() && j > sc->blocks) continue;  // beyond coverage: unobserved by the rule
        tail_support.push_back({e.index, e.value});
        support_max_block = std::max(support_max_block, j);
    }

    // Simulation horizon: all finite blocks, or until remaining exceedance
    // and centering mass is below double precision.
    double centering = 0.0;
    std::uint64_t j = 1;
    for (;; ++j) {
        if (!sc->infinite() && j > sc->blocks) break;
        if (j > 4000) break;
        const double tau = 2.0 * static_cast<double>(j);
        const double block_size = std::ldexp(static_cast<double>(plan.m), static_cast<int>(j) - 1);
        const double q = 2.0 * analytics::gauss_upper_tail(std::sqrt(tau));
        const double mu = analytics::centering_constant(n, tau, kind);

        BlockPlan bp;
        bp.tau = tau;
        bp.exceed_prob = q;
        bp.zero_count = block_size;
        for (const auto& [idx, val] : tail_support)
            if (sc->block_of(idx) == j) bp.support.push_back({idx, val});
        bp.zero_count -= static_cast<double>(bp.support.size());
        centering += block_size * mu;
        plan.expected_draws += static_cast<double>(bp.support.size()) + q * bp.zero_count + 1.0;
        plan.blocks.push_back(std::move(bp));

        if (sc->infinite() && j >= support_max_block) {
            // Remaining blocks: exceedances ~ sum block_size * q, centering
            // ~ sum block_size * mu; both decay geometrically (~2/e per
            // block). Stop when the next block is negligible.
            const double next_mass = 2.0 * block_size *
                                     (2.0 * analytics::gauss_upper_tail(std::sqrt(tau + 2.0)));
            const double next_center = 2.0 * block_size *
                                       analytics::centering_constant(n, tau + 2.0, kind);
            if (next_mass < 1e-14 && next_center < 1e-18 * (1.0 + std::fabs(centering))) break;
        }
    }
    plan.centering_total = centering;
    return plan;
}

double sample_qhat(const Plan& plan, rng::Stream& stream) {
    if (plan.kind == Plan::Kind::diag) {
        double sum = plan.diag_c;
        for (std::size_t i = 0; i < plan.diag_a.size(); ++i) {
            const double y = plan.diag_theta[i] + plan.sigma * stream.next_normal();
            sum += plan.diag_a[i] * y * y;
        }
        return sum;
    }

    // Quadratic part: support coordinates individually, zero block as one
    // chi-square draw.
    double sum = -plan.quad_center;
    for (const auto& [idx, val] : plan.quad_support) {
        const double y = val + plan.sigma * stream.next_normal();
        sum += y * y;
    }
    sum += rng::chi_square_draw(stream, plan.quad_zero_dof) / plan.n;
    if (plan.kind == Plan::Kind::quad) return sum;

    const bool soft = (plan.tail == Tail::soft);
    for (const BlockPlan& bp : plan.blocks) {
        const double thr = bp.tau / plan.n;
        for (const auto& [idx, val] : bp.support) {
            const double y = val + plan.sigma * stream.next_normal();
            const double y2 = y * y;
            if (soft)
                sum += std::max(y2 - thr, 0.0);
            else if (y2 > thr)
                sum += y2;
        }
        // Zero coordinates: walk the exceedance positions.
        if (bp.zero_count > 0.0 && bp.exceed_prob * bp.zero_count > 1e-16) {
            double pos = rng::geometric_skip(stream, bp.exceed_prob);
            while (pos < bp.zero_count) {
                const double u = stream.next_unit_open();
                const double z = rng::normal_upper_quantile(u * (0.5 * bp.exceed_prob));
                const double z2 = z * z;
                sum += soft ? (z2 - bp.tau) / plan.n : z2 / plan.n;
                pos += 1.0 + rng::geometric_skip(stream, bp.exceed_prob);
            }
        }
    }
    return sum - plan.centering_total;
}

}  // namespace qfe::sampling
