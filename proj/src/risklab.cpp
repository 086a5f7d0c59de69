#include "qfe/risklab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "qfe/analytics.hpp"
#include "qfe/rng.hpp"
#include "sampling.hpp"

namespace qfe::risklab {

namespace {

using estimators::DiagQuadRule;
using estimators::Q1Rule;
using estimators::Tail;
using estimators::ThresholdSchedule;

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Neumaier compensated accumulator.
struct Kahan {
    double sum = 0.0, comp = 0.0;
    void add(double x) {
        const double t = sum + x;
        comp += (std::fabs(sum) >= std::fabs(x)) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + comp; }
};

RiskReport exact_risk_diag(const std::vector<double>& a, double c,
                           const CoefficientVector& theta, NoiseLevel n) {
    // V = 4 sum a_i^2 theta_i^2 / n + 2 sum a_i^2 / n^2,
    // B = sum a_i theta_i^2 + sum a_i / n + c - sum theta_i^2.
    double sum_a = 0.0, sum_a2 = 0.0;
    for (double ai : a) {
        sum_a += ai;
        sum_a2 += ai * ai;
    }
    double bias = sum_a / n.n + c;
    double var = 2.0 * sum_a2 / (n.n * n.n);
    for (const auto& e : theta.entries()) {
        const double t2 = e.value * e.value;
        const double ai = (e.index <= a.size()) ? a[e.index - 1] : 0.0;
        bias += (ai - 1.0) * t2;
        var += 4.0 * ai * ai * t2 / n.n;
    }
    RiskReport rep;
    rep.bias = bias;
    rep.variance = var;
    rep.risk = bias * bias + var;
    rep.per_block.push_back({0, bias, var});
    return rep;
}

RiskReport exact_risk_q1(std::uint64_t m, const CoefficientVector& theta, NoiseLevel n) {
    double bias = 0.0;
    double var = 2.0 * static_cast<double>(m) / (n.n * n.n);
    for (const auto& e : theta.entries()) {
        const double t2 = e.value * e.value;
        if (e.index <= m)
            var += 4.0 * t2 / n.n;
        else
            bias -= t2;
    }
    RiskReport rep;
    rep.bias = bias;
    rep.variance = var;
    rep.risk = bias * bias + var;
    rep.per_block.push_back({0, 0.0, var});
    if (bias != 0.0) rep.per_block.push_back({-1, bias, 0.0});
    return rep;
}

RiskReport exact_risk_thresh(const ThresholdSchedule& sc, const CoefficientVector& theta,
                             NoiseLevel n, const BallSpec* ball) {
    require(sc.m >= 1, "exact_risk: schedule m must be >= 1");
    const analytics::TailKind kind =
        (sc.tail == Tail::soft) ? analytics::TailKind::soft : analytics::TailKind::hard;
    RiskReport rep;
    Kahan bias, var;

    // Quadratic part.
    {
        double v = 2.0 * static_cast<double>(sc.m) / (n.n * n.n);
        for (const auto& e : theta.entries())
            if (e.index <= sc.m) v += 4.0 * e.value * e.value / n.n;
        var.add(v);
        rep.per_block.push_back({0, 0.0, v});
    }

    // Tail support grouped by block; beyond-schedule support is pure bias.
    std::uint64_t support_max_block = 0;
    double beyond_bias = 0.0;
    std::vector<std::pair<std::uint64_t, double>> tail_support;  // (block, theta)
    for (const auto& e : theta.entries()) {
        if (e.index <= sc.m) continue;
        const std::uint64_t j = sc.block_of(e.index);
        if (!sc.infinite() && j > sc.blocks) {
            beyond_bias -= e.value * e.value;
            continue;
        }
        tail_support.push_back({j, e.value});
        support_max_block = std::max(support_max_block, j);
    }

    const double n2 = n.n * n.n;
    std::uint64_t j = 1;
    for (;; ++j) {
        if (!sc.infinite() && j > sc.blocks) break;
        if (j > 4000) break;
        const double tau = 2.0 * static_cast<double>(j);
        const double t = tau / n.n;
        const double block_size = std::ldexp(static_cast<double>(sc.m), static_cast<int>(j) - 1);
        const double mu = sc.centering(n, j);

        double b_blk = 0.0, v_blk = 0.0;
        std::uint64_t nsupp = 0;
        for (const auto& [bj, val] : tail_support) {
            if (bj != j) continue;
            const analytics::ThresholdMoments tm = (kind == analytics::TailKind::soft)
                                                       ? analytics::soft_moments(val, n, t)
                                                       : analytics::hard_moments(val, n, t);
            b_blk += tm.m1 - mu - val * val;
            v_blk += tm.variance();
            ++nsupp;
        }
        // Zero-theta coordinates: centered mean is 0 by construction; only
        // the common variance remains, aggregated for the whole block.
        const double zeros = block_size - static_cast<double>(nsupp);
        const analytics::ThresholdMoments zm = (kind == analytics::TailKind::soft)
                                                   ? analytics::soft_moments(0.0, n, t)
                                                   : analytics::hard_moments(0.0, n, t);
        const double v_zero = zeros * zm.variance();
        v_blk += v_zero;

        bias.add(b_blk);
        var.add(v_blk);
        rep.per_block.push_back({static_cast<std::int64_t>(j), b_blk, v_blk});

        if (sc.infinite() && j >= support_max_block) {
            // Zero-block variance terms decay ~ (2/e)^j; stop when converged.
            if (v_zero < 1e-18 * (1.0 + var.value()) && zeros > 0.0) break;
            // A block of only support coordinates cannot trigger the zero
            // test; bound the remaining mass directly.
            if (zeros == 0.0 && 4.0 * block_size * (4.0 * std::sqrt(tau) + 18.0) *
                                        std::exp(-0.5 * tau) / n2 <
                                    1e-18 * (1.0 + var.value()))
                break;
        }
    }

    if (beyond_bias != 0.0) {
        bias.add(beyond_bias);
        rep.per_block.push_back({-1, beyond_bias, 0.0});
    }

    if (sc.infinite() && ball != nullptr) {
        // Ball-wide squared-mass bound beyond the evaluation horizon,
        // sum_{l >= j} M^2 2^{-2ls'} with the block scale anchored at m.
        const double s = ball->s();
        const double horizon = std::ldexp(static_cast<double>(sc.m), static_cast<int>(j));
        rep.truncation_bias_bound = ball->M * ball->M * std::pow(horizon, -2.0 * s) /
                                    (1.0 - std::pow(2.0, -2.0 * s));
    }

    rep.bias = bias.value();
    rep.variance = var.value();
    rep.risk = rep.bias * rep.bias + rep.variance;
    return rep;
}

}  // namespace

RiskReport exact_risk(const EstimatorSpec& spec, const CoefficientVector& theta, NoiseLevel n,
                      const BallSpec* ball) {
    if (const auto* dq = std::get_if<DiagQuadRule>(&spec.rule))
        return exact_risk_diag(dq->a, dq->c, theta, n);
    if (const auto* q1 = std::get_if<Q1Rule>(&spec.rule)) return exact_risk_q1(q1->m, theta, n);
    return exact_risk_thresh(std::get<ThresholdSchedule>(spec.rule), theta, n, ball);
}

RiskReport mc_risk(const EstimatorSpec& spec, const CoefficientVector& theta, NoiseLevel n,
                   std::uint64_t replicates, std::uint64_t master_seed, unsigned workers) {
    require(replicates >= 2, "mc_risk: need at least 2 replicates");
    const sampling::Plan plan = sampling::make_plan(spec, theta, n);
    require(plan.expected_draws <= 4e6, "mc_risk: schedule too large to simulate");

    std::vector<double> est(replicates);
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<std::uint64_t>(workers, replicates);

    auto run = [&](std::uint64_t lo, std::uint64_t hi) {
        for (std::uint64_t r = lo; r < hi; ++r) {
            rng::Stream stream(rng::key2(master_seed, r));
            est[r] = sampling::sample_qhat(plan, stream);
        }
    };
    if (workers <= 1) {
        run(0, replicates);
    } else {
        std::vector<std::thread> pool;
        const std::uint64_t chunk = (replicates + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            const std::uint64_t lo = w * chunk;
            const std::uint64_t hi = std::min<std::uint64_t>(lo + chunk, replicates);
            if (lo >= hi) break;
            pool.emplace_back(run, lo, hi);
        }
        for (auto& t : pool) t.join();
    }

    // Fixed-order compensated reduction: identical bytes for any worker count.
    const double q = model::quadratic_functional(theta);
    Kahan mean_acc, mse_acc;
    for (std::uint64_t r = 0; r < replicates; ++r) {
        mean_acc.add(est[r]);
        const double e = est[r] - q;
        mse_acc.add(e * e);
    }
    const double mean = mean_acc.value() / static_cast<double>(replicates);
    const double mse = mse_acc.value() / static_cast<double>(replicates);

    Kahan sq_var_acc;
    for (std::uint64_t r = 0; r < replicates; ++r) {
        const double e = est[r] - q;
        const double d = e * e - mse;
        sq_var_acc.add(d * d);
    }
    RiskReport rep;
    rep.replicates = replicates;
    rep.risk = mse;
    rep.bias = mean - q;
    rep.variance = mse - rep.bias * rep.bias;
    rep.std_error = std::sqrt(sq_var_acc.value() / static_cast<double>(replicates - 1)) /
                    std::sqrt(static_cast<double>(replicates));
    return rep;
}

std::pair<CoefficientVector, RiskReport> worst_case_risk(const EstimatorSpec& spec,
                                                         const BallSpec& ball, NoiseLevel n) {
    const auto family = estimators::adversarial_family(ball, spec, n);
    const WorstCase wc = worst_case_risk_over(spec, family, n);
    return {family[wc.family_index], wc.report};
}

WorstCase worst_case_risk_over(const EstimatorSpec& spec,
                               const std::vector<CoefficientVector>& family, NoiseLevel n) {
    require(!family.empty(), "worst_case_risk: empty family");
    WorstCase best{0, exact_risk(spec, family[0], n)};
    for (std::size_t i = 1; i < family.size(); ++i) {
        RiskReport rep = exact_risk(spec, family[i], n);
        if (rep.risk > best.report.risk) best = {i, std::move(rep)};
    }
    return best;
}

RateFit rate_fit(const std::vector<std::pair<double, double>>& points) {
    require(points.size() >= 3, "rate_fit: need at least 3 points");
    double sx = 0.0, sy = 0.0;
    for (const auto& [n, risk] : points) {
        require(n > 0.0 && risk > 0.0, "rate_fit: points must be positive");
        sx += std::log(n);
        sy += std::log(risk);
    }
    const double k = static_cast<double>(points.size());
    const double mx = sx / k, my = sy / k;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [n, risk] : points) {
        const double dx = std::log(n) - mx;
        const double dy = std::log(risk) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    require(sxx > 0.0, "rate_fit: degenerate n grid");
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (const auto& [n, risk] : points) {
        const double resid = std::log(risk) - (fit.intercept + fit.slope * std::log(n));
        ss_res += resid * resid;
    }
    fit.r_squared = (syy > 0.0) ? std::max(0.0, 1.0 - ss_res / syy) : 1.0;
    fit.points = points;
    return fit;
}

Exponents table1_exponents(double p, double alpha) {
    require(p > 0.0 && alpha > 0.0, "table1_exponents: p, alpha must be positive");
    if (p < 2.0) {
        const double s = alpha + 0.5 - 1.0 / p;
        require(s > 0.0, "table1_exponents: s <= 0");
        const double rq = std::min(1.0, 8.0 * s / (1.0 + 4.0 * s));
        const double r = (alpha > 1.0 / (2.0 * p))
                             ? 1.0
                             : (4.0 * p * s + 2.0 - p) / (1.0 + 2.0 * p * s);
        return {r, rq};
    }
    const double both = std::min(1.0, 8.0 * alpha / (1.0 + 4.0 * alpha));
    return {both, both};
}

namespace {

// Shared state of the grid enumeration: the diagonal-rule risk is linear in
// t_i = theta_i^2, risk(t) = (<w,t> + K)^2 + <u,t> + V0.
struct GridRisk {
    std::vector<double> w, u;
    double K, V0;

    double eval(const double* t, unsigned dim) const {
        double b = K, v = V0;
        for (unsigned i = 0; i < dim; ++i) {
            b += w[i] * t[i];
            v += u[i] * t[i];
        }
        return b * b + v;
    }
};

// Enumerate the nonnegative orthant grid of an Lp ball: coordinate i takes
// values k h with weight cost i^{ps} (k h)^p; the budget M^p is spent left to
// right. Returns the max risk.
double grid_max(const GridRisk& gr, const BallSpec& ball, unsigned dim, double h) {
    const double ps = ball.p * ball.s();
    const double budget = std::pow(ball.M, ball.p);

    // Per-coordinate tables of (cost, t) for k = 0.. up to the full budget.
    std::vector<std::vector<std::pair<double, double>>> tab(dim);
    for (unsigned i = 0; i < dim; ++i) {
        const double wgt = std::pow(static_cast<double>(i + 1), ps);
        for (std::uint64_t k = 0;; ++k) {
            const double x = static_cast<double>(k) * h;
            const double cost = wgt * std::pow(x, ball.p);
            if (cost > budget) break;
            tab[i].push_back({cost, x * x});
            if (k > 100000000) throw std::runtime_error("hull grid too fine");
        }
    }

    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> t(dim, 0.0);
    // Depth-first over coordinates with remaining budget.
    auto rec = [&](auto&& self, unsigned i, double used) -> void {
        if (i + 1 == dim) {
            for (const auto& [cost, ti] : tab[i]) {
                if (used + cost > budget) break;
                t[i] = ti;
                best = std::max(best, gr.eval(t.data(), dim));
            }
            t[i] = 0.0;
            return;
        }
        for (const auto& [cost, ti] : tab[i]) {
            if (used + cost > budget) break;
            t[i] = ti;
            self(self, i + 1, used + cost);
        }
        t[i] = 0.0;
    };
    rec(rec, 0, 0.0);
    return best;
}

}  // namespace

HullSupResult hull_sup_equality(const std::vector<double>& a, double c, const BallSpec& ball,
                                unsigned dim, double grid_step, NoiseLevel n) {
    require(ball.kind == model::BallKind::lp, "hull_sup_equality: Lp balls only");
    require(ball.p < 2.0, "hull_sup_equality: requires p < 2");
    require(dim >= 1 && dim <= 6, "hull_sup_equality: dim must be in [1, 6]");
    require(grid_step > 0.0 && grid_step <= 1e-2, "hull_sup_equality: grid_step must be <= 1e-2");

    GridRisk gr;
    gr.w.assign(dim, -1.0);
    gr.u.assign(dim, 0.0);
    double sum_a = 0.0, sum_a2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum_a += a[i];
        sum_a2 += a[i] * a[i];
        if (i < dim) {
            gr.w[i] = a[i] - 1.0;
            gr.u[i] = 4.0 * a[i] * a[i] / n.n;
        }
    }
    gr.K = sum_a / n.n + c;
    gr.V0 = 2.0 * sum_a2 / (n.n * n.n);

    const BallSpec hull = model::quadratic_hull(ball);
    const double sup_ball = grid_max(gr, ball, dim, grid_step);
    const double sup_hull = grid_max(gr, hull, dim, grid_step);

    // Vertex set {0, spikes}: exact risk through the same linear form.
    double sup_vertices;
    {
        std::vector<double> t(dim, 0.0);
        sup_vertices = gr.eval(t.data(), dim);
        for (unsigned i = 0; i < dim; ++i) {
            std::fill(t.begin(), t.end(), 0.0);
            const auto spike = model::spike_config(ball, std::uint64_t{i + 1});
            t[i] = spike.entries()[0].value * spike.entries()[0].value;
            sup_vertices = std::max(sup_vertices, gr.eval(t.data(), dim));
        }
    }

    // Certified resolution error: |risk(x) - risk(y)| <= sum_i L_i |x_i - y_i|
    // with L_i = 2 T_i (2 Bmax |w_i| + u_i) on the bounding box T_i = M i^{-s}.
    double bmax = std::fabs(gr.K);
    for (unsigned i = 0; i < dim; ++i) {
        const double ti_max = ball.M * ball.M * std::pow(static_cast<double>(i + 1), -2.0 * ball.s());
        bmax += std::fabs(gr.w[i]) * ti_max;
    }
    double lip = 0.0;
    for (unsigned i = 0; i < dim; ++i) {
        const double t_cap = ball.M * std::pow(static_cast<double>(i + 1), -ball.s());
        lip += 2.0 * t_cap * (2.0 * bmax * std::fabs(gr.w[i]) + gr.u[i]);
    }
    return {sup_ball, sup_hull, sup_vertices, lip * grid_step};
}

double variance_bound_53(const EstimatorSpec& spec, const CoefficientVector& theta,
                         NoiseLevel n) {
    const ThresholdSchedule* sc = spec.schedule();
    require(sc != nullptr && sc->tail == Tail::soft, "variance_bound_53: soft-threshold rule only");
    const double n2 = n.n * n.n;
    double bound = 2.0 * static_cast<double>(sc->m) / n2;

    for (const auto& e : theta.entries()) {
        const double t2 = e.value * e.value;
        if (e.index <= sc->m) {
            bound += 4.0 * t2 / n.n;
        } else if (sc->infinite() || sc->block_of(e.index) <= sc->blocks) {
            bound += 6.0 * t2 / n.n;
        }
    }

    std::uint64_t j = 1;
    for (;; ++j) {
        if (!sc->infinite() && j > sc->blocks) break;
        if (j > 4000) break;
        const double tau = 2.0 * static_cast<double>(j);
        const double block_size = std::ldexp(static_cast<double>(sc->m), static_cast<int>(j) - 1);
        const double term = block_size * (4.0 * std::sqrt(tau) + 18.0) /
                            (n2 * std::exp(static_cast<double>(j)));
        bound += term;
        if (sc->infinite() && term < 1e-18 * (1.0 + bound)) break;
    }
    return bound;
}

}  // namespace qfe::risklab
