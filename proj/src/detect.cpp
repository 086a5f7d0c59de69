#include "qfe/detect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <thread>

#include "qfe/analytics.hpp"
#include "qfe/rng.hpp"
#include "sampling.hpp"

namespace qfe::detect {

namespace {

using estimators::DiagQuadRule;
using estimators::Q1Rule;
using estimators::Tail;
using estimators::ThresholdSchedule;

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

constexpr std::uint64_t kSlotTag = 0x736c6f74ull;   // per-coordinate replayable draw
constexpr std::uint64_t kQuadTag = 0x71756164ull;   // chi-square aggregate
constexpr std::uint64_t kBlockTag = 0x626c6bull;    // per-block exceedance walk

// One keyed standard normal per (replicate, coordinate), via the inverse CDF:
// a single 64-bit mix and no transcendentals beyond the quantile rationals.
double slot_normal(std::uint64_t seed, std::uint64_t r, std::uint64_t coordinate) {
    const std::uint64_t x = rng::mix64(rng::key2(rng::key3(seed, r, coordinate), kSlotTag));
    const double u = (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
    return rng::normal_quantile(u);
}

// One observed coordinate some hypothesis touches: weight w (diagonal rules)
// or threshold thr (tail coordinates of a schedule).
struct Slot {
    std::uint64_t coordinate;
    bool in_tail;
    double w;    // quadratic-part weight (1 for schedules)
    double thr;  // tau_j / n for tail slots
};

// A hypothesis's view of its support: positions into the slot table.
struct Hypothesis {
    double q0_full = 0.0;
    double q0_w = 0.0;  // sum over quad slots of w theta0^2
    std::vector<std::pair<std::size_t, double>> quad;  // (slot id, theta0)
    std::vector<std::pair<std::size_t, double>> tail;  // (slot id, theta0)
};

struct Cache {
    double base;
    double L;  // sum w theta0 z
    double S;  // sum w z^2
};

// The estimator value at scale c decomposes as
//   base + c^2 q0_w + 2 c sigma L + sigma^2 S + tail(c),
// where base collects every draw that does not depend on c: the zero-theta
// bulk (shared across hypotheses, minus this hypothesis's own slots treated
// as zero) and the centering constants. tail(c) replays the per-slot draws.
struct PreparedTest {
    double n = 1.0;
    double sigma = 1.0;
    bool soft = true;
    std::uint64_t replicates = 0;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::vector<Slot> slots;
    std::vector<Hypothesis> hyps;  // [0] is the null
    std::vector<std::vector<Cache>> cache;

    std::vector<std::uint64_t> reject_counts(double a, const std::vector<double>& scales) const;
    std::uint64_t count_one(std::size_t h, double a, double scale) const;
};

struct ScheduleGeometry {
    bool is_diag = false;
    std::uint64_t m = 0;
    double quad_center = 0.0;
    double centering_total = 0.0;
    std::vector<double> diag_a;
    struct Block {
        double tau, thr, exceed_prob, size;
    };
    std::vector<Block> blocks;  // empty for diag/quad rules
    bool soft = true;
};

ScheduleGeometry make_geometry(const EstimatorSpec& spec, NoiseLevel n) {
    ScheduleGeometry g;
    if (const auto* dq = std::get_if<DiagQuadRule>(&spec.rule)) {
        require(dq->a.size() <= (std::uint64_t{1} << 22),
                "detect: diagonal rule support too large to simulate");
        g.is_diag = true;
        g.diag_a = dq->a;
        g.quad_center = -dq->c;  // base subtracts quad_center
        return g;
    }
    // Reuse the sampling plan of the zero vector for horizon and centering.
    const sampling::Plan plan = sampling::make_plan(spec, model::CoefficientVector::zero(1), n);
    require(plan.expected_draws <= 4e6, "detect: estimator too large to simulate");
    g.m = plan.m;
    g.quad_center = plan.quad_center;
    g.centering_total = plan.centering_total;
    g.soft = (plan.tail != Tail::hard);
    for (const auto& bp : plan.blocks)
        g.blocks.push_back({bp.tau, bp.tau / n.n, bp.exceed_prob, bp.zero_count});
    return g;
}

PreparedTest prepare(const EstimatorSpec& spec, NoiseLevel n,
                     const std::vector<model::CoefficientVector>& hypotheses,
                     std::uint64_t replicates, std::uint64_t master_seed, unsigned workers) {
    const ScheduleGeometry geo = make_geometry(spec, n);
    const ThresholdSchedule* sc = spec.schedule();

    PreparedTest pt;
    pt.n = n.n;
    pt.sigma = 1.0 / std::sqrt(n.n);
    pt.soft = geo.soft;
    pt.replicates = replicates;
    pt.seed = master_seed;
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    pt.workers = workers;

    // Union of all supports -> slot table (observed coordinates only).
    std::map<std::uint64_t, Slot> slot_map;
    for (const auto& hyp : hypotheses) {
        for (const auto& e : hyp.entries()) {
            if (slot_map.count(e.index)) continue;
            Slot s{e.index, false, 1.0, 0.0};
            if (geo.is_diag) {
                if (e.index > geo.diag_a.size()) continue;  // unobserved
                s.w = geo.diag_a[e.index - 1];
            } else if (e.index > geo.m) {
                if (sc == nullptr) continue;  // truncated quadratic: unobserved
                const std::uint64_t j = sc->block_of(e.index);
                if (!sc->infinite() && j > sc->blocks) continue;  // beyond coverage
                if (j > geo.blocks.size()) continue;  // beyond the simulated horizon
                s.in_tail = true;
                s.thr = geo.blocks[j - 1].thr;
            }
            slot_map.emplace(e.index, s);
        }
    }
    pt.slots.reserve(slot_map.size());
    std::map<std::uint64_t, std::size_t> slot_of;
    for (const auto& [idx, s] : slot_map) {
        slot_of[idx] = pt.slots.size();
        pt.slots.push_back(s);
    }

    // Per-block and quadratic-part zero counts after removing union slots.
    double quad_union = 0.0;
    std::vector<double> block_union(geo.blocks.size(), 0.0);
    for (const Slot& s : pt.slots) {
        if (geo.is_diag) continue;
        if (!s.in_tail)
            quad_union += 1.0;
        else
            block_union[sc->block_of(s.coordinate) - 1] += 1.0;
    }

    // Hypothesis views.
    pt.hyps.resize(hypotheses.size());
    for (std::size_t h = 0; h < hypotheses.size(); ++h) {
        Hypothesis& hyp = pt.hyps[h];
        hyp.q0_full = model::quadratic_functional(hypotheses[h]);
        for (const auto& e : hypotheses[h].entries()) {
            auto it = slot_of.find(e.index);
            if (it == slot_of.end()) continue;  // unobserved coordinate
            const Slot& s = pt.slots[it->second];
            if (s.in_tail) {
                hyp.tail.push_back({it->second, e.value});
            } else {
                hyp.quad.push_back({it->second, e.value});
                hyp.q0_w += s.w * e.value * e.value;
            }
        }
    }

    // Replicate-shared draws, then per-hypothesis corrections.
    pt.cache.assign(hypotheses.size(), std::vector<Cache>(replicates));
    const double sigma2 = pt.sigma * pt.sigma;
    auto run = [&](std::uint64_t lo, std::uint64_t hi) {
        std::vector<double> zs(pt.slots.size());
        std::vector<double> zero_term(pt.slots.size());
        for (std::uint64_t r = lo; r < hi; ++r) {
            double shared = -geo.quad_center - geo.centering_total;
            if (geo.is_diag) {
                rng::Stream body(rng::key2(rng::key3(master_seed, r, 0), kQuadTag));
                for (std::size_t i = 0; i < geo.diag_a.size(); ++i) {
                    if (slot_of.count(i + 1)) continue;
                    const double z = body.next_normal();
                    shared += geo.diag_a[i] * sigma2 * z * z;
                }
            } else {
                rng::Stream body(rng::key2(rng::key3(master_seed, r, 0), kQuadTag));
                shared += rng::chi_square_draw(
                              body, static_cast<double>(geo.m) - quad_union) / pt.n;
                for (std::size_t j = 0; j < geo.blocks.size(); ++j) {
                    const auto& b = geo.blocks[j];
                    const double count = b.size - block_union[j];
                    if (count <= 0.0 || b.exceed_prob * count <= 1e-16) continue;
                    rng::Stream walk(rng::key2(rng::key3(master_seed, r, j + 1), kBlockTag));
                    double pos = rng::geometric_skip(walk, b.exceed_prob);
                    while (pos < count) {
                        const double u = walk.next_unit_open();
                        const double z = rng::normal_upper_quantile(u * (0.5 * b.exceed_prob));
                        shared += geo.soft ? (z * z - b.tau) / pt.n : z * z / pt.n;
                        pos += 1.0 + rng::geometric_skip(walk, b.exceed_prob);
                    }
                }
            }
            // Union slots at theta = 0, shared across hypotheses.
            for (std::size_t sI = 0; sI < pt.slots.size(); ++sI) {
                const Slot& s = pt.slots[sI];
                const double z = slot_normal(master_seed, r, s.coordinate);
                zs[sI] = z;
                if (s.in_tail) {
                    const double y2 = sigma2 * z * z;
                    zero_term[sI] = pt.soft ? std::max(y2 - s.thr, 0.0)
                                            : (y2 > s.thr ? y2 : 0.0);
                } else {
                    zero_term[sI] = s.w * sigma2 * z * z;
                }
                shared += zero_term[sI];
            }
            // Each hypothesis removes its own slots' zero contributions.
            for (std::size_t h = 0; h < pt.hyps.size(); ++h) {
                Cache& cc = pt.cache[h][r];
                cc.base = shared;
                cc.L = 0.0;
                cc.S = 0.0;
                for (const auto& [sI, t0] : pt.hyps[h].quad) {
                    cc.base -= zero_term[sI];
                    cc.L += pt.slots[sI].w * t0 * zs[sI];
                    cc.S += pt.slots[sI].w * zs[sI] * zs[sI];
                }
                for (const auto& [sI, t0] : pt.hyps[h].tail) cc.base -= zero_term[sI];
            }
        }
    };
    const unsigned w = static_cast<unsigned>(std::min<std::uint64_t>(workers, replicates));
    if (w <= 1) {
        run(0, replicates);
    } else {
        std::vector<std::thread> pool;
        const std::uint64_t chunk = (replicates + w - 1) / w;
        for (unsigned t = 0; t < w; ++t) {
            const std::uint64_t lo = t * chunk;
            const std::uint64_t hi = std::min<std::uint64_t>(lo + chunk, replicates);
            if (lo >= hi) break;
            pool.emplace_back(run, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    return pt;
}

std::uint64_t PreparedTest::count_one(std::size_t h, double a, double scale) const {
    const Hypothesis& hyp = hyps[h];
    const double c = scale;
    const double half_a = 0.5 * a;
    const double sigma2 = sigma * sigma;
    const std::vector<Cache>& cc = cache[h];
    std::vector<std::uint64_t> partial(workers, 0);

    auto run = [&](unsigned pslot, std::uint64_t lo, std::uint64_t hi) {
        std::uint64_t cnt = 0;
        for (std::uint64_t r = lo; r < hi; ++r) {
            double q = cc[r].base + c * c * hyp.q0_w + 2.0 * c * sigma * cc[r].L +
                       sigma2 * cc[r].S;
            for (const auto& [sI, t0] : hyp.tail) {
                const double y = c * t0 + sigma * slot_normal(seed, r, slots[sI].coordinate);
                const double y2 = y * y;
                if (soft)
                    q += std::max(y2 - slots[sI].thr, 0.0);
                else if (y2 > slots[sI].thr)
                    q += y2;
            }
            if (q > half_a) ++cnt;
        }
        partial[pslot] = cnt;
    };
    const unsigned w = static_cast<unsigned>(std::min<std::uint64_t>(workers, replicates));
    if (w <= 1) {
        run(0, 0, replicates);
    } else {
        std::vector<std::thread> pool;
        const std::uint64_t chunk = (replicates + w - 1) / w;
        for (unsigned t = 0; t < w; ++t) {
            const std::uint64_t lo = t * chunk;
            const std::uint64_t hi = std::min<std::uint64_t>(lo + chunk, replicates);
            if (lo >= hi) break;
            pool.emplace_back(run, t, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    std::uint64_t total = 0;
    for (std::uint64_t p : partial) total += p;
    return total;
}

std::vector<std::uint64_t> PreparedTest::reject_counts(double a,
                                                       const std::vector<double>& scales) const {
    std::vector<std::uint64_t> counts(hyps.size(), 0);
    for (std::size_t h = 0; h < hyps.size(); ++h) {
        if (scales[h] < 0.0) continue;
        counts[h] = count_one(h, a, scales[h]);
    }
    return counts;
}

TestOutcome outcome_from_counts(const std::vector<std::uint64_t>& counts,
                                const std::vector<double>& scales, std::uint64_t replicates,
                                double a) {
    TestOutcome out{};
    out.a = a;
    out.replicates = replicates;
    out.type1 = static_cast<double>(counts[0]) / static_cast<double>(replicates);
    out.max_type2 = 0.0;
    for (std::size_t h = 1; h < counts.size(); ++h) {
        if (scales[h] < 0.0) continue;
        const double accept =
            1.0 - static_cast<double>(counts[h]) / static_cast<double>(replicates);
        out.max_type2 = std::max(out.max_type2, accept);
    }
    out.sum = out.type1 + out.max_type2;
    return out;
}

// Shared by calibrate_a and calibration_error_rates: members are dropped
// below Q < a and rescaled down to Q = a otherwise. During bisection only
// feasibility (sum <= gamma) matters, so sparse members are checked first
// and the scan stops once the budget is exceeded; the classification is
// identical to the full evaluation's.
TestOutcome eval_calibration(const PreparedTest& pt, double a,
                             double early_exit_gamma = 2.0) {
    std::vector<double> scales(pt.hyps.size());
    scales[0] = 0.0;
    for (std::size_t h = 1; h < pt.hyps.size(); ++h) {
        const double q0 = pt.hyps[h].q0_full;
        scales[h] = (q0 >= a && q0 > 0.0) ? std::sqrt(a / q0) : -1.0;
    }

    std::vector<std::size_t> order;
    for (std::size_t h = 1; h < pt.hyps.size(); ++h)
        if (scales[h] >= 0.0) order.push_back(h);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return pt.hyps[x].q0_full < pt.hyps[y].q0_full;
    });

    TestOutcome out{};
    out.a = a;
    out.replicates = pt.replicates;
    out.type1 =
        static_cast<double>(pt.count_one(0, a, 0.0)) / static_cast<double>(pt.replicates);
    out.max_type2 = 0.0;
    for (std::size_t h : order) {
        const double accept = 1.0 - static_cast<double>(pt.count_one(h, a, scales[h])) /
                                        static_cast<double>(pt.replicates);
        out.max_type2 = std::max(out.max_type2, accept);
        if (out.type1 + out.max_type2 > early_exit_gamma) break;
    }
    out.sum = out.type1 + out.max_type2;
    return out;
}

std::vector<model::CoefficientVector> calibration_hypotheses(const EstimatorSpec& spec,
                                                             NoiseLevel n,
                                                             const BallSpec& ball) {
    std::vector<model::CoefficientVector> hyps;
    hyps.push_back(model::CoefficientVector::zero(1));
    for (auto& member : estimators::adversarial_family(ball, spec, n))
        if (model::quadratic_functional(member) > 0.0) hyps.push_back(std::move(member));
    return hyps;
}

}  // namespace

Decision decide(double q_hat, double a) {
    require(a > 0.0, "decide: a must be positive");
    return q_hat > 0.5 * a ? Decision::reject : Decision::accept;
}

TestOutcome error_rates(const EstimatorSpec& spec, NoiseLevel n, double a,
                        const std::vector<CoefficientVector>& alternatives,
                        std::uint64_t replicates, std::uint64_t master_seed, unsigned workers) {
    require(replicates >= 100, "error_rates: need at least 100 replicates");
    for (const auto& alt : alternatives)
        require(model::quadratic_functional(alt) >= a,
                "error_rates: alternative with Q(theta) < a");

    std::vector<CoefficientVector> hyps;
    hyps.reserve(alternatives.size() + 1);
    hyps.push_back(CoefficientVector::zero(1));
    for (const auto& alt : alternatives) hyps.push_back(alt);

    const PreparedTest pt = prepare(spec, n, hyps, replicates, master_seed, workers);
    std::vector<double> scales(hyps.size(), 1.0);
    scales[0] = 0.0;
    return outcome_from_counts(pt.reject_counts(a, scales), scales, replicates, a);
}

double calibrate_a(const EstimatorSpec& spec, NoiseLevel n, double gamma, const BallSpec& ball,
                   std::uint64_t replicates, std::uint64_t master_seed, unsigned workers) {
    require(gamma > 0.0 && gamma < 1.0, "calibrate_a: gamma must be in (0, 1)");
    require(replicates >= 100, "calibrate_a: need at least 100 replicates");

    const auto hyps = calibration_hypotheses(spec, n, ball);
    const PreparedTest pt = prepare(spec, n, hyps, replicates, master_seed, workers);

    double lo = 1.0 / (n.n * n.n);
    double hi = ball.M * ball.M;
    if (eval_calibration(pt, lo, gamma).sum <= gamma) return lo;
    if (eval_calibration(pt, hi, gamma).sum > gamma)
        throw std::runtime_error("calibrate_a: no a in the bracket achieves the error constraint");
    for (int it = 0; it < 20; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (eval_calibration(pt, mid, gamma).sum <= gamma)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

TestOutcome calibration_error_rates(const EstimatorSpec& spec, NoiseLevel n, double a,
                                    const BallSpec& ball, std::uint64_t replicates,
                                    std::uint64_t master_seed, unsigned workers) {
    require(replicates >= 100, "calibration_error_rates: need at least 100 replicates");
    const auto hyps = calibration_hypotheses(spec, n, ball);
    const PreparedTest pt = prepare(spec, n, hyps, replicates, master_seed, workers);
    return eval_calibration(pt, a);
}

double testing_exponent(double p, double alpha) {
    require(p > 0.0 && p < 2.0, "testing_exponent: requires 0 < p < 2");
    const double s = alpha + 0.5 - 1.0 / p;
    require(s > 0.0, "testing_exponent: s <= 0");
    require(alpha <= 1.0 / (2.0 * p),
            "testing_exponent: only the branch alpha <= 1/(2p) is covered");
    return 1.0 - p / (2.0 * (1.0 + 2.0 * p * s));
}

}  // namespace qfe::detect
