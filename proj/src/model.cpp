#include "qfe/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qfe/rng.hpp"

namespace qfe::model {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Level of flat index i >= 1, i.e. floor(log2 i).
std::uint64_t level_of(std::uint64_t i) {
    std::uint64_t j = 0;
    while (i >>= 1) ++j;
    return j;
}

}  // namespace

NoiseLevel::NoiseLevel(double n_) : n(n_) {
    require(std::isfinite(n) && n > 0.0, "NoiseLevel: n must be positive and finite");
}

CoefficientVector::CoefficientVector(const std::vector<double>& dense) {
    length_ = dense.size();
    for (std::uint64_t i = 0; i < dense.size(); ++i) {
        require(std::isfinite(dense[i]), "CoefficientVector: values must be finite");
        if (dense[i] != 0.0) entries_.push_back({i + 1, dense[i]});
    }
}

CoefficientVector CoefficientVector::zero(std::uint64_t length) {
    CoefficientVector v;
    v.length_ = length;
    return v;
}

CoefficientVector CoefficientVector::from_entries(std::uint64_t length,
                                                  std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.index < b.index; });
    std::uint64_t prev = 0;
    for (const Entry& e : entries) {
        require(e.index >= 1 && e.index <= length, "CoefficientVector: index out of range");
        require(e.index != prev, "CoefficientVector: duplicate index");
        require(std::isfinite(e.value), "CoefficientVector: values must be finite");
        prev = e.index;
    }
    std::erase_if(entries, [](const Entry& e) { return e.value == 0.0; });
    CoefficientVector v;
    v.length_ = length;
    v.entries_ = std::move(entries);
    return v;
}

double CoefficientVector::at(std::uint64_t i) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), i,
                               [](const Entry& e, std::uint64_t idx) { return e.index < idx; });
    if (it != entries_.end() && it->index == i) return it->value;
    return 0.0;
}

CoefficientVector CoefficientVector::scaled(double c) const {
    require(std::isfinite(c), "scaled: factor must be finite");
    CoefficientVector v;
    v.length_ = length_;
    v.entries_.reserve(entries_.size());
    for (const Entry& e : entries_) {
        const double cv = c * e.value;
        if (cv != 0.0) v.entries_.push_back({e.index, cv});
    }
    return v;
}

BallSpec BallSpec::lp(double p, double alpha, double M) {
    BallSpec b{BallKind::lp, p, std::numeric_limits<double>::quiet_NaN(), alpha, M};
    require(p > 0.0 && alpha > 0.0 && M > 0.0, "BallSpec: p, alpha, M must be positive");
    require(b.s() > 0.0, "BallSpec: s = alpha + 1/2 - 1/p must be positive");
    return b;
}

BallSpec BallSpec::besov(double p, double q, double alpha, double M) {
    BallSpec b{BallKind::besov, p, q, alpha, M};
    require(p > 0.0 && alpha > 0.0 && M > 0.0, "BallSpec: p, alpha, M must be positive");
    require(q > 0.0, "BallSpec: q must be positive (may be infinity)");
    require(b.s() > 0.0, "BallSpec: s = alpha + 1/2 - 1/p must be positive");
    return b;
}

std::uint64_t flat_index(BesovIndex jk) {
    require(jk.j <= 62, "flat_index: level too large");
    require(jk.k < (std::uint64_t{1} << jk.j), "flat_index: position k out of [0, 2^j)");
    return (std::uint64_t{1} << jk.j) + jk.k;
}

BesovIndex besov_index(std::uint64_t i) {
    require(i >= 1, "besov_index: flat index must be >= 1");
    const std::uint64_t j = level_of(i);
    return {j, i - (std::uint64_t{1} << j)};
}

double quadratic_functional(const CoefficientVector& theta) {
    double sum = 0.0;
    for (const auto& e : theta.entries()) sum += e.value * e.value;
    return sum;
}

CoefficientVector sample_observation(const CoefficientVector& theta, NoiseLevel n,
                                     std::uint64_t length, std::uint64_t stream_id) {
    require(length >= theta.length(), "sample_observation: length < support length");
    rng::Stream stream(rng::key2(stream_id, 0x6f627376ull));  // "obsv"
    const double sigma = 1.0 / std::sqrt(n.n);
    std::vector<CoefficientVector::Entry> out;
    out.reserve(length);
    for (std::uint64_t i = 1; i <= length; ++i) {
        const double y = theta.at(i) + sigma * stream.next_normal();
        out.push_back({i, y});
    }
    return CoefficientVector::from_entries(length, std::move(out));
}

double ball_norm(const BallSpec& spec, const CoefficientVector& theta) {
    if (spec.kind == BallKind::lp) {
        const double ps = spec.p * spec.s();
        double sum = 0.0;
        for (const auto& e : theta.entries())
            sum += std::pow(static_cast<double>(e.index), ps) *
                   std::pow(std::fabs(e.value), spec.p);
        return std::pow(sum, 1.0 / spec.p);
    }
    // Besov: ell_q over levels of 2^{js} (sum_k |theta_{j,k}|^p)^{1/p}.
    const double s = spec.s();
    double qsum = 0.0;   // finite q
    double qsup = 0.0;   // q = infinity
    const bool qinf = std::isinf(spec.q);
    auto es = theta.entries();
    std::size_t pos = 0;
    while (pos < es.size()) {
        const std::uint64_t j = level_of(es[pos].index);
        const std::uint64_t next_level = (j >= 63) ? 0 : (std::uint64_t{1} << (j + 1));
        double psum = 0.0;
        while (pos < es.size() && (next_level == 0 || es[pos].index < next_level)) {
            psum += std::pow(std::fabs(es[pos].value), spec.p);
            ++pos;
        }
        const double lvl = std::pow(2.0, static_cast<double>(j) * s) * std::pow(psum, 1.0 / spec.p);
        if (qinf)
            qsup = std::max(qsup, lvl);
        else
            qsum += std::pow(lvl, spec.q);
    }
    return qinf ? qsup : std::pow(qsum, 1.0 / spec.q);
}

bool contains(const BallSpec& spec, const CoefficientVector& theta) {
    return ball_norm(spec, theta) <= spec.M;
}

BallSpec quadratic_hull(const BallSpec& spec) {
    if (spec.p >= 2.0) return spec;
    const double alpha_hull = spec.alpha + 0.5 - 1.0 / spec.p;  // = s
    if (spec.kind == BallKind::lp) return BallSpec::lp(2.0, alpha_hull, spec.M);
    return BallSpec::besov(2.0, spec.q, alpha_hull, spec.M);
}

namespace {

// Largest height h' <= h with the single spike at i inside the ball under
// exact comparison; fp rounding in pow can land a few ulps above M.
CoefficientVector feasible_spike(const BallSpec& spec, std::uint64_t i, double h) {
    CoefficientVector v = CoefficientVector::from_entries(i, {{i, h}});
    int guard = 0;
    while (!contains(spec, v)) {
        h = std::nextafter(h, 0.0);
        v = CoefficientVector::from_entries(i, {{i, h}});
        if (++guard > 8) throw std::runtime_error("spike_config: failed to fit spike");
    }
    return v;
}

}  // namespace

CoefficientVector spike_config(const BallSpec& spec, std::uint64_t i) {
    require(i >= 1, "spike_config: index must be >= 1");
    double h;
    if (spec.kind == BallKind::lp) {
        h = spec.M * std::pow(static_cast<double>(i), -spec.s());
    } else {
        h = spec.M * std::pow(2.0, -static_cast<double>(level_of(i)) * spec.s());
    }
    return feasible_spike(spec, i, h);
}

CoefficientVector spike_config(const BallSpec& spec, BesovIndex jk) {
    return spike_config(spec, flat_index(jk));
}

std::vector<CoefficientVector> adversarial_family(const BallSpec& spec, ScheduleView sched,
                                                  NoiseLevel n) {
    require(sched.m >= 1, "adversarial_family: schedule m must be >= 1");
    std::vector<CoefficientVector> family;
    const std::uint64_t m = sched.m;
    const std::uint64_t blocks = sched.blocks + 2;

    family.push_back(CoefficientVector::zero(1));
    family.push_back(spike_config(spec, std::uint64_t{1}));

    for (std::uint64_t j = 1; j <= blocks; ++j) {
        // Block start 2^{j-1} m + 1; skip blocks beyond index-width range.
        if (j - 1 >= 62 || m > (std::uint64_t{1} << 62) / (std::uint64_t{1} << (j - 1))) break;
        const std::uint64_t begin = (std::uint64_t{1} << (j - 1)) * m + 1;
        const std::uint64_t bsize = (std::uint64_t{1} << (j - 1)) * m;
        family.push_back(spike_config(spec, begin));

        const double tau = 2.0 * static_cast<double>(j);
        for (double f : {0.5, 1.0, 2.0}) {
            const double h = std::sqrt(tau * f / n.n);
            auto make_cfg = [&](std::uint64_t k) {
                std::vector<CoefficientVector::Entry> ents;
                ents.reserve(k);
                for (std::uint64_t t = 0; t < k; ++t) ents.push_back({begin + t, h});
                return CoefficientVector::from_entries(begin + k - 1, std::move(ents));
            };
            // k maximal with k equal coefficients of height h from the block
            // start staying inside the ball (the norm is increasing in k),
            // capped at the block size. Galloping then bisection keeps the
            // work proportional to the answer, not the block size.
            const std::uint64_t cap = std::min<std::uint64_t>(bsize, std::uint64_t{1} << 22);
            if (!contains(spec, make_cfg(1))) continue;
            std::uint64_t lo = 1;  // feasible
            std::uint64_t hi = 0;  // smallest known-infeasible size (0 = none yet)
            for (std::uint64_t probe = 2; probe <= cap; probe *= 2) {
                if (contains(spec, make_cfg(probe))) {
                    lo = probe;
                } else {
                    hi = probe;
                    break;
                }
            }
            if (hi == 0 && lo < cap) {  // gallop overshot the cap
                if (contains(spec, make_cfg(cap)))
                    lo = cap;
                else
                    hi = cap;
            }
            while (hi != 0 && hi - lo > 1) {
                const std::uint64_t mid = lo + (hi - lo) / 2;
                if (contains(spec, make_cfg(mid)))
                    lo = mid;
                else
                    hi = mid;
            }
            family.push_back(make_cfg(lo));
        }
    }

    // Dense profile theta_i = c i^{-(s + 1/p + 0.01)} with c saturating the norm.
    {
        const std::uint64_t len = 4096;
        const double decay = spec.s() + 1.0 / spec.p + 0.01;
        std::vector<CoefficientVector::Entry> ents;
        ents.reserve(len);
        for (std::uint64_t i = 1; i <= len; ++i)
            ents.push_back({i, std::pow(static_cast<double>(i), -decay)});
        CoefficientVector profile = CoefficientVector::from_entries(len, std::move(ents));
        double c = spec.M / ball_norm(spec, profile);
        CoefficientVector dense = profile.scaled(c);
        int guard = 0;
        while (!contains(spec, dense)) {
            c = std::nextafter(c, 0.0);
            dense = profile.scaled(c);
            if (++guard > 8) throw std::runtime_error("adversarial_family: dense config misfit");
        }
        family.push_back(std::move(dense));
    }

    return family;
}

}  // namespace qfe::model
