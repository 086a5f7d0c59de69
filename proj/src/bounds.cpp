#include "qfe/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "qfe/rng.hpp"

namespace qfe::bounds {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::uint64_t ceil_sqrt(std::uint64_t m) {
    auto k = static_cast<std::uint64_t>(std::ceil(std::sqrt(static_cast<double>(m))));
    while (k > 0 && (k - 1) * (k - 1) >= m) --k;
    while (k * k < m) ++k;
    return k;
}

// Long-double log-binomial: for m ~ 1e4 the lgamma magnitudes are ~1e5 and
// plain doubles leave only ~1e-11 relative accuracy in the exponent.
long double lchoose(long double a, long double b) {
    if (b < 0.0L || b > a) return -std::numeric_limits<long double>::infinity();
    return std::lgamma(a + 1.0L) - std::lgamma(b + 1.0L) - std::lgamma(a - b + 1.0L);
}

}  // namespace

MixtureSpec MixtureSpec::make(std::uint64_t m, NoiseLevel n) {
    return make(m, ceil_sqrt(m), n);
}

MixtureSpec MixtureSpec::make(std::uint64_t m, std::uint64_t k, NoiseLevel n) {
    require(m >= 1 && k >= 1 && k <= m, "MixtureSpec: need 1 <= k <= m");
    return {m, k, n};
}

CoefficientVector theta_km_vertex(const MixtureSpec& spec,
                                  const std::vector<std::uint64_t>& support) {
    require(support.size() == spec.k, "theta_km_vertex: support size must equal k");
    const double h = 1.0 / std::sqrt(spec.n.n);
    std::vector<CoefficientVector::Entry> ents;
    ents.reserve(support.size());
    for (std::uint64_t idx : support) {
        require(idx >= 1 && idx <= spec.m, "theta_km_vertex: support must lie in {1..m}");
        ents.push_back({idx, h});
    }
    return CoefficientVector::from_entries(spec.m, std::move(ents));
}

CoefficientVector sample_mixture(const MixtureSpec& spec, std::uint64_t stream_id) {
    rng::Stream stream(rng::key2(stream_id, 0x6d697874ull));  // "mixt"
    std::vector<std::uint64_t> pool(spec.m);
    std::iota(pool.begin(), pool.end(), std::uint64_t{1});
    for (std::uint64_t t = 0; t < spec.k; ++t) {
        const std::uint64_t pick = t + stream.next_u64() % (spec.m - t);
        std::swap(pool[t], pool[pick]);
    }
    pool.resize(spec.k);
    return theta_km_vertex(spec, pool);
}

double chi_square_affinity(std::uint64_t m, std::uint64_t k) {
    require(k <= m, "chi_square_affinity: need k <= m");
    if (k == 0) return 1.0;
    const auto md = static_cast<long double>(m);
    const auto kd = static_cast<long double>(k);
    const long double lden = lchoose(md, kd);
    const std::uint64_t jlo = (2 * k > m) ? 2 * k - m : 0;
    long double sum = 0.0L;
    for (std::uint64_t j = jlo; j <= k; ++j) {
        const auto jd = static_cast<long double>(j);
        sum += std::exp(lchoose(kd, jd) + lchoose(md - kd, kd - jd) - lden + jd);
    }
    return static_cast<double>(sum);
}

double affinity_bound(std::uint64_t m, std::uint64_t k) {
    require(m >= 4, "affinity_bound: requires m >= 4");
    require(k == ceil_sqrt(m), "affinity_bound: requires k = ceil(sqrt(m))");
    const double e1 = 1.7182818284590452354;  // e - 1
    const auto kd = static_cast<double>(k);
    return 4.0 * std::exp(kd * std::log1p(e1 * kd / static_cast<double>(m)));
}

double cri_lower_bound(double delta, double eps2, double affinity) {
    require(delta >= 0.0, "cri_lower_bound: delta must be >= 0");
    require(eps2 >= 0.0, "cri_lower_bound: eps2 must be >= 0");
    require(affinity >= 1.0, "cri_lower_bound: affinity must be >= 1");
    return delta * delta - 2.0 * delta * std::sqrt(affinity * eps2);
}

double minimax_lower_exponent(double p, double alpha) {
    require(p > 0.0 && alpha > 0.0, "minimax_lower_exponent: p, alpha must be positive");
    if (p >= 2.0) return (alpha > 0.25) ? 1.0 : 8.0 * alpha / (1.0 + 4.0 * alpha);
    const double s = alpha + 0.5 - 1.0 / p;
    require(s > 0.0, "minimax_lower_exponent: s <= 0");
    if (alpha > 1.0 / (2.0 * p)) return 1.0;
    return 2.0 - p / (1.0 + 2.0 * p * s);
}

double information_bound(const CoefficientVector& theta, NoiseLevel n) {
    return 4.0 * model::quadratic_functional(theta) / n.n;
}

}  // namespace qfe::bounds
