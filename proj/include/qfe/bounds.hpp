#ifndef QFE_BOUNDS_HPP
#define QFE_BOUNDS_HPP

#include <cstdint>
#include <vector>

#include "qfe/model.hpp"

namespace qfe::bounds {

using model::CoefficientVector;
using model::NoiseLevel;

/// Mixture-prior geometry: k spikes of height 1/sqrt(n) among the first m
/// coordinates. k defaults to ceil(sqrt(m)).
struct MixtureSpec {
    std::uint64_t m;
    std::uint64_t k;
    NoiseLevel n;

    static MixtureSpec make(std::uint64_t m, NoiseLevel n);
    static MixtureSpec make(std::uint64_t m, std::uint64_t k, NoiseLevel n);
};

/// The vertex with spikes exactly on `support` (subset of {1..m}, size k).
CoefficientVector theta_km_vertex(const MixtureSpec& spec, const std::vector<std::uint64_t>& support);

/// Uniformly random k-subset (partial Fisher-Yates on the stream), then the
/// vertex; deterministic per stream id.
CoefficientVector sample_mixture(const MixtureSpec& spec, std::uint64_t stream_id);

/// E e^J for J hypergeometric(m, k, k): the chi-square affinity of the
/// mixture to pure noise. Exact in floating point via log-binomials.
double chi_square_affinity(std::uint64_t m, std::uint64_t k);

/// 4 (1 + (e-1) k/m)^k; requires m >= 4 and k = ceil(sqrt(m)).
double affinity_bound(std::uint64_t m, std::uint64_t k);

/// Constrained-risk-inequality bound: Delta^2 - 2 Delta sqrt(affinity eps2).
/// May be negative; callers clip.
double cri_lower_bound(double delta, double eps2, double affinity);

/// Exponent of the minimax lower-bound rate in n.
double minimax_lower_exponent(double p, double alpha);

/// Reciprocal Fisher information for Q at theta: 4 Q(theta) / n.
double information_bound(const CoefficientVector& theta, NoiseLevel n);

}  // namespace qfe::bounds

#endif
