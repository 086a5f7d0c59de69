#ifndef QFE_MODEL_HPP
#define QFE_MODEL_HPP

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace qfe::model {

/// Calibration parameter of the sequence model Y_i = theta_i + n^{-1/2} z_i.
/// Per-coordinate noise standard deviation is n^{-1/2}.
struct NoiseLevel {
    double n;
    explicit NoiseLevel(double n_);
};

/// Finite truncation of a mean sequence, 1-indexed, with the zero-tail
/// convention: coordinates beyond length() are exactly 0. Also used for
/// observation vectors. Stored compressed (nonzero entries only) so spike
/// configurations at deep indices stay cheap; semantics are dense.
class CoefficientVector {
  public:
    struct Entry {
        std::uint64_t index;  // 1-based
        double value;
    };

    CoefficientVector() = default;
    explicit CoefficientVector(const std::vector<double>& dense);
    static CoefficientVector zero(std::uint64_t length);
    static CoefficientVector from_entries(std::uint64_t length, std::vector<Entry> entries);

    std::uint64_t length() const { return length_; }
    /// Value at 1-based index i, 0 beyond the support.
    double at(std::uint64_t i) const;
    std::span<const Entry> entries() const { return entries_; }

    CoefficientVector scaled(double c) const;

  private:
    std::vector<Entry> entries_;
    std::uint64_t length_ = 0;
};

enum class BallKind { lp, besov };

/// Parameter-space ball: Lp(alpha, M) with weights i^{ps}, or the Besov
/// sequence ball B^alpha_{p,q}(M) over the dyadic levels i = 2^j + k.
/// s = alpha + 1/2 - 1/p must be positive.
struct BallSpec {
    BallKind kind;
    double p;
    double q;  // Besov only; may be +infinity. Ignored for Lp.
    double alpha;
    double M;

    double s() const { return alpha + 0.5 - 1.0 / p; }

    static BallSpec lp(double p, double alpha, double M);
    static BallSpec besov(double p, double q, double alpha, double M);
};

/// Dyadic position (level j, offset k in [0, 2^j - 1]).
struct BesovIndex {
    std::uint64_t j;
    std::uint64_t k;
};

std::uint64_t flat_index(BesovIndex jk);
BesovIndex besov_index(std::uint64_t i);

/// Q(theta) = sum theta_i^2.
double quadratic_functional(const CoefficientVector& theta);

/// Y_i = theta_i + n^{-1/2} z_i for i = 1..length; identical stream ids give
/// bit-identical output.
CoefficientVector sample_observation(const CoefficientVector& theta, NoiseLevel n,
                                     std::uint64_t length, std::uint64_t stream_id);

double ball_norm(const BallSpec& spec, const CoefficientVector& theta);

/// Exact comparison ball_norm <= M, no tolerance.
bool contains(const BallSpec& spec, const CoefficientVector& theta);

/// Quadratic convex hull: for p < 2, the corresponding p = 2 ball; for
/// p >= 2 the space is already quadratically convex and is returned as is.
BallSpec quadratic_hull(const BallSpec& spec);

/// Single spike of maximal ball-feasible height at flat index i
/// (Lp: M i^{-s}; Besov: M 2^{-js} at the level of i). The height is nudged
/// down by at most a few ulps so that contains() holds under exact comparison.
CoefficientVector spike_config(const BallSpec& spec, std::uint64_t i);
CoefficientVector spike_config(const BallSpec& spec, BesovIndex jk);

/// Minimal schedule geometry adversarial_family needs from an estimator:
/// quadratic-part length m and number of threshold blocks (block j is
/// (2^{j-1} m, 2^j m] with tau_j = 2j).
struct ScheduleView {
    std::uint64_t m;
    std::uint64_t blocks;
};

/// Deterministic worst-case surrogate family: the zero vector, the index-1
/// spike of height M, one max-height spike at each block's first index for
/// blocks 1..blocks+2, near-threshold multi-spike configurations
/// (n h^2 in {tau_j/2, tau_j, 2 tau_j}, k maximal within the ball), and one
/// dense saturating configuration. Membership and determinism are the
/// contract; worst-case optimality is not.
std::vector<CoefficientVector> adversarial_family(const BallSpec& spec, ScheduleView sched,
                                                  NoiseLevel n);

}  // namespace qfe::model

#endif
