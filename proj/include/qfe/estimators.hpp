#ifndef QFE_ESTIMATORS_HPP
#define QFE_ESTIMATORS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qfe/analytics.hpp"
#include "qfe/model.hpp"

namespace qfe::estimators {

using model::BallSpec;
using model::CoefficientVector;
using model::NoiseLevel;

enum class Tail { soft, hard, none };

/// Block-threshold schedule: quadratic part on [1, m], then blocks
/// j = 1, 2, ... covering (2^{j-1} m, 2^j m] with tau_i = 2 ceil(log2(i/m))
/// = 2j on block j, and per-block centering constants mu_{n,i} (soft) or
/// rho_{n,i} (hard). blocks == kInfinite means the tail never ends; the sum
/// is then truncated at the observation length when evaluating data.
struct ThresholdSchedule {
    static constexpr std::uint64_t kInfinite = ~std::uint64_t{0};

    std::uint64_t m = 1;
    std::uint64_t blocks = 0;
    Tail tail = Tail::none;

    bool infinite() const { return blocks == kInfinite; }

    /// tau_i for i > m.
    double tau(std::uint64_t i) const;
    /// Block number of index i > m (1-based).
    std::uint64_t block_of(std::uint64_t i) const;
    /// Centering constant for block j at noise level n.
    double centering(NoiseLevel n, std::uint64_t j) const;
    /// One-past-last covered index (finite schedules only).
    std::uint64_t end_index() const;
};

struct Q1Rule {
    std::uint64_t m;
};

struct DiagQuadRule {
    std::vector<double> a;  // a_1..a_len; zero beyond
    double c;
};

/// One estimator of the family: the truncated quadratic Q1(m), a
/// threshold rule with schedule, or an arbitrary diagonal quadratic rule.
struct EstimatorSpec {
    std::variant<Q1Rule, ThresholdSchedule, DiagQuadRule> rule;
    std::string provenance;

    const ThresholdSchedule* schedule() const {
        return std::get_if<ThresholdSchedule>(&rule);
    }
};

enum class Name { q1, q2, q3, q4, q5, q6, qtilde };

struct MakeParams {
    std::optional<double> gamma;       // q4
    std::optional<double> r;           // q6
    std::optional<std::uint64_t> m_override;
};

/// Resolve a named estimator at noise level n. "log n" in the m and block
/// formulas is the natural logarithm. m = max(1, floor(formula)), with the
/// floor snapped to the nearest integer when the formula lands within
/// relative 1e-9 of one (pow can round an exact power just below it).
/// j_star solves the block inequality exactly and is 0 when no block fits.
EstimatorSpec make_estimator(Name name, const BallSpec& ball, NoiseLevel n,
                             const MakeParams& params = {});

/// Evaluate the rule on an observation vector. Requires the observations to
/// cover the rule (quadratic length, finite schedules in full); infinite
/// schedules are truncated at the observation length.
double estimate(const EstimatorSpec& spec, const CoefficientVector& y, NoiseLevel n);

/// Solve for alpha on the constant-rate curve p/(1+2ps) = 2-r given p;
/// errors when the solution leaves 0 < alpha < 1/(2p) or s <= 0.
double omega_r_alpha(double p, double r);

/// Threshold value of alpha above which the gamma-truncated adaptive rule
/// is fully efficient: 1/(2p) + (1/(2p) - 1/2 + 1/(4 gamma))_+.
double q4_efficiency_region(double p, double gamma);

/// Schedule geometry used by the adversarial family; infinite schedules are
/// capped at ceil(log2 n) blocks for family construction.
model::ScheduleView schedule_view(const EstimatorSpec& spec, NoiseLevel n);

/// Convenience overload building the family from an estimator.
std::vector<CoefficientVector> adversarial_family(const BallSpec& ball,
                                                  const EstimatorSpec& est, NoiseLevel n);

}  // namespace qfe::estimators

#endif
