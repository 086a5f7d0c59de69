#ifndef QFE_DETECT_HPP
#define QFE_DETECT_HPP

#include <cstdint>
#include <vector>

#include "qfe/estimators.hpp"
#include "qfe/model.hpp"

namespace qfe::detect {

using estimators::EstimatorSpec;
using model::BallSpec;
using model::CoefficientVector;
using model::NoiseLevel;

enum class Decision { accept, reject };

/// The estimator-induced test: reject the null iff q_hat > a/2 (the
/// boundary q_hat = a/2 is accepted).
Decision decide(double q_hat, double a);

struct TestOutcome {
    double type1;      // empirical rejection rate at theta = 0
    double max_type2;  // max over alternatives of empirical acceptance rate
    double sum;        // type1 + max_type2
    std::uint64_t replicates;
    double a;
};

/// Empirical error rates of the induced test. Every alternative must carry
/// Q(theta) >= a. Observation draws are keyed by (master_seed, hypothesis,
/// replicate) only, so across calls with the same seed the rates are
/// pathwise monotone in a. workers = 0 picks hardware concurrency.
TestOutcome error_rates(const EstimatorSpec& spec, NoiseLevel n, double a,
                        const std::vector<CoefficientVector>& alternatives,
                        std::uint64_t replicates, std::uint64_t master_seed,
                        unsigned workers = 0);

/// Smallest a on the bisection grid (20 geometric steps over
/// [n^-2, M^2]) whose induced test has type I + max type II <= gamma.
/// Alternatives are the adversarial-family members rescaled down so
/// Q(theta) = a exactly; members with Q < a are dropped, never inflated.
/// Throws when no bracket point achieves the constraint.
double calibrate_a(const EstimatorSpec& spec, NoiseLevel n, double gamma, const BallSpec& ball,
                   std::uint64_t replicates, std::uint64_t master_seed, unsigned workers = 0);

/// The error rates calibrate_a sees at level a (identical draws and
/// drop/rescale rules), so its bisection postcondition can be verified
/// exactly from outside.
TestOutcome calibration_error_rates(const EstimatorSpec& spec, NoiseLevel n, double a,
                                    const BallSpec& ball, std::uint64_t replicates,
                                    std::uint64_t master_seed, unsigned workers = 0);

/// Optimal testing-rate exponent 1 - p/(2(1+2ps)) on its valid branch
/// (0 < p < 2, alpha <= 1/(2p)); refuses out-of-branch inputs.
double testing_exponent(double p, double alpha);

}  // namespace qfe::detect

#endif
